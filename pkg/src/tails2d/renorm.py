"""The coefficient of the leading late-time profile and the first time integral.

With W = r^{1/2} G^{1/2}, the coefficient is

    Lfrak = int W F[G^{1/2} psi_0] dr / int (W F[G^{1/2} psi_mink] - r G^-1 T^-1 box phi_mink) dr,

where box phi_mink is the true wave operator of phi_mink, so that the
zeta-source below integrates to zero against W.  The zeta-source is
S = -F[G^{1/2} psi-hat_0] - G^{-3/2} r^{1/2} Lfrak T^-1 box phi_mink, and zeta
solves L zeta = S.  Integrals over Sigma(0) use the grid rule up to R_max and
adaptive quadrature of the closed forms beyond it.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import IntegrationWarning, quad as adaptive_quad
from scipy.interpolate import CubicHermiteSpline
from scipy.linalg import solve_banded

from . import grid as gridmod
from .background import mink_fields
from .evolution import InitialData, SourceSpec
from .grid import GridFunction


# -- the operators F and L ----------------------------------------------------

def apply_F(bg, fol, r, chi, Tchi, Xchi):
    """F[chi] = -G^-1 h (2 - Gh) T chi - 2 G^-1 (1 - Gh) X chi + G^-1 (G^-1 G' (1 - Gh) + (Gh)') chi."""
    r = np.asarray(r, dtype=float)
    G, dG = bg.G(r), bg.dG(r)
    h, dh = fol.h(r), fol.dh(r)
    Gh = G * h
    zeroth = (dG / G * (1.0 - Gh) + dG * h + G * dh) / G
    return -h * (2.0 - Gh) / G * Tchi - 2.0 * (1.0 - Gh) / G * Xchi + zeroth * chi


def weighted_F_of_phi(bg, fol, r, phi, Tphi, Xphi):
    """W F[G^{1/2} r^{1/2} phi], written without half-integer powers of r."""
    r = np.asarray(r, dtype=float)
    G, dG = bg.G(r), bg.dG(r)
    h, dh = fol.h(r), fol.dh(r)
    Gh = G * h
    zeroth = (dG / G * (1.0 - Gh) + dG * h + G * dh) / G
    # W chi = r G phi, W X chi = r G (X phi + (G'/2G + 1/2r) phi)
    X_part = Xphi + (0.5 * dG / G) * phi
    return r * G * (-h * (2.0 - Gh) / G * Tphi - 2.0 * (1.0 - Gh) / G * X_part + zeroth * phi) \
        - (1.0 - Gh) * phi


def L_potential(bg, r):
    """Zeroth-order coefficient of L minus r^-2 / 4 (regular at the axis)."""
    r = np.asarray(r, dtype=float)
    G, dG, ddG = bg.G(r), bg.dG(r), bg.ddG(r)
    return 0.25 * (-2.0 * dG / (G * r) + (dG / G) ** 2 - 2.0 * ddG / G)


def apply_L(zeta_over_sqrt_r, grid, bg, m=0):
    """L zeta for zeta = r^{1/2} eta, given eta with parity (-1)^m (fourth order).

    L = X^2 + r^-2/4 (...) - m^2 A^2 G^-2 r^-2, and r^{-1/2} L (r^{1/2} eta)
    = eta'' + eta'/r + (V - 1/(4 r^2)) eta - m^2 A^2 G^-2 r^-2 eta.
    """
    r = grid.r
    parity = 1 if m % 2 == 0 else -1
    gf = GridFunction(np.asarray(zeta_over_sqrt_r, dtype=float), parity)
    e1 = gridmod.d_r(gf, grid).values
    e2 = gridmod.d_rr(gf, grid).values
    eta = gf.values
    q = L_potential(bg, r) - m * m * bg.A(r) ** 2 / (bg.G(r) ** 2 * r * r)
    return np.sqrt(r) * (e2 + e1 / r + q * eta)


# -- closed-form pieces on Sigma(0) ------------------------------------------------

def _mink_slice(bg, fol, r):
    r = np.asarray(r, dtype=float)
    mf = mink_fields(bg, fol.t(0.0, r), r)
    Xphi = mf.Zphi - (fol.h(r) - 1.0 / bg.G(r)) * mf.Tphi
    return mf, Xphi


def mink_densities(bg, fol, r):
    """(d1, d2) = (W F[G^{1/2} psi_mink], r G^-1 T^-1 box phi_mink) on Sigma(0)."""
    r = np.asarray(r, dtype=float)
    mf, Xphi = _mink_slice(bg, fol, r)
    d1 = weighted_F_of_phi(bg, fol, r, mf.phi, mf.Tphi, Xphi)
    d2 = r / bg.G(r) * mf.tinv_box
    return d1, d2


@dataclass(frozen=True)
class MinkTails:
    """Integrals of the phi_mink densities beyond R_max.

    ``q`` = int_R^inf d_i, ``outer`` = int_R^inf rho^-1 G^-1 int_rho^inf d_i.
    """

    R: float
    q: tuple
    outer: tuple


def _quiet_quad(f, a, b, limit=400):
    # roundoff stalls the last digit or two; the tails only need ~1e-10 absolute
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        val, _ = adaptive_quad(f, a, b, limit=limit, epsabs=1e-14, epsrel=1e-11)
    return val


def _tail_integral(f, R):
    # r = x^-2 turns the r^-3/2 decay of the densities into a bounded integrand
    return _quiet_quad(lambda x: 2.0 * f(x**-2) / x**3, 0.0, R**-0.5)


def _cumulative_table(g, R, decades=12):
    """r -> int_R^r g for g = O(x^-2), tabulated once by Gauss-Legendre panels."""
    nodes = np.geomspace(R, 10.0**decades * R, 100 * decades + 1)
    x, w = np.polynomial.legendre.leggauss(8)
    lo, hi = nodes[:-1], nodes[1:]
    half = 0.5 * (hi - lo)
    pts = 0.5 * (hi + lo)[:, None] + half[:, None] * x[None, :]
    cum = np.concatenate([[0.0], np.cumsum(half * (w[None, :] * g(pts)).sum(axis=1))])
    table = CubicHermiteSpline(nodes, cum, g(nodes))
    return lambda r: float(table(min(r, nodes[-1])))


def _stable_tail_densities(bg, fol, R):
    """The two densities at large r, written so nothing cancels.

    With q(r) = r/G - G~ = q(R) - int_R^r x G'/G^2 (bounded), the pieces are
    (uv)^-3/2 [-u (u - q)(1 - G h) + r (G h' u v + G h^2 (u + v)/4 + G' h u v)]
    and 2 q / (s (t + s)) with s = 2 (uv)^1/2, all on Sigma(0).
    """
    qR = float(R / bg.G(R) - bg.tilde_G(R))
    if bg.is_flat:
        q = lambda r: 0.0
    else:
        cum = _cumulative_table(lambda y: y * bg.dG(y) / bg.G(y) ** 2, R)
        q = lambda r: qR - cum(r)

    def dens(r, i):
        G, dG = float(bg.G(r)), float(bg.dG(r))
        h, dh = float(fol.h(r)), float(fol.dh(r))
        u = 1.0 + 0.5 * float(fol.H(r))
        v = u + float(bg.tilde_G(r))
        qr = q(r)
        if i == 0:
            core = -u * (u - qr) * (1.0 - G * h) + r * (G * dh * u * v + 0.25 * G * h * h * (u + v) + dG * h * u * v)
            return core / (u * v) ** 1.5
        s = 2.0 * np.sqrt(u * v)
        return 2.0 * qr / (s * (u + v + s))

    return dens


def mink_tails(bg, fol, R):
    dens = _stable_tail_densities(bg, fol, R)
    qs, outs = [], []
    for i in (0, 1):
        if i == 1 and bg.is_flat:
            qs.append(0.0)
            outs.append(0.0)
            continue
        d = lambda s, i=i: dens(s, i)
        qs.append(_tail_integral(d, R))
        # swap the order: int_R^inf g(rho) int_rho^inf d = int_R^inf d(s) K(s), K(s) = int_R^s g
        if bg.is_flat:
            K = lambda s: np.log(s / R)
        else:
            corr = _cumulative_table(lambda x: (1.0 - 1.0 / bg.G(x)) / x, R)
            K = lambda s: np.log(s / R) - corr(s)
        outs.append(_tail_integral(lambda s: d(s) * K(s), R))
    return MinkTails(float(R), tuple(qs), tuple(outs))


# -- the coefficient --------------------------------------------------------

@dataclass
class RenormContext:
    L_frak: float
    numerator: float
    denominator: float
    D1: float
    D2: float
    compact_numerator: float
    mink_coeff: float
    grid: object = field(repr=False)
    bg: object = field(repr=False)
    fol: object = field(repr=False)
    tails: MinkTails = field(repr=False)
    data: object = field(default=None, repr=False)


def _as_data(data):
    if isinstance(data, InitialData):
        return data
    # grid arrays: wrap as a compact m = 0 profile known only at nodes
    return InitialData({m: (_Nodal(p), _Nodal(q)) for m, (p, q) in data.items()}, 0.0, "arrays")


class _Nodal:
    """Grid values masquerading as a profile; only evaluable on its own grid."""

    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)

    def __call__(self, r):
        if np.shape(r) != self.values.shape:
            raise ValueError("nodal data can only be evaluated on the grid it was sampled on")
        return self.values


def _compact_density(data, grid, bg, fol):
    if 0 not in data.modes:
        return np.zeros(grid.J)
    f, g = data.modes[0]
    phi = np.asarray(f(grid.r), dtype=float)
    Tphi = np.asarray(g(grid.r), dtype=float)
    Xphi = gridmod.d_r(GridFunction(phi, 1), grid).values
    return weighted_F_of_phi(bg, fol, grid.r, phi, Tphi, Xphi)


_TAIL_CACHE = {}


def _tails_for(grid, bg, fol):
    key = (id(bg), id(fol), grid.R_max)
    if key not in _TAIL_CACHE:
        _TAIL_CACHE[key] = (bg, fol, mink_tails(bg, fol, grid.R_max))
    return _TAIL_CACHE[key][2]


def compute_L_frak(data, grid, bg, fol, scale_tol=1e-10):
    data = _as_data(data)
    tails = _tails_for(grid, bg, fol)
    d1, d2 = mink_densities(bg, fol, grid.r)
    D1 = gridmod.quad(d1, grid) + tails.q[0]
    D2 = gridmod.quad(d2, grid) + tails.q[1]
    den = D1 - D2
    scale = abs(D1) + abs(D2)
    if abs(den) < scale_tol * max(scale, 1.0):
        raise ArithmeticError("denominator of Lfrak vanishes: the foliation is outside the well-defined regime")
    num_c = gridmod.quad(_compact_density(data, grid, bg, fol), grid)
    c = float(data.mink_coeff)
    num = num_c + c * D1
    return RenormContext(num / den, num, den, D1, D2, num_c, c, grid, bg, fol, tails, data)


def renormalize(data, ctx):
    """Data of phi-hat = phi - Lfrak phi_mink; modes m >= 1 pass through untouched."""
    data = _as_data(data)
    return InitialData(dict(data.modes), data.mink_coeff - ctx.L_frak, data.name + "-hat")


# -- inverting L ----------------------------------------------------------------

@dataclass
class InverseResult:
    zeta: np.ndarray
    eta: np.ndarray  # zeta / r^{1/2}
    residual: float
    vanishing: float = 0.0


def invert_L_radial(rhs, grid, bg, tail=None, tol=1e-9):
    """Solve L zeta = rhs by the double integral, radially symmetric case.

    ``rhs`` holds node values; ``tail`` = (int_R^inf W rhs, int_R^inf rho^-1 G^-1
    int_rho^inf W rhs) describes the part beyond the grid (zero by default).
    """
    r = grid.r
    G = bg.G(r)
    W = np.sqrt(r * G)
    rhs = np.asarray(rhs, dtype=float)
    q_tail, outer_tail = tail if tail is not None else (0.0, 0.0)
    dens = W * rhs
    total = gridmod.quad(dens, grid) + q_tail
    scale = gridmod.quad(np.abs(dens), grid) + abs(q_tail)
    vanishing = abs(total) / scale if scale > 0 else 0.0
    if vanishing > tol:
        raise ValueError(f"vanishing condition violated (relative residual {vanishing:.3g})")
    I = gridmod.cumulative(dens, grid)
    g = I / (r * G)
    full = gridmod.quad(g, grid)
    suffix = full - gridmod.cumulative(g, grid) + outer_tail
    eta = -np.sqrt(G) * suffix  # zeta / r^{1/2}
    zeta = np.sqrt(r) * eta
    res = np.max(np.abs(apply_L(eta, grid, bg, 0) - rhs))
    return InverseResult(zeta, eta, float(res), float(vanishing))


def invert_L_mode(m, rhs, grid, bg):
    """Second-order banded solve of L zeta = rhs for angular mode m >= 1.

    The unknown is eta = zeta / r^{1/2}, with the parity ghost eta(-r) = (-1)^m eta(r)
    at the axis and the decaying Robin condition eta' = -(m / r) eta at R_max.
    """
    if m < 1:
        raise ValueError("invert_L_mode handles m >= 1; use invert_L_radial for m = 0")
    r, dy = grid.r, grid.dy
    J = grid.J
    s = np.asarray(rhs, dtype=float) / np.sqrt(r)
    alpha = grid.y_r**2
    beta = grid.y_rr + grid.y_r / r
    q = L_potential(bg, r) - m * m * bg.A(r) ** 2 / (bg.G(r) ** 2 * r * r)
    a = alpha / dy**2 - beta / (2.0 * dy)
    b = -2.0 * alpha / dy**2 + q
    c = alpha / dy**2 + beta / (2.0 * dy)
    b = b.copy()
    b[0] += (-1) ** m * a[0]
    a_last = a[-1] + c[-1]
    b[-1] -= c[-1] * 2.0 * dy * m / (r[-1] * grid.y_r[-1])
    ab = np.zeros((3, J))
    ab[0, 1:] = c[:-1]
    ab[1] = b
    ab[2, :-1] = a[1:]
    ab[2, -2] = a_last
    eta = solve_banded((1, 1), ab, s)
    if not np.all(np.isfinite(eta)):
        raise np.linalg.LinAlgError("mode boundary-value problem is singular")
    lhs = np.empty(J)
    lhs[1:-1] = a[1:-1] * eta[:-2] + b[1:-1] * eta[1:-1] + c[1:-1] * eta[2:]
    lhs[0] = b[0] * eta[0] + c[0] * eta[1]
    lhs[-1] = a_last * eta[-2] + b[-1] * eta[-1]
    res = float(np.max(np.abs(np.sqrt(r) * (lhs - s))))
    return InverseResult(np.sqrt(r) * eta, eta, res)


# -- the time integral -------------------------------------------------------

@dataclass
class TimeIntegralBundle:
    zeta: dict  # m -> zeta_m on the grid
    data: dict  # m -> (T^-1 phi-hat_m, phi-hat_m) on Sigma(0)
    source: SourceSpec
    residuals: dict
    vanishing: float
    L_frak: float


def build_time_integral(data, ctx, modes=None):
    """Data and source for the time integral of the renormalised solution."""
    grid, bg, fol = ctx.grid, ctx.bg, ctx.fol
    data = _as_data(data)
    hat = renormalize(data, ctx)
    r = grid.r
    G = bg.G(r)
    on_grid = hat.on_grid(grid, bg, fol)
    if 0 not in on_grid:
        on_grid[0] = (np.zeros(grid.J), np.zeros(grid.J))
    chat = hat.mink_coeff
    L = ctx.L_frak
    d1, d2 = mink_densities(bg, fol, r)
    dc = _compact_density(data, grid, bg, fol)
    # W S = -(compact) - chat d1 - Lfrak d2, tails alike
    WS = -dc - chat * d1 - L * d2
    q_tail = -chat * ctx.tails.q[0] - L * ctx.tails.q[1]
    outer = -chat * ctx.tails.outer[0] - L * ctx.tails.outer[1]
    W = np.sqrt(r * G)
    inv0 = invert_L_radial(WS / W, grid, bg, tail=(q_tail, outer))
    zetas = {0: inv0.zeta}
    out = {0: (inv0.eta / np.sqrt(G), on_grid[0][0])}
    residuals = {0: inv0.residual}
    modes = sorted(on_grid) if modes is None else modes
    for m in modes:
        if m == 0:
            continue
        phi, Tphi = on_grid[m]
        parity = 1 if m % 2 == 0 else -1
        Xphi = gridmod.d_r(GridFunction(phi, parity), grid).values
        rhs = -weighted_F_of_phi(bg, fol, r, phi, Tphi, Xphi) / W
        inv = invert_L_mode(m, rhs, grid, bg)
        zetas[m] = inv.zeta
        out[m] = (inv.eta / np.sqrt(G), phi)
        residuals[m] = inv.residual
    src = SourceSpec("mink-tinv1", -L)
    return TimeIntegralBundle(zetas, out, src, residuals, inv0.vanishing, L)


@dataclass
class TimeIntegralReport:
    max_mismatch: float
    per_probe: dict
    psi_mismatch: float
    taus: np.ndarray


def verify_time_integral(run_tinv, run_phi, L_frak, tau_lo=5.0, tau_hi=None, psi_taus=None):
    """Compare T (T^-1 phi-hat) with phi-hat at the probes, and the Psi-hat_0 relation.

    Probe mismatches are relative to max(|phi|, |phi-hat|) at each sample;
    the Psi relation is compared on whole slices relative to max |Psi-hat_0|.
    """
    bg, fol = run_phi.bg, run_phi.fol
    taus = run_phi.taus
    tau_hi = min(taus[-1], run_tinv.taus[-1]) if tau_hi is None else tau_hi
    sel = (taus >= tau_lo - 1e-12) & (taus <= tau_hi + 1e-12)
    rows = [run_tinv.index(t) for t in taus[sel]]
    per_probe = {}
    worst = 0.0
    for i, rp in enumerate(run_phi.probe_r):
        phi = run_phi.probe_phi[0][sel, i]
        mink = mink_fields(bg, fol.t(taus[sel], rp), np.full(sel.sum(), rp)).phi
        hat = phi - L_frak * mink
        Tinv = 0.5 * run_tinv.probe_pi[0][rows, i]
        scale = np.maximum(np.abs(phi), np.abs(hat))
        mis = float(np.max(np.abs(Tinv - hat) / scale))
        per_probe[float(rp)] = mis
        worst = max(worst, mis)
    psi_taus = taus[sel][:: max(1, int(sel.sum() // 8))] if psi_taus is None else psi_taus
    psi_worst = 0.0
    grid = run_phi.grid
    G, h = bg.G(grid.r), fol.h(grid.r)
    for tau in psi_taus:
        k = run_phi.index(tau)
        mf = mink_fields(bg, fol.t(tau, grid.r), grid.r)
        Xmink = mf.Zphi - (h - 1.0 / G) * mf.Tphi
        phi0 = run_phi.phi[0][k]
        Xphi = gridmod.d_r(GridFunction(phi0, 1), grid).values
        direct = (G * h - 1.0) * (0.5 * run_phi.pi[0][k] - L_frak * mf.Tphi) + G * (Xphi - L_frak * Xmink)
        kt = run_tinv.index(tau)
        TPhi = 0.5 * run_tinv.pi[0][kt]
        T2Phi = run_tinv.accel(0, run_tinv.phi[0][kt], TPhi, run_tinv.source_at(tau))
        XTPhi = gridmod.d_r(GridFunction(TPhi, 1), grid).values
        via = (G * h - 1.0) * T2Phi + G * XTPhi
        # both are Psi / r^{1/2}; whole slice
        scale = np.max(np.abs(np.sqrt(grid.r) * direct))
        if scale > 0:
            psi_worst = max(psi_worst, float(np.max(np.abs(np.sqrt(grid.r) * (via - direct))) / scale))
    return TimeIntegralReport(worst, per_probe, psi_worst, taus[sel])
