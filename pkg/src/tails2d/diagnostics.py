"""Derived fields, energies on truncated slices, and the source/data norms.

Mode normalisation: phi = sum_m phi_m e_m(theta) with e_0 = 1 and
e_m = sqrt(2) cos(m theta), so every mode carries the angular factor 2 pi and
d_theta acts on the energy density as m^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from . import grid as gridmod
from .background import mink_fields
from .evolution import EvolutionConfig, SourceSpec, evolve
from .grid import NONE, GridFunction

TWO_PI = 2.0 * np.pi
MAX_T_ORDER = 6
MAX_RL_ORDER = 2


def fd_weights(x0, x, nder):
    """Fornberg weights for the nder-th derivative at x0 from nodes x."""
    x = np.asarray(x, dtype=float)
    n = x.size
    c = np.zeros((n, nder + 1))
    c1, c4 = 1.0, x[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, nder)
        c2, c5, c4 = 1.0, c4, x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, nder]


def _tau_derivative(series, taus, k, nder):
    """nder-th tau-derivative of a snapshot series at output index k (fourth order)."""
    n = len(taus)
    width = 2 * ((nder + 1) // 2) + 3  # centred stencils of fourth order
    if n < width:
        raise ValueError(f"need at least {width} snapshots for a tau-derivative of order {nder}")
    lo = min(max(k - width // 2, 0), n - width)
    if lo != k - width // 2:
        width += 1  # one-sided stencils need an extra node to keep fourth order
        lo = min(max(k - width // 2, 0), n - width)
    idx = np.arange(lo, lo + width)
    w = fd_weights(taus[k], taus[idx], nder)
    return np.tensordot(w, series[idx], axes=1)


# -- fields carrying their T-derivatives ---------------------------------------

@dataclass(frozen=True)
class Tower:
    """A field f = r^{half/2} P with T^k P stored for k = 0..K.

    ``parity`` refers to P; fields built from several pieces carry NONE and use
    one-sided extrapolation at the axis.
    """

    levels: tuple
    parity: int = NONE
    half: bool = False
    m: int = 0

    @property
    def order(self):
        return len(self.levels) - 1

    def _need(self, k):
        if k > self.order:
            raise ValueError(f"T-derivative of order {k} exceeds the available order {self.order}")


@dataclass
class SliceContext:
    grid: object
    bg: object
    fol: object

    def __post_init__(self):
        r = self.grid.r
        self.r = r
        self.G = self.bg.G(r)
        self.h = self.fol.h(r)
        self.Gh = self.G * self.h
        self.sqr = np.sqrt(r)
        self.jr = np.sqrt(2.0 + r * r)  # <r>

    def dP(self, f, k):
        f._need(k)
        return gridmod.d_r(GridFunction(f.levels[k], f.parity), self.grid).values

    def value(self, f, k=0):
        f._need(k)
        return self.sqr * f.levels[k] if f.half else f.levels[k]

    def X(self, f, k=0):
        dp = self.dP(f, k)
        if f.half:
            return 0.5 * f.levels[k] / self.sqr + self.sqr * dp
        return dp

    def L(self, f, k=0):
        f._need(k + 1)
        return self.Gh * self.value(f, k + 1) + self.G * self.X(f, k)

    def Lbar(self, f, k=0):
        f._need(k + 1)
        return (2.0 - self.Gh) * self.value(f, k + 1) - self.G * self.X(f, k)

    def rL(self, f):
        """The tower of (rL) f, one T-order shorter."""
        f._need(1)
        out = []
        for k in range(f.order):
            P = self.r * (self.Gh * f.levels[k + 1] + self.G * self.dP(f, k))
            if f.half:
                P = P + 0.5 * self.G * f.levels[k]
            out.append(P)
        return Tower(tuple(out), NONE, f.half, f.m)

    def rX(self, f):
        out = []
        for k in range(f.order + 1):
            P = self.r * self.dP(f, k)
            if f.half:
                P = P + 0.5 * f.levels[k]
            out.append(P)
        return Tower(tuple(out), NONE, f.half, f.m)

    def T(self, f):
        f._need(1)
        return Tower(f.levels[1:], f.parity, f.half, f.m)

    def Psi0(self, f):
        """Psi_0 = r^{1/2} G Z phi_0 = r^{1/2}((Gh - 1) T phi + G X phi)."""
        f._need(1)
        out = [(self.Gh - 1.0) * f.levels[k + 1] + self.G * self.dP(f, k) for k in range(f.order)]
        return Tower(tuple(out), NONE, True, f.m)

    def radiation(self, f):
        """psi = r^{1/2} f."""
        if f.half:
            raise ValueError("field already carries the r^{1/2} weight")
        return Tower(f.levels, f.parity, True, f.m)


# -- slices ------------------------------------------------------------------

@dataclass
class DerivedSlice:
    """All mode fields on one slice, with T-derivatives up to ``t_order``.

    ``phi[m]`` is the tower of phi_m (or of phi-hat when renormalised).
    """

    tau: float
    ctx: SliceContext
    phi: dict
    renormalised: bool = False
    L_frak: float = 0.0

    @property
    def modes(self):
        return sorted(self.phi)

    def psi(self, m):
        return self.ctx.radiation(self.phi[m])

    @property
    def Psi0(self):
        return self.ctx.Psi0(self.phi[0])

    def rL(self, m, n=1):
        f = self.phi[m]
        for _ in range(n):
            f = self.ctx.rL(f)
        return f


def _mink_tower(bg, fol, tau, r, order):
    """T^k phi_mink for k = 0..order (closed forms)."""
    t = fol.t(tau, r)
    Gt = bg.tilde_G(r)
    s2 = (t - Gt) * (t + Gt)
    s = np.sqrt(s2)
    a2 = Gt * Gt
    out = [2.0 / s, -2.0 * t / s**3, (4.0 * t * t + 2.0 * a2) / s**5,
           -(12.0 * t**3 + 18.0 * t * a2) / s**7,
           (48.0 * t**4 + 144.0 * t * t * a2 + 18.0 * a2 * a2) / s**9,
           -30.0 * t * (8.0 * t**4 + 40.0 * a2 * t * t + 15.0 * a2 * a2) / s**11,
           90.0 * (16.0 * t**6 + 120.0 * a2 * t**4 + 90.0 * a2 * a2 * t * t + 5.0 * a2**3) / s**13]
    if order > MAX_T_ORDER:
        raise ValueError(f"closed-form T-derivatives of phi_mink stop at order {MAX_T_ORDER}")
    return out[:order + 1]


def derive_slice(run, tau, renorm=None, t_order=3):
    """Build the mode towers on Sigma(tau) from the buffered snapshots.

    T phi = pi / 2 exactly; higher T-derivatives come from fourth-order
    differencing of pi across neighbouring snapshots.
    """
    if not 1 <= t_order <= MAX_T_ORDER:
        raise ValueError(f"t_order must lie in [1, {MAX_T_ORDER}]")
    k = run.index(tau)
    ctx = SliceContext(run.grid, run.bg, run.fol)
    towers = {}
    for m in run.modes:
        levels = [run.phi[m][k], 0.5 * run.pi[m][k]]
        for j in range(2, t_order + 1):
            levels.append(2.0 ** (-j) * _tau_derivative(run.pi[m], run.taus, k, j - 1))
        towers[m] = Tower(tuple(levels), run.operators[m].parity, False, m)
    L = 0.0
    if renorm is not None:
        L = float(renorm.L_frak)
        mink = _mink_tower(run.bg, run.fol, run.taus[k], run.grid.r, t_order)
        base = towers.get(0, Tower(tuple(np.zeros(run.grid.J) for _ in range(t_order + 1)), 1, False, 0))
        towers[0] = Tower(tuple(a - L * b for a, b in zip(base.levels, mink)), base.parity, False, 0)
    return DerivedSlice(float(run.taus[k]), ctx, towers, renorm is not None, L)


# -- energies ----------------------------------------------------------------

def _cut(ctx, tau, v_cut):
    if v_cut is None or np.isinf(v_cut):
        return ctx.grid.R_max
    rc = ctx.fol.r_at_v(tau, v_cut)
    if rc > ctx.grid.R_max * (1 + 1e-12):
        raise ValueError(f"v_cut={v_cut} reaches beyond the grid at tau={tau}")
    return rc


def _integrate(ctx, density, r_hi):
    if r_hi <= 0.0:
        return 0.0
    return TWO_PI * gridmod.quad(density, ctx.grid, r_hi=r_hi)


def T_energy(ctx, f, r_hi, k=0):
    """E[f] for one mode: 2 pi int [(L f)^2 + h (Lbar f)^2 + m^2 r^-2 f^2] r dr."""
    v = ctx.value(f, k)
    dens = (ctx.L(f, k) ** 2 + ctx.h * ctx.Lbar(f, k) ** 2) * ctx.r + f.m**2 * v * v / ctx.r
    return _integrate(ctx, dens, r_hi)


def modified_T_energy(ctx, Phi, r_hi, k=0):
    v = ctx.value(Phi, k)
    dens = ctx.L(Phi, k) ** 2 + ctx.h * ctx.Lbar(Phi, k) ** 2 + (Phi.m**2 + 1.0) * v * v / ctx.r**2
    return _integrate(ctx, dens, r_hi)


def rp_energy(ctx, f, delta, r_hi, k=0):
    """E_{1+delta}[f] = 2 pi int [r <r>^delta (L psi)^2 + h <r>^delta f^2] dr."""
    psi = ctx.radiation(f)
    w = ctx.jr**delta
    dens = ctx.r * w * ctx.L(psi, k) ** 2 + ctx.h * w * ctx.value(f, k) ** 2
    return _integrate(ctx, dens, r_hi)


def modified_rp_energy(ctx, Phi, p, r_hi, k=0):
    v = ctx.value(Phi, k)
    w = ctx.jr**p
    dens = w * ctx.L(Phi, k) ** 2 + ctx.h * w * (Phi.m**2 + 1.0) * v * v / ctx.r**2
    return _integrate(ctx, dens, r_hi)


def _rl_chain(ctx, f, n):
    out = [f]
    for _ in range(n):
        out.append(ctx.rL(out[-1]))
    return out


def _fmt(p):
    return f"{p:g}"


@dataclass
class EnergySpec:
    delta: float = 0.1
    p_list: tuple = (0.0, 1.0, 1.1)
    rl_order: int = 2
    t_order: int = 2

    def __post_init__(self):
        if not 0 <= self.rl_order <= MAX_RL_ORDER:
            raise ValueError(f"commutation order is capped at {MAX_RL_ORDER}")
        if not 0 <= self.t_order <= 2:
            raise ValueError("T-derivative order of energies is capped at 2")


@dataclass
class EnergySample:
    tau: float
    v_cut: float
    values: dict


def energies(slc, v_cut, spec=EnergySpec()):
    """Named energies of the slice on Sigma(tau, v_cut).

    Column names: E, E1, E2 (T-energies with (rL)^n commutation), Erp1, Erp1d
    (r-weighted energies of phi_0 with delta = 0 and spec.delta), EtilPsi0,
    Etil{p}Psi0 for p in p_list, Etil_m1 and Etil{p}_m1 for the modes m >= 1.
    A suffix _T{M} marks the same functional applied to T^M.
    """
    ctx = slc.ctx
    r_hi = _cut(ctx, slc.tau, v_cut)
    out = {}
    need = spec.rl_order + spec.t_order + 1
    for M in range(spec.t_order + 1):
        suf = f"_T{M}" if M else ""
        E = np.zeros(spec.rl_order + 1)
        for m in slc.modes:
            f = slc.phi[m]
            if f.order < need:
                raise ValueError("slice lacks the T-derivatives needed for these energies")
            chain = _rl_chain(ctx, f, spec.rl_order)
            for n, g in enumerate(chain):
                E[n] += T_energy(ctx, g, r_hi, M)
        out["E" + suf] = E[0]
        for n in range(1, spec.rl_order + 1):
            out[f"E{n}" + suf] = E[: n + 1].sum()
        if 0 in slc.phi:
            f0 = slc.phi[0]
            out["Erp1" + suf] = rp_energy(ctx, f0, 0.0, r_hi, M)
            out["Erp1d" + suf] = rp_energy(ctx, f0, spec.delta, r_hi, M)
            P0 = ctx.Psi0(f0)
            if P0.order >= M + 1:  # Psi_0 costs one T-derivative more than phi
                out["EtilPsi0" + suf] = modified_T_energy(ctx, P0, r_hi, M)
                for p in spec.p_list:
                    out[f"Etil{_fmt(p)}Psi0" + suf] = modified_rp_energy(ctx, P0, p, r_hi, M)
        high = [m for m in slc.modes if m >= 1]
        if high:
            out["Etil_m1" + suf] = sum(modified_T_energy(ctx, ctx.radiation(slc.phi[m]), r_hi, M) for m in high)
            for p in spec.p_list:
                out[f"Etil{_fmt(p)}_m1" + suf] = sum(
                    modified_rp_energy(ctx, ctx.radiation(slc.phi[m]), p, r_hi, M) for m in high)
    return EnergySample(slc.tau, float(v_cut), out)


@dataclass
class EnergySeries:
    samples: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, s):
        if self.samples and s.tau <= self.samples[-1].tau:
            raise ValueError("energy samples must have strictly increasing tau")
        self.samples.append(s)

    @property
    def taus(self):
        return np.array([s.tau for s in self.samples])

    def column(self, name):
        return np.array([s.values[name] for s in self.samples])

    @property
    def names(self):
        return list(self.samples[0].values) if self.samples else []


def energy_series(run, v_cut, spec=EnergySpec(), taus=None, renorm=None):
    taus = run.taus if taus is None else taus
    series = EnergySeries(meta={"v_cut": v_cut})
    t_order = spec.rl_order + spec.t_order + 2
    for tau in taus:
        slc = derive_slice(run, tau, renorm, t_order=min(t_order, MAX_T_ORDER))
        series.append(energies(slc, v_cut, spec))
    return series


# -- inhomogeneity norm --------------------------------------------------------

_GL16 = leggauss(16)


def _panels(a, b, n):
    """Gauss-Legendre nodes and weights on [a, b] split into geometric panels."""
    if b <= a:
        return np.empty(0), np.empty(0)
    if a <= 0.0:
        edges = np.concatenate([[0.0], np.geomspace(min(1.0, b), b, n)]) if b > 1.0 else np.linspace(0.0, b, n + 1)
    else:
        edges = np.geomspace(a, b, n + 1)
    edges = np.unique(edges)
    x, w = _GL16
    lo, hi = edges[:-1], edges[1:]
    half = 0.5 * (hi - lo)
    pts = (0.5 * (hi + lo))[:, None] + half[:, None] * x[None, :]
    return pts.ravel(), (half[:, None] * w[None, :]).ravel()


def _source_rL(bg, fol, src, tau, r):
    """(rL) F = r (T F + G d_r F|_t) with T F in closed form and d_r|_t by differences."""
    TF = src.evaluate_T(bg, fol, tau, r)
    t = fol.t(tau, r)
    e = 1e-3 * (1.0 + r)
    # fixed t: shift tau so that t(tau', r') = t
    vals = []
    for c in (-2.0, -1.0, 1.0, 2.0):
        rr = r + c * e
        vals.append(src.evaluate(bg, fol, fol.tau_from_t(t, rr), rr))
    dF = (vals[0] - 8.0 * vals[1] + 8.0 * vals[2] - vals[3]) / (12.0 * e)
    return r * (TF + bg.G(r) * dF)


def inhom_norm(bg, fol, src, p, N, tau1, tau2, v, panels=24):
    """A_{p,N}[F](tau1, tau2, v) by tensor Gauss-Legendre quadrature.

    ``tau2 = inf`` integrates until Sigma(tau, v) is empty.
    """
    if N not in (0, 1):
        raise ValueError("inhomogeneity norm is implemented for N <= 1")
    if src.kind == "none" or (src.kind == "mink-tinv1" and src.amplitude == 0.0):
        return 0.0
    tau_end = v - 1.0 - 0.5 * fol.H0  # Sigma(tau, v) is empty beyond this
    tau2 = min(tau2, tau_end)
    if tau2 <= tau1:
        return 0.0
    taus, wt = _panels(1.0 + tau1, 1.0 + tau2, panels)
    taus = taus - 1.0
    total = 0.0
    for tau, w in zip(taus, wt):
        rc = fol.r_at_v(tau, v)
        if rc <= 0.0:
            continue
        r, wr = _panels(0.0, rc, panels)
        r = np.maximum(r, 1e-12)
        weight = (2.0 + r * r) ** (0.5 * p)
        F = src.evaluate(bg, fol, tau, r)
        dens = weight * F * F
        if N == 1:
            dens = dens + weight * _source_rL(bg, fol, src, tau, r) ** 2
        total += w * TWO_PI * np.dot(wr, dens)
    return float(total)


# -- data norm -------------------------------------------------------------------

def data_slice(data, grid, bg, fol, t_order=4, cadence=0.02, cfl=0.4):
    """Slice at tau = 0 with T-derivatives from a short evolution of the data."""
    cfg = EvolutionConfig(tau_max=8 * cadence, cfl=cfl, dissipation=0.0, cadence=cadence, probes=())
    run = evolve(data, grid, bg, fol, cfg, SourceSpec())
    return derive_slice(run, 0.0, t_order=t_order), run


def data_norm(data, grid, bg, fol, N=2, delta=0.1, L_frak=None):
    """The data norm D_{N, delta} with every sum truncated at N <= 2.

    Integrals run over the whole grid [0, R_max].  ``L_frak`` defaults to the
    value computed from the data.
    """
    if not 0 <= N <= 2:
        raise ValueError("data norm is implemented for N <= 2")
    if L_frak is None:
        from .renorm import compute_L_frak
        L_frak = compute_L_frak(data, grid, bg, fol).L_frak
    slc, _ = data_slice(data, grid, bg, fol, t_order=N + 2)
    ctx = slc.ctx
    R = grid.R_max
    jr = ctx.jr
    total = float(L_frak) ** 2

    def integ(d):
        return _integrate(ctx, d, R)

    def rX_pow(f, n):
        for _ in range(n):
            f = ctx.rX(f)
        return f

    def T_pow(f, m):
        for _ in range(m):
            f = ctx.T(f)
        return f

    if 0 in slc.phi:
        f0 = slc.phi[0]
        psi0 = ctx.radiation(f0)
        P0 = ctx.Psi0(f0)
        for n in range(N + 1):
            for m in range(N + 1 - n):
                g = rX_pow(T_pow(f0, m), n)
                total += np.max(np.abs(np.sqrt(jr) * ctx.value(g))) ** 2
                gp = rX_pow(T_pow(psi0, m), n)
                total += integ(jr ** (3 - delta) * ctx.X(gp) ** 2)
                total += integ(jr ** (2 - delta) * (ctx.value(g, 1) ** 2 + ctx.value(g) ** 2))
        for m in range(N + 1):
            chain = _rl_chain(ctx, T_pow(f0, m), N - m)
            for g in chain:
                total += T_energy(ctx, g, R) + rp_energy(ctx, g, delta, R)
        for m in range(N - 1):
            for g in _rl_chain(ctx, T_pow(P0, m), N - m):
                total += modified_rp_energy(ctx, g, 1.0 + delta, R)
        for n in range(N + 1):
            g = rX_pow(P0, n)
            total += integ(jr**2 * ctx.X(g) ** 2 + ctx.value(g, 1) ** 2 + jr ** (1 - 2 * delta) * ctx.value(g) ** 2)
    for m in (q for q in slc.modes if q >= 1):
        psi = ctx.radiation(slc.phi[m])
        for n1 in range(N + 1):
            ang = float(m) ** n1
            for n2 in range(N + 1 - n1):
                g = rX_pow(psi, n2)
                for n3 in range(N + 1 - n1 - n2):
                    total += (ang * np.max(np.abs(ctx.value(g, n3)))) ** 2
                total += ang**2 * integ(jr ** (3 - delta) * ctx.X(g) ** 2
                                        + jr ** (1 - delta) * (ctx.value(g, 1) ** 2 + ctx.value(g) ** 2))
        for k in range(N + 1):
            for n1 in range(N - k + 1):
                for g in _rl_chain(ctx, T_pow(psi, k), N - k - n1):
                    total += float(m) ** (2 * n1) * modified_rp_energy(ctx, g, 1.0 + delta, R)
    return float(total)
