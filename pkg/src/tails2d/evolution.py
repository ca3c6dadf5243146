"""Method-of-lines evolution of single angular modes on hyperboloidal slices.

Each mode amplitude phi_m(tau, r) obeys the (tau, r) form of the wave equation,

    h(2 - Gh) T^2 phi = G X^2 phi + r^-1 (G + r G') X phi - m^2 A^2 G^-1 r^-2 phi
                        + ((Gh)' - r^-1 (1 - Gh)) T phi - (2 - 2Gh) X T phi - G^-1 F,

with T = d_tau / 2.  The state is (phi, pi = d_tau phi); space is discretised on a
cell-centred grid with fourth-order stencils, time by classical RK4.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit

from . import grid as gridmod
from .background import defect, mink_fields
from .foliation import smoothstep

G_ = gridmod.GHOSTS


# -- mode coefficients -------------------------------------------------------

@dataclass(frozen=True)
class ModeOperator:
    """Node-wise coefficients of d_tau pi = 4 T^2 phi in the y coordinate."""

    m: int
    parity: int
    dy: float
    ayy: np.ndarray
    ay: np.ndarray
    a0: np.ndarray
    b0: np.ndarray
    by: np.ndarray
    sF: np.ndarray
    max_speed: float
    stiffness: float


def mode_operator(grid, bg, fol, m=0, threshold=1e-8):
    r = grid.r
    G, dG = bg.G(r), bg.dG(r)
    h, dh = fol.h(r), fol.dh(r)
    Gh = G * h
    den = h * (2.0 - Gh)
    if np.min(den) < threshold:
        raise ValueError("coefficient h(2 - Gh) fell below threshold; foliation misconfigured")
    inv = 1.0 / den
    c1 = (G + r * dG) / r
    c2 = (dG * h + G * dh) - (1.0 - Gh) / r
    c3 = 2.0 - 2.0 * Gh
    A2 = bg.A(r) ** 2
    yr, yrr = grid.y_r, grid.y_rr
    a0 = -4.0 * inv * m * m * A2 / (G * r * r)
    speeds = np.maximum(1.0 * np.ones_like(r) * yr * 2.0 / h, yr * 2.0 * G / (2.0 - Gh))
    stiff = float(np.sqrt(np.max(np.abs(a0)))) if m else 0.0
    return ModeOperator(
        m=m,
        parity=1 if m % 2 == 0 else -1,
        dy=grid.dy,
        ayy=4.0 * inv * G * yr**2,
        ay=4.0 * inv * (G * yrr + c1 * yr),
        a0=a0,
        b0=2.0 * inv * c2,
        by=-2.0 * inv * c3 * yr,
        sF=-4.0 * inv / G,
        max_speed=float(np.max(speeds)),
        stiffness=stiff,
    )


# -- compiled kernels ----------------------------------------------------------

@njit(cache=True, nogil=True)
def _fill(f, parity, buf):
    J = f.size
    for j in range(J):
        buf[G_ + j] = f[j]
    if parity != 0:
        for k in range(G_):
            buf[G_ - 1 - k] = parity * f[k]
    else:
        for k in range(G_ - 1, -1, -1):
            buf[k] = 5.0 * buf[k + 1] - 10.0 * buf[k + 2] + 10.0 * buf[k + 3] - 5.0 * buf[k + 4] + buf[k + 5]
    n = J + G_
    for k in range(G_):
        i = n + k
        buf[i] = buf[i - 5] - 5.0 * buf[i - 4] + 10.0 * buf[i - 3] - 10.0 * buf[i - 2] + 5.0 * buf[i - 1]


@njit(cache=True, nogil=True)
def _operator(phi, pi, F, parity, dy, ayy, ay, a0, b0, by, sF, bp, bq, out):
    """out = d_tau pi from the (tau, r) form, with a tabulated source F."""
    _fill(phi, parity, bp)
    _fill(pi, parity, bq)
    c1 = 1.0 / (12.0 * dy)
    c2 = 1.0 / (12.0 * dy * dy)
    for j in range(phi.size):
        i = j + G_
        p_y = (bp[i - 2] - 8.0 * bp[i - 1] + 8.0 * bp[i + 1] - bp[i + 2]) * c1
        p_yy = (-bp[i - 2] + 16.0 * bp[i - 1] - 30.0 * bp[i] + 16.0 * bp[i + 1] - bp[i + 2]) * c2
        q_y = (bq[i - 2] - 8.0 * bq[i - 1] + 8.0 * bq[i + 1] - bq[i + 2]) * c1
        out[j] = ayy[j] * p_yy + ay[j] * p_y + a0[j] * phi[j] + b0[j] * pi[j] + by[j] * q_y + sF[j] * F[j]


@njit(cache=True, nogil=True)
def _ko(buf, j, scale):
    i = j + G_
    return scale * (buf[i - 3] - 6.0 * buf[i - 2] + 15.0 * buf[i - 1] - 20.0 * buf[i]
                    + 15.0 * buf[i + 1] - 6.0 * buf[i + 2] + buf[i + 3])


@njit(cache=True, nogil=True)
def _stage(phi, pi, tau, parity, dy, ayy, ay, a0, b0, by, sF, amp, t0, Gt2, kappa,
           sigma, F, bp, bq, dphi, dpi):
    J = phi.size
    if amp != 0.0:
        for j in range(J):
            t = 2.0 * tau + t0[j]
            s = np.sqrt(t * t - Gt2[j])
            F[j] = -amp * kappa[j] / (s * (t + s))
    _operator(phi, pi, F, parity, dy, ayy, ay, a0, b0, by, sF, bp, bq, dpi)
    scale = sigma / (64.0 * dy)
    for j in range(J):
        dphi[j] = pi[j]
        if sigma != 0.0:
            dphi[j] += _ko(bp, j, scale)
            dpi[j] += _ko(bq, j, scale)


@njit(cache=True, nogil=True)
def _advance(phi, pi, tau, dt, nsteps, parity, dy, ayy, ay, a0, b0, by, sF, amp, t0, Gt2,
             kappa, sigma):
    J = phi.size
    F = np.zeros(J)
    bp = np.zeros(J + 2 * G_)
    bq = np.zeros(J + 2 * G_)
    k1p = np.empty(J); k1q = np.empty(J)
    k2p = np.empty(J); k2q = np.empty(J)
    k3p = np.empty(J); k3q = np.empty(J)
    k4p = np.empty(J); k4q = np.empty(J)
    sp = np.empty(J); sq = np.empty(J)
    for n in range(nsteps):
        _stage(phi, pi, tau, parity, dy, ayy, ay, a0, b0, by, sF, amp, t0, Gt2, kappa, sigma, F, bp, bq, k1p, k1q)
        for j in range(J):
            sp[j] = phi[j] + 0.5 * dt * k1p[j]
            sq[j] = pi[j] + 0.5 * dt * k1q[j]
        _stage(sp, sq, tau + 0.5 * dt, parity, dy, ayy, ay, a0, b0, by, sF, amp, t0, Gt2, kappa, sigma, F, bp, bq, k2p, k2q)
        for j in range(J):
            sp[j] = phi[j] + 0.5 * dt * k2p[j]
            sq[j] = pi[j] + 0.5 * dt * k2q[j]
        _stage(sp, sq, tau + 0.5 * dt, parity, dy, ayy, ay, a0, b0, by, sF, amp, t0, Gt2, kappa, sigma, F, bp, bq, k3p, k3q)
        for j in range(J):
            sp[j] = phi[j] + dt * k3p[j]
            sq[j] = pi[j] + dt * k3q[j]
        _stage(sp, sq, tau + dt, parity, dy, ayy, ay, a0, b0, by, sF, amp, t0, Gt2, kappa, sigma, F, bp, bq, k4p, k4q)
        for j in range(J):
            phi[j] += dt / 6.0 * (k1p[j] + 2.0 * k2p[j] + 2.0 * k3p[j] + k4p[j])
            pi[j] += dt / 6.0 * (k1q[j] + 2.0 * k2q[j] + 2.0 * k3q[j] + k4q[j])
        tau = tau + dt
    return tau


def _advance_python(op, phi, pi, tau, dt, nsteps, source, sigma):
    """RK4 with a source callable tau -> F on the nodes (slower path for custom sources)."""
    J = phi.size
    bp, bq = np.zeros(J + 2 * G_), np.zeros(J + 2 * G_)

    def stage(p, q, s):
        out = np.empty(J)
        _operator(p, q, np.asarray(source(s), dtype=float), op.parity, op.dy, op.ayy, op.ay, op.a0,
                  op.b0, op.by, op.sF, bp, bq, out)
        dp = q.copy()
        if sigma:
            dp += gridmod.dissipation(p, op.parity, op.dy, sigma)
            out += gridmod.dissipation(q, op.parity, op.dy, sigma)
        return dp, out

    for _ in range(nsteps):
        k1 = stage(phi, pi, tau)
        k2 = stage(phi + 0.5 * dt * k1[0], pi + 0.5 * dt * k1[1], tau + 0.5 * dt)
        k3 = stage(phi + 0.5 * dt * k2[0], pi + 0.5 * dt * k2[1], tau + 0.5 * dt)
        k4 = stage(phi + dt * k3[0], pi + dt * k3[1], tau + dt)
        phi += dt / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        pi += dt / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        tau += dt
    return tau


# -- sources -------------------------------------------------------------------

@dataclass(frozen=True)
class SourceSpec:
    """Right-hand side F of A^2 box_g phi = F (mode 0 only).

    ``mink-tinv1`` is amplitude * T^{-1} box phi_mink in closed form; ``custom``
    takes a callable ``func(tau, r)``.
    """

    kind: str = "none"
    amplitude: float = 0.0
    func: Callable | None = None

    def __post_init__(self):
        if self.kind not in ("none", "mink-tinv1", "custom"):
            raise ValueError(f"unknown source kind {self.kind!r}")

    def evaluate(self, bg, fol, tau, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "none" or (self.kind == "mink-tinv1" and self.amplitude == 0.0):
            return np.zeros_like(r)
        if self.kind == "custom":
            return np.asarray(self.func(tau, r), dtype=float)
        return self.amplitude * mink_fields(bg, fol.t(tau, r), r).tinv_box

    def evaluate_T(self, bg, fol, tau, r):
        """T F = dF/dt at fixed r (closed form for the Minkowski source)."""
        r = np.asarray(r, dtype=float)
        if self.kind == "none" or (self.kind == "mink-tinv1" and self.amplitude == 0.0):
            return np.zeros_like(r)
        if self.kind == "custom":
            e = 1e-4
            return (self.func(tau + e, r) - self.func(tau - e, r)) / (4.0 * e)
        return self.amplitude * mink_fields(bg, fol.t(tau, r), r).box


# -- data --------------------------------------------------------------------

@dataclass
class InitialData:
    """Data on Sigma(0): compactly described mode profiles plus c * (phi_mink, T phi_mink).

    ``modes`` maps m to a pair of callables r -> (phi_m, T phi_m).  Keeping the
    phi_mink content as an explicit coefficient lets the renormalisation act on
    it exactly.
    """

    modes: dict = field(default_factory=dict)
    mink_coeff: float = 0.0
    name: str = "custom"

    def on_grid(self, grid, bg, fol):
        out = {}
        for m, (f, g) in self.modes.items():
            out[m] = (np.asarray(f(grid.r), dtype=float), np.asarray(g(grid.r), dtype=float))
        if self.mink_coeff != 0.0:
            mf = mink_fields(bg, fol.t(0.0, grid.r), grid.r)
            p0, t0 = out.get(0, (np.zeros(grid.J), np.zeros(grid.J)))
            out[0] = (p0 + self.mink_coeff * mf.phi, t0 + self.mink_coeff * mf.Tphi)
        return out

    def scaled(self, c):
        modes = {m: (_scale(f, c), _scale(g, c)) for m, (f, g) in self.modes.items()}
        return InitialData(modes, c * self.mink_coeff, self.name)


def _scale(f, c):
    return lambda r: c * f(r)


def _zero(r):
    return np.zeros_like(np.asarray(r, dtype=float))


def data_presets(name, **params):
    """Named families of data on Sigma(0)."""
    A = float(params.get("amplitude", 1.0))
    if name == "gaussian-even":
        rc = float(params.get("r_c", 6.0))
        s = float(params.get("sigma", 1.0))
        f = lambda r: A * (np.exp(-((r - rc) / s) ** 2) + np.exp(-((r + rc) / s) ** 2))
        return InitialData({0: (f, _zero)}, 0.0, name)
    if name == "gaussian-mode-m":
        m = int(params.get("m", 1))
        s = float(params.get("sigma", 1.0))
        f = lambda r: A * r**m * np.exp(-((r / s) ** 2))
        return InitialData({m: (f, _zero)}, 0.0, name)
    if name == "mink-seed":
        return InitialData({}, A, name)
    if name == "appendixA":
        T = float(params.get("T_param", 8.0))
        f = lambda r: A * appendix_cutoff(np.asarray(r, dtype=float) / (2.0 * T))
        return InitialData({0: (f, _zero)}, 0.0, name)
    raise ValueError(f"unknown data preset {name!r}")


def appendix_cutoff(x):
    """chi(x): 1 on [0, 1], 0 on [2, inf), smooth in between."""
    return smoothstep(2.0 - np.abs(x))


# -- runs ----------------------------------------------------------------------

@dataclass(frozen=True)
class EvolutionConfig:
    tau_max: float = 10.0
    cfl: float = 0.4
    dissipation: float = 0.02
    cadence: float = 0.5
    probes: tuple = (0.5, 5.0, 20.0)


@dataclass
class EvolutionRun:
    grid: object
    bg: object
    fol: object
    config: EvolutionConfig
    source: SourceSpec
    dt: float
    taus: np.ndarray
    phi: dict
    pi: dict
    operators: dict
    probe_r: np.ndarray
    probe_phi: dict
    probe_pi: dict

    @property
    def modes(self):
        return sorted(self.phi)

    def index(self, tau):
        k = int(np.argmin(np.abs(self.taus - tau)))
        if abs(self.taus[k] - tau) > 1e-9 * max(1.0, abs(tau)):
            raise ValueError(f"tau={tau} is not an output time of this run")
        return k

    def source_at(self, tau):
        return self.source.evaluate(self.bg, self.fol, tau, self.grid.r)

    def accel(self, m, phi, Tphi, F=None):
        """T^2 phi from (phi, T phi) through the wave equation."""
        op = self.operators[m]
        J = phi.size
        out = np.empty(J)
        F = np.zeros(J) if F is None else np.asarray(F, dtype=float)
        _operator(np.ascontiguousarray(phi, dtype=float), np.ascontiguousarray(2.0 * Tphi, dtype=float), F,
                  op.parity, op.dy, op.ayy, op.ay, op.a0, op.b0, op.by, op.sF,
                  np.zeros(J + 2 * G_), np.zeros(J + 2 * G_), out)
        return 0.25 * out


def rhs(grid, bg, fol, m, phi, pi, tau=0.0, source=None, dissipation=0.0):
    """(d_tau phi, d_tau pi) for one mode, including optional dissipation."""
    op = mode_operator(grid, bg, fol, m)
    source = source or SourceSpec()
    F = source.evaluate(bg, fol, tau, grid.r) if m == 0 else np.zeros(grid.J)
    out = np.empty(grid.J)
    bp, bq = np.zeros(grid.J + 2 * G_), np.zeros(grid.J + 2 * G_)
    _operator(np.asarray(phi, float), np.asarray(pi, float), F, op.parity, op.dy, op.ayy, op.ay,
              op.a0, op.b0, op.by, op.sF, bp, bq, out)
    dphi = np.array(pi, dtype=float)
    if dissipation:
        dphi += gridmod.dissipation(phi, op.parity, grid.dy, dissipation)
        out += gridmod.dissipation(pi, op.parity, grid.dy, dissipation)
    return dphi, out


def time_step(grid, bg, fol, config, modes=(0,)):
    dt = np.inf
    for m in modes:
        op = mode_operator(grid, bg, fol, m)
        dt = min(dt, config.cfl * grid.dy / op.max_speed)
        if op.stiffness:
            dt = min(dt, config.cfl * 2.0 / op.stiffness)
    return dt


def evolve(data, grid, bg, fol, config=EvolutionConfig(), source=None, progress=None):
    """Evolve every mode present in ``data`` (dict m -> (phi, T phi) or InitialData)."""
    if isinstance(data, InitialData):
        data = data.on_grid(grid, bg, fol)
    source = source or SourceSpec()
    modes = sorted(data)
    dt_max = time_step(grid, bg, fol, config, modes)
    per_out = max(1, int(np.ceil(config.cadence / dt_max - 1e-12)))
    dt = config.cadence / per_out
    n_out = int(round(config.tau_max / config.cadence))
    taus = config.cadence * np.arange(n_out + 1)
    probe_r = np.array([p for p in config.probes if p <= grid.R_max], dtype=float)

    r = grid.r
    t0 = fol.t(0.0, r)
    Gt = bg.tilde_G(r)
    kappa = defect(bg, r)

    run = EvolutionRun(grid, bg, fol, config, source, dt, taus, {}, {}, {}, probe_r, {}, {})
    for m in modes:
        op = mode_operator(grid, bg, fol, m)
        run.operators[m] = op
        phi = np.array(data[m][0], dtype=float)
        pi = 2.0 * np.array(data[m][1], dtype=float)
        amp = 0.0
        if m == 0 and source.kind == "mink-tinv1":
            amp = float(source.amplitude)
        custom = m == 0 and source.kind == "custom"
        PHI = np.empty((n_out + 1, grid.J))
        PI = np.empty((n_out + 1, grid.J))
        PHI[0], PI[0] = phi, pi
        tau = 0.0
        for k in range(1, n_out + 1):
            if custom:
                _advance_python(op, phi, pi, tau, dt, per_out, lambda s: source.evaluate(bg, fol, s, r),
                                float(config.dissipation))
            else:
                _advance(phi, pi, tau, dt, per_out, op.parity, op.dy, op.ayy, op.ay, op.a0, op.b0,
                         op.by, op.sF, amp, t0, Gt * Gt, kappa, float(config.dissipation))
            tau = taus[k]
            if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(pi))):
                raise FloatingPointError(f"evolution became non-finite at tau={tau:.6g} (mode {m})")
            PHI[k], PI[k] = phi, pi
            if progress is not None:
                progress(m, tau)
        run.phi[m], run.pi[m] = PHI, PI
        run.probe_phi[m] = np.array([gridmod.interp(gridmod.GridFunction(PHI[k], op.parity), grid, probe_r)
                                     for k in range(n_out + 1)]) if probe_r.size else np.empty((n_out + 1, 0))
        run.probe_pi[m] = np.array([gridmod.interp(gridmod.GridFunction(PI[k], op.parity), grid, probe_r)
                                    for k in range(n_out + 1)]) if probe_r.size else np.empty((n_out + 1, 0))
    return run
