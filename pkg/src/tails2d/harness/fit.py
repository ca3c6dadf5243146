"""Power-law fits and extraction of the late-time coefficient."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

MIN_SAMPLES = 10


@dataclass(frozen=True)
class FitResult:
    name: str
    slope: float
    intercept: float
    stderr: float
    tau_lo: float
    tau_hi: float
    n: int

    def as_dict(self):
        return asdict(self)


def fit_decay(taus, values, window=None, name="series"):
    """Least-squares fit of log(value) against log(tau) inside ``window``.

    ``stderr`` is the standard error of the slope from the residuals.
    """
    taus = np.asarray(taus, dtype=float)
    values = np.asarray(values, dtype=float)
    lo, hi = window if window is not None else (taus.min(), taus.max())
    sel = (taus >= lo - 1e-12) & (taus <= hi + 1e-12)
    t, y = taus[sel], values[sel]
    if t.size < MIN_SAMPLES:
        raise ValueError(f"{name}: {t.size} samples in [{lo}, {hi}], need at least {MIN_SAMPLES}")
    if np.any(t <= 0.0):
        raise ValueError(f"{name}: fit window must have tau > 0")
    if np.any(~(y > 0.0)):
        raise ValueError(f"{name}: nonpositive values in the fit window")
    x, z = np.log(t), np.log(y)
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, z, rcond=None)
    resid = z - A @ np.array([slope, intercept])
    dof = max(t.size - 2, 1)
    sxx = np.sum((x - x.mean()) ** 2)
    stderr = float(np.sqrt(np.sum(resid**2) / dof / sxx)) if sxx > 0 else 0.0
    return FitResult(name, float(slope), float(intercept), stderr, float(t[0]), float(t[-1]), int(t.size))


@dataclass
class CoefficientRecord:
    r0: float
    taus: np.ndarray
    u: np.ndarray
    v: np.ndarray
    L_measured: np.ndarray
    limit: float
    extra_decay: np.ndarray | None
    L_frak: float | None

    def converging(self, tau_lo):
        """True when L_measured approaches ``limit`` monotonically for tau >= tau_lo."""
        sel = self.taus >= tau_lo
        gap = np.abs(self.L_measured[sel] - self.limit)
        steps = np.diff(self.L_measured[sel])
        return bool(np.all(np.diff(gap) <= 0.0) and (np.all(steps >= 0.0) or np.all(steps <= 0.0)))


def extrapolate_limit(u, values, terms=2):
    """Least squares for values = c0 + c1/u + ... + c_terms/u^terms; returns c0."""
    u = np.asarray(u, dtype=float)
    A = np.vstack([u ** (-k) for k in range(terms + 1)]).T
    coef, *_ = np.linalg.lstsq(A, np.asarray(values, dtype=float), rcond=None)
    return float(coef[0])


def extract_coefficient(run, r0, L_frak=None, mode=0, window=None, terms=2):
    """L_measured = phi(tau, r0) (u v)^1/2 at a probe, and its tau -> inf limit.

    The limit comes from a fit in 1/u over ``window`` (default: the second half
    of the run).  With ``L_frak`` given, the series |phi - L_frak phi_mink| (u v)^1/2
    is returned as ``extra_decay``.
    """
    fol = run.fol
    k = int(np.argmin(np.abs(run.probe_r - r0)))
    if abs(run.probe_r[k] - r0) > 1e-12:
        raise ValueError(f"no probe at r = {r0}")
    taus = run.taus
    u = np.asarray(fol.u(taus, r0), dtype=float)
    v = np.asarray(fol.v(taus, r0), dtype=float)
    phi = run.probe_phi[mode][:, k]
    Lm = phi * np.sqrt(u * v)
    lo, hi = window if window is not None else (0.5 * taus[-1], taus[-1])
    sel = (taus >= lo) & (taus <= hi) & (taus > 0)
    limit = extrapolate_limit(u[sel], Lm[sel], terms)
    extra = np.abs(Lm - L_frak) if L_frak is not None else None
    return CoefficientRecord(float(r0), taus, u, v, Lm, limit, extra, L_frak)
