"""Stationary, radially symmetric perturbations of 2+1 Minkowski space.

The metric is ``-A(r)^2 dt^2 + B(r)^2 dr^2 + r^2 dtheta^2`` with ``A(0) = B(0)``.
Everything here is vectorised over numpy arrays of radii.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicHermiteSpline

PRESETS = ("minkowski", "default-perturbed")
EPSILON_CAP = 0.1

# Log-spaced table on which tilde_G is tabulated.
_TABLE_RMIN = 1e-3
_TABLE_RMAX = 1e8
_TABLE_SIZE = 2400
_GL_X, _GL_W = leggauss(10)


@dataclass(frozen=True)
class RadialProfile:
    """The profile ``1 + eps * (1 + r^2)^(-k/2)``, an even smooth function of r."""

    preset: str
    eps: float
    k: float

    @property
    def params(self):
        return (self.eps, self.k)

    def value(self, r):
        r = np.asarray(r, dtype=float)
        return 1.0 + self.eps * (1.0 + r * r) ** (-0.5 * self.k)

    def d1(self, r):
        r = np.asarray(r, dtype=float)
        q = 1.0 + r * r
        return -self.eps * self.k * r * q ** (-0.5 * self.k - 1.0)

    def d2(self, r):
        r = np.asarray(r, dtype=float)
        q = 1.0 + r * r
        return -self.eps * self.k * q ** (-0.5 * self.k - 2.0) * (q - (self.k + 2.0) * r * r)

    __call__ = value


@dataclass(frozen=True)
class Background:
    """Metric profiles A, B together with G = A/B and the tortoise-like G~."""

    preset: str
    epsilon: float
    a: float
    A: RadialProfile
    B: RadialProfile
    _fwd: CubicHermiteSpline | None = field(default=None, repr=False, compare=False)
    _inv: CubicHermiteSpline | None = field(default=None, repr=False, compare=False)
    _tail: tuple = field(default=(), repr=False, compare=False)

    @property
    def is_flat(self):
        return self.epsilon == 0.0

    def G(self, r):
        if self.is_flat:
            return np.ones_like(np.asarray(r, dtype=float))
        return self.A(r) / self.B(r)

    def dG(self, r):
        if self.is_flat:
            return np.zeros_like(np.asarray(r, dtype=float))
        A, B = self.A(r), self.B(r)
        return (self.A.d1(r) * B - A * self.B.d1(r)) / B**2

    def ddG(self, r):
        if self.is_flat:
            return np.zeros_like(np.asarray(r, dtype=float))
        A, B = self.A(r), self.B(r)
        A1, B1 = self.A.d1(r), self.B.d1(r)
        num = A1 * B - A * B1
        return (self.A.d2(r) * B - A * self.B.d2(r)) / B**2 - 2.0 * B1 * num / B**3

    def tilde_G(self, r):
        """G~(r) = int_0^r 1/G."""
        r = np.asarray(r, dtype=float)
        if self.is_flat:
            return r.copy() if r.ndim else r + 0.0
        r_end, x_end, slope = self._tail
        out = np.where(r <= r_end, self._fwd(np.minimum(r, r_end)), x_end + slope * (r - r_end))
        return out if out.ndim else float(out)

    def inv_tilde_G(self, x):
        """Inverse of tilde_G on [0, inf)."""
        x = np.asarray(x, dtype=float)
        if self.is_flat:
            return x.copy() if x.ndim else x + 0.0
        r_end, x_end, slope = self._tail
        r = np.where(x <= x_end, self._inv(np.minimum(x, x_end)), r_end + (x - x_end) / slope)
        # One Newton polish brings the Hermite inverse to table accuracy.
        inside = x <= x_end
        r = np.where(inside, r - (self.tilde_G(r) - x) * self.G(r), r)
        r = np.maximum(r, 0.0)
        if not np.all(np.isfinite(r)):
            raise RuntimeError("inverse of tilde_G failed; cached table is corrupted")
        return r if r.ndim else float(r)


def make_background(preset="minkowski", epsilon=0.0, a=2.0, epsilon_cap=EPSILON_CAP):
    """Build a background from a named preset.

    ``default-perturbed`` uses A = 1 + eps (1+r^2)^(-a/2) and
    B = 1 + eps (1+r^2)^(-(a+1)/2); ``minkowski`` ignores ``epsilon``.
    """
    if preset not in PRESETS:
        raise ValueError(f"unknown background preset {preset!r}; choose from {PRESETS}")
    if not a > 1.0:
        raise ValueError(f"flatness exponent a must exceed 1, got {a}")
    if epsilon < 0.0:
        raise ValueError(f"epsilon must be non-negative, got {epsilon}")
    if epsilon > epsilon_cap:
        raise ValueError(f"epsilon={epsilon} exceeds the cap {epsilon_cap} (out of the perturbative regime)")
    if preset == "minkowski":
        epsilon = 0.0
    epsilon = float(epsilon)
    A = RadialProfile(preset, epsilon, float(a))
    B = RadialProfile(preset, epsilon, float(a) + 1.0)
    bg = Background(preset, epsilon, float(a), A, B)
    if bg.is_flat:
        return bg
    fwd, inv, tail = _tabulate_tilde_G(bg)
    object.__setattr__(bg, "_fwd", fwd)
    object.__setattr__(bg, "_inv", inv)
    object.__setattr__(bg, "_tail", tail)
    return bg


def _tabulate_tilde_G(bg):
    nodes = np.concatenate([[0.0], np.geomspace(_TABLE_RMIN, _TABLE_RMAX, _TABLE_SIZE)])
    lo, hi = nodes[:-1], nodes[1:]
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    pts = mid[:, None] + half[:, None] * _GL_X[None, :]
    pieces = half * (_GL_W[None, :] / bg.G(pts)).sum(axis=1)
    values = np.concatenate([[0.0], np.cumsum(pieces)])
    slopes = 1.0 / bg.G(nodes)
    fwd = CubicHermiteSpline(nodes, values, slopes)
    inv = CubicHermiteSpline(values, nodes, 1.0 / slopes)
    return fwd, inv, (nodes[-1], values[-1], slopes[-1])


@dataclass(frozen=True)
class MinkFields:
    """Closed-form values of phi_mink = u^{-1/2} v^{-1/2} and related fields.

    ``box``, ``tinv_box`` and ``tinv2_box`` are A^2 times the wave operator of
    phi_mink and its first and second time integrals; all three vanish on
    Minkowski space.
    """

    phi: np.ndarray
    psi: np.ndarray
    Psi: np.ndarray
    Tphi: np.ndarray
    T2phi: np.ndarray
    Zphi: np.ndarray
    box: np.ndarray
    tinv_box: np.ndarray
    tinv2_box: np.ndarray


def defect(bg, r):
    """kappa(r) = -2 (1 - G~ G / r), the failure of phi_mink to solve the equation.

    Even in r and O(r^2) at the axis; a Taylor expansion is used for r < 1e-4.
    """
    r = np.asarray(r, dtype=float)
    if bg.is_flat:
        return np.zeros_like(r)
    small = r < 1e-4
    rs = np.where(small, 1.0, r)
    full = -2.0 * (1.0 - bg.tilde_G(rs) * bg.G(rs) / rs)
    # G = 1 + g2 r^2 + ..., so G~ G / r = 1 + (2/3) g2 r^2 + O(r^4).
    g2 = 0.5 * float(bg.ddG(0.0))
    series = (4.0 / 3.0) * g2 * r * r
    return np.where(small, series, full)


def mink_fields(bg, t, r):
    """Evaluate phi_mink and its companions at (t, r); requires t > G~(r)."""
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    Gt = bg.tilde_G(r)
    if np.any(t <= Gt):
        raise ValueError("mink_fields evaluated outside the forward light cone t > G~(r)")
    G = bg.G(r)
    s = np.sqrt((t - Gt) * (t + Gt))  # = 2 sqrt(u v)
    s3 = s**3
    kappa = defect(bg, r)
    phi = 2.0 / s
    Zphi = 2.0 * Gt / (G * s3)
    sqr = np.sqrt(r)
    return MinkFields(
        phi=phi,
        psi=sqr * phi,
        Psi=sqr * G * Zphi,
        Tphi=-2.0 * t / s3,
        T2phi=(4.0 * t * t + 2.0 * Gt * Gt) / (s3 * s * s),
        Zphi=Zphi,
        box=kappa / s3,
        tinv_box=-kappa / (s * (t + s)),
        tinv2_box=kappa / (t + s),
    )
