"""Hyperboloidal foliation, coordinate maps and the null/stationary frames.

The time function is tau = u - 1 - H(r)/2 with H(r) = int_r^inf h.  On each
slice we use T = d_t at fixed r, X = d_r at fixed tau, the null pair
L = G h T + G X, Lbar = (2 - G h) T - G X, and Z = d_r at fixed t.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq
from scipy.special import expit

from .background import Background

C_H = 2.0
_GL_X, _GL_W = leggauss(10)


def smoothstep(x, nder=0):
    """Smooth step built from exp(-1/x): 0 for x <= 0, 1 for x >= 1.

    Returns the value, or a tuple (S, S', S'') when ``nder == 2``.
    """
    x = np.asarray(x, dtype=float)
    inner = (x > 0.0) & (x < 1.0)
    xi = np.where(inner, x, 0.5)
    q = 1.0 / xi - 1.0 / (1.0 - xi)
    s = expit(-q)
    S = np.where(x >= 1.0, 1.0, np.where(inner, s, 0.0))
    if nder == 0:
        return S
    q1 = -1.0 / xi**2 - 1.0 / (1.0 - xi) ** 2
    q2 = 2.0 / xi**3 - 2.0 / (1.0 - xi) ** 3
    ds = -s * (1.0 - s)
    dds = (1.0 - 2.0 * s) * s * (1.0 - s)
    S1 = np.where(inner, ds * q1, 0.0)
    S2 = np.where(inner, dds * q1 * q1 + ds * q2, 0.0)
    return S, S1, S2


def delta_h(C_h=C_H):
    """Polynomial improvement rate 1/(4(C_h + 1)) attached to the foliation."""
    return 0.25 / (C_h + 1.0)


@dataclass(frozen=True)
class FrameSample:
    phi: float
    T: float
    X: float
    L: float
    Lbar: float
    Z: float


@dataclass(frozen=True)
class Foliation:
    bg: Background
    eta_h: float
    r_plateau: float
    c_t: float
    C_h: float = C_H
    _H_table: CubicHermiteSpline | None = field(default=None, repr=False, compare=False)
    _H_knots: tuple = field(default=(), repr=False, compare=False)

    # -- h and its derivatives ---------------------------------------------
    def _pieces(self, r):
        r = np.asarray(r, dtype=float)
        rp = self.r_plateau
        w, w1, w2 = smoothstep((2.0 * rp - r) / rp, nder=2)
        w1, w2 = -w1 / rp, w2 / rp**2
        e = 1.0 + self.eta_h
        tail = self.c_t * (1.0 + r) ** (-e)
        t1 = -e * tail / (1.0 + r)
        t2 = e * (e + 1.0) * tail / (1.0 + r) ** 2
        return w, w1, w2, tail, t1, t2

    def h(self, r):
        w, _, _, tail, _, _ = self._pieces(r)
        return tail + w * (1.0 - tail)

    def dh(self, r):
        w, w1, _, tail, t1, _ = self._pieces(r)
        return t1 + w1 * (1.0 - tail) - w * t1

    def ddh(self, r):
        w, w1, w2, tail, t1, t2 = self._pieces(r)
        return t2 + w2 * (1.0 - tail) - 2.0 * w1 * t1 - w * t2

    def H(self, r):
        """H(r) = int_r^inf h(s) ds."""
        r = np.asarray(r, dtype=float)
        rp = self.r_plateau
        H_rp, H_2rp = self._H_knots
        tail = self.c_t * (1.0 + r) ** (-self.eta_h) / self.eta_h
        mid = self._H_table(np.clip(r, rp, 2.0 * rp))
        out = np.where(r >= 2.0 * rp, tail, np.where(r <= rp, H_rp + (rp - r), mid))
        return out if out.ndim else float(out)

    @property
    def H0(self):
        return float(self.H(0.0))

    # -- coordinate maps ----------------------------------------------------
    def u(self, tau, r):
        return tau + 1.0 + 0.5 * self.H(r)

    def v(self, tau, r):
        return self.u(tau, r) + self.bg.tilde_G(r)

    def t(self, tau, r):
        return 2.0 * self.u(tau, r) + self.bg.tilde_G(r)

    def tau_from_u(self, u, r):
        return u - 1.0 - 0.5 * self.H(r)

    def tau_from_t(self, t, r):
        return 0.5 * (t - self.bg.tilde_G(r)) - 1.0 - 0.5 * self.H(r)

    def r_at_v(self, tau, v):
        """Radius where the slice Sigma(tau) meets the cone {v = const}; 0 if none."""
        f = lambda r: float(self.v(tau, r)) - v
        if f(0.0) >= 0.0:
            return 0.0
        hi = max(1.0, v)
        while f(hi) < 0.0:
            hi *= 2.0
        return brentq(f, 0.0, hi, xtol=1e-13, rtol=1e-15)

    # -- frames -------------------------------------------------------------
    def spacelike_margin(self, r):
        """h (2 - G h): positive exactly when the slices are spacelike."""
        Gh = self.bg.G(r) * self.h(r)
        return self.h(r) * (2.0 - Gh)


def make_foliation(bg, eta_h=0.5, r_plateau=1.0, h_match=None):
    """Plateau-plus-tail foliation function.

    h = w + (1 - w) c_t (1+r)^(-1-eta_h), w a smooth bump equal to 1 on
    [0, r_plateau] and 0 beyond 2 r_plateau, c_t = (1 + 2 r_plateau)^(1+eta_h) h_match.
    The default h_match puts the tail value at r_plateau equal to 1, which
    makes h non-increasing with 0 < h <= 1.
    """
    if not 0.0 < eta_h <= 1.0:
        raise ValueError(f"eta_h must lie in (0, 1], got {eta_h}")
    if r_plateau < 1.0:
        raise ValueError(f"r_plateau must be >= 1, got {r_plateau}")
    if h_match is None:
        h_match = ((1.0 + r_plateau) / (1.0 + 2.0 * r_plateau)) ** (1.0 + eta_h)
    c_t = (1.0 + 2.0 * r_plateau) ** (1.0 + eta_h) * h_match
    fol = Foliation(bg, float(eta_h), float(r_plateau), float(c_t))

    rp = fol.r_plateau
    nodes = np.linspace(rp, 2.0 * rp, 4001)
    lo, hi = nodes[:-1], nodes[1:]
    half = 0.5 * (hi - lo)
    pts = 0.5 * (hi + lo)[:, None] + half[:, None] * _GL_X[None, :]
    pieces = half * (_GL_W[None, :] * fol.h(pts)).sum(axis=1)
    H_2rp = c_t * (1.0 + 2.0 * rp) ** (-eta_h) / eta_h
    values = H_2rp + np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]])
    table = CubicHermiteSpline(nodes, values, -fol.h(nodes))
    object.__setattr__(fol, "_H_table", table)
    object.__setattr__(fol, "_H_knots", (float(values[0]), float(H_2rp)))

    r = np.concatenate([np.linspace(0.0, 4.0 * rp, 4001), np.geomspace(4.0 * rp, 1e8, 2000)])
    hv = fol.h(r)
    if np.any(hv <= 0.0) or np.any(hv >= 2.0):
        raise ValueError("foliation misconfigured: h leaves (0, 2)")
    if np.any(fol.spacelike_margin(r) <= 0.0):
        raise ValueError("foliation misconfigured: slices are not spacelike")
    return fol


def frame_convert(fol, r, phi, dphi_dtau, dphi_dr):
    """Frame components from the coordinate derivatives (d_tau at fixed r, d_r at fixed tau)."""
    G = fol.bg.G(r)
    Gh = G * fol.h(r)
    T = 0.5 * dphi_dtau
    X = dphi_dr
    L = Gh * T + G * X
    Lbar = (2.0 - Gh) * T - G * X
    Z = (L - T) / G
    return FrameSample(phi, T, X, L, Lbar, Z)


def causal_outer_radius(fol, tau_max, v_max, margin=5.0):
    """Outer radius whose domain of influence stays outside {v <= v_max}.

    The outer edge at time tau sits at v(tau, R) >= v(0, R), so it suffices that
    v(0, R) >= v_max; ``margin`` (in r) is added on top.
    """
    if tau_max < 0 or v_max < 0:
        raise ValueError("tau_max and v_max must be non-negative")
    return fol.r_at_v(0.0, v_max) + margin
