"""Cell-centred radial grids with parity ghosts and fourth-order calculus.

Nodes sit at y_j = (j + 1/2) dy in a computational coordinate y, mapped to
radius by r(y).  The "cfl-balanced" map is y = (H(0) - H(r)) / 2, along which
outgoing characteristics of the hyperboloidal slices move at unit speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

GHOSTS = 3  # two for the centred stencils, one more for sixth-difference dissipation

EVEN, ODD, NONE = 1, -1, 0

_D1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_D2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0
_EXTRAP = np.array([1.0, -5.0, 10.0, -10.0, 5.0])  # quartic continuation of f[-5:]


@dataclass(frozen=True)
class RadialGrid:
    r: np.ndarray
    y: np.ndarray
    dy: float
    y_r: np.ndarray  # dy/dr at nodes
    y_rr: np.ndarray  # d^2y/dr^2 at nodes
    r_y: np.ndarray  # dr/dy at nodes
    stretch: str
    R_max: float
    fol: object = None

    @property
    def J(self):
        return self.r.size

    def r_of_y(self, y):
        """Radius at computational coordinate y (odd extension for y < 0)."""
        y = np.asarray(y, dtype=float)
        if self.stretch == "uniform":
            return y
        return np.sign(y) * _r_of_y(self.fol, np.abs(y))


@dataclass(frozen=True)
class GridFunction:
    values: np.ndarray
    parity: int = NONE

    def __add__(self, other):
        return GridFunction(self.values + other.values, self.parity if self.parity == other.parity else NONE)

    def __mul__(self, c):
        return GridFunction(c * self.values, self.parity)

    __rmul__ = __mul__


def _r_of_y(fol, y):
    """Invert y = (H(0) - H(r))/2 node by node."""
    H0 = fol.H0
    target = H0 - 2.0 * np.asarray(y, dtype=float)
    rp = fol.r_plateau
    H_rp, H_2rp = fol._H_knots
    out = np.empty_like(target)
    for i, Ht in enumerate(target.ravel()):
        if Ht >= H_rp:
            out.flat[i] = H_rp + rp - Ht
        elif Ht <= H_2rp:
            out.flat[i] = (fol.c_t / (fol.eta_h * Ht)) ** (1.0 / fol.eta_h) - 1.0
        else:
            out.flat[i] = brentq(lambda r: float(fol.H(r)) - Ht, rp, 2.0 * rp, xtol=1e-15, rtol=1e-15)
    return out


def make_grid(R_max, J, stretch="uniform", fol=None):
    """Cell-centred grid with J nodes reaching out to R_max."""
    if int(J) != J or J < 16:
        raise ValueError(f"J must be an integer >= 16, got {J}")
    if R_max <= 0:
        raise ValueError("R_max must be positive")
    J = int(J)
    if stretch == "uniform":
        dy = R_max / J
        y = (np.arange(J) + 0.5) * dy
        ones = np.ones(J)
        return RadialGrid(y.copy(), y, dy, ones, 0.0 * ones, ones, "uniform", float(R_max))
    if stretch != "cfl-balanced":
        raise ValueError(f"unknown stretch {stretch!r}")
    if fol is None:
        raise ValueError("the cfl-balanced stretch needs a foliation")
    y_max = 0.5 * (fol.H0 - float(fol.H(R_max)))
    dy = y_max / J
    y = (np.arange(J) + 0.5) * dy
    r = _r_of_y(fol, y)
    h = fol.h(r)
    return RadialGrid(r, y, dy, 0.5 * h, 0.5 * fol.dh(r), 2.0 / h, "cfl-balanced", float(R_max), fol)


# -- ghosts and derivatives -------------------------------------------------

def pad(values, parity):
    """Append GHOSTS ghost values at both ends (parity at the axis, extrapolation outside)."""
    f = np.asarray(values, dtype=float)
    out = np.empty(f.size + 2 * GHOSTS)
    out[GHOSTS:-GHOSTS] = f
    if parity == NONE:
        for k in range(GHOSTS - 1, -1, -1):
            out[k] = _EXTRAP @ out[k + 5:k:-1]
    else:
        out[:GHOSTS] = parity * f[GHOSTS - 1::-1]
    n = f.size + GHOSTS
    for k in range(GHOSTS):
        out[n + k] = _EXTRAP @ out[n + k - 5:n + k]
    return out


def _apply(stencil, padded, J):
    g = GHOSTS
    acc = np.zeros(J)
    for i, c in enumerate(stencil):
        acc += c * padded[g - 2 + i:g - 2 + i + J]
    return acc


def d_y(values, parity, dy):
    return _apply(_D1, pad(values, parity), np.size(values)) / dy


def d_yy(values, parity, dy):
    return _apply(_D2, pad(values, parity), np.size(values)) / dy**2


def d_r(gf, grid):
    """Radial derivative at fixed slice time; flips parity."""
    vals = gf.values
    out = grid.y_r * d_y(vals, gf.parity, grid.dy)
    return GridFunction(out, -gf.parity)


def d_rr(gf, grid):
    vals = gf.values
    fy = d_y(vals, gf.parity, grid.dy)
    fyy = d_yy(vals, gf.parity, grid.dy)
    return GridFunction(grid.y_r**2 * fyy + grid.y_rr * fy, gf.parity)


def dissipation(values, parity, dy, sigma):
    """Sixth-difference Kreiss-Oliger term sigma/(64 dy) delta^6 f."""
    p = pad(values, parity)
    J = np.size(values)
    g = GHOSTS
    c = (1.0, -6.0, 15.0, -20.0, 15.0, -6.0, 1.0)
    acc = np.zeros(J)
    for i, ci in enumerate(c):
        acc += ci * p[g - 3 + i:g - 3 + i + J]
    return sigma / (64.0 * dy) * acc


# -- quadrature and interpolation ------------------------------------------

def _lagrange_integral(nodes, a, b):
    """Weights w with sum w f(nodes) = int_a^b of the interpolating cubic."""
    n = len(nodes)
    w = np.empty(n)
    for i in range(n):
        others = np.delete(nodes, i)
        coeffs = np.poly(others) / np.prod(nodes[i] - others)
        anti = np.polyint(coeffs)
        w[i] = np.polyval(anti, b) - np.polyval(anti, a)
    return w


def _interval_weights(J):
    """Per-interval integration weights in index units.

    Row k integrates from y_{k-1} to y_k (k = 1..J-1); row 0 covers [0, y_0].
    Interior intervals use the centred four-point rule, edges a one-sided one.
    """
    rows = np.zeros((J, 4))
    starts = np.zeros(J, dtype=int)
    x = np.arange(4, dtype=float)
    rows[0] = _lagrange_integral(x, -0.5, 0.0)
    starts[0] = 0
    centred = _lagrange_integral(x, 1.0, 2.0)
    for k in range(1, J):
        s = min(max(k - 2, 0), J - 4)
        starts[k] = s
        rows[k] = centred if s == k - 2 else _lagrange_integral(x, k - 1 - s, k - s)
    return starts, rows


_WEIGHT_CACHE = {}


def cumulative(values, grid):
    """F_j = int_0^{r_j} f dr at every node (fourth order)."""
    J = grid.J
    if J not in _WEIGHT_CACHE:
        _WEIGHT_CACHE[J] = _interval_weights(J)
    starts, rows = _WEIGHT_CACHE[J]
    g = np.asarray(values, dtype=float) * grid.r_y
    idx = starts[:, None] + np.arange(4)[None, :]
    pieces = (rows * g[idx]).sum(axis=1) * grid.dy
    return np.cumsum(pieces)


def quad(values, grid, weight=None, r_lo=0.0, r_hi=None):
    """int_{r_lo}^{r_hi} f(r) w(r) dr using the grid values of f."""
    f = np.asarray(values, dtype=float)
    if weight is not None:
        f = f * (weight(grid.r) if callable(weight) else weight)
    if r_hi is None:
        r_hi = grid.R_max
    return _integral_to(f, grid, r_hi) - _integral_to(f, grid, r_lo)


def _y_of_r(grid, r):
    if grid.stretch == "uniform":
        return r
    fol = grid.fol
    return 0.5 * (fol.H0 - float(fol.H(r)))


def _integral_to(f, grid, r):
    if r <= 0.0:
        return 0.0
    if r > grid.R_max * (1 + 1e-12):
        raise ValueError("integration limit beyond the grid")
    F = cumulative(f, grid)
    y = _y_of_r(grid, r)
    s = y / grid.dy - 0.5  # fractional index
    J = grid.J
    k = int(np.floor(s))
    if k < 0:
        base, k0 = 0.0, 0
        a, b = -0.5, s
    else:
        k = min(k, J - 1)
        base, k0 = F[k], k
        a, b = float(k), s
    st = min(max(k0 - 1, 0), J - 4)
    g = f[st:st + 4] * grid.r_y[st:st + 4]
    w = _lagrange_integral(np.arange(4.0), a - st, b - st)
    return base + grid.dy * (w @ g)


def interp(gf, grid, r):
    """Cubic interpolation in index space; parity-extended below the first node."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r < 0) or np.any(r > grid.R_max * (1 + 1e-12)):
        raise ValueError("interpolation point outside [0, R_max]")
    vals = pad(gf.values, gf.parity)
    if grid.stretch == "uniform":
        y = r
    else:
        y = np.array([_y_of_r(grid, ri) for ri in r])
    s = y / grid.dy - 0.5 + GHOSTS
    k = np.clip(np.floor(s).astype(int) - 1, 0, vals.size - 4)
    out = np.zeros_like(s)
    for i in range(4):
        li = np.ones_like(s)
        for j in range(4):
            if j != i:
                li *= (s - (k + j)) / (i - j)
        out += li * vals[k + i]
    return out
