"""Radial data that is 1 on a growing ball: no uniform local energy decay.

Data phi = chi(r / 2T), T phi = 0 on Sigma(0).  Inside the ingoing cone from
r = 2T the solution is exactly 1, so the space-time integral of phi^2 over
{r <= 1} grows linearly in T, while the weighted data norm of the cutoff is
T-independent for k = 1, p = 0.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy.integrate import quad as adaptive_quad
from scipy.integrate import simpson

from .. import grid as gridmod
from ..background import make_background
from ..evolution import EvolutionConfig, data_presets, evolve
from ..foliation import make_foliation, smoothstep
from ..grid import make_grid

TWO_PI = 2.0 * np.pi


def cutoff_derivative(x, n):
    """n-th derivative of chi(x) = S(2 - x) for x >= 0 (n <= 2)."""
    S = smoothstep(2.0 - np.asarray(x, dtype=float), nder=2)
    return S[n] * (-1.0) ** n


@dataclass(frozen=True)
class CounterexampleRow:
    T: float
    lhs: float
    rhs: float
    ratio: float
    tau_end: float
    tau_protected: float
    max_deviation: float

    def as_dict(self):
        return asdict(self)


@dataclass
class CounterexampleTable:
    rows: list
    k: int
    p: float
    exponent: float
    expected: float

    def as_dict(self):
        return {"k": self.k, "p": self.p, "exponent": self.exponent, "expected": self.expected,
                "rows": [r.as_dict() for r in self.rows]}


def data_side(T, k=1, p=0.0):
    """2 pi sum_{j<k} int (1+r)^p r^(-2j) (d_r^(k-j) chi(r/2T))^2 r dr."""
    total = 0.0
    s = 2.0 * T
    for j in range(k):
        n = k - j
        f = lambda r: (1.0 + r) ** p * r ** (1.0 - 2.0 * j) * (cutoff_derivative(r / s, n) / s**n) ** 2
        total += adaptive_quad(f, s, 2.0 * s, epsabs=0.0, epsrel=1e-12, limit=200)[0]
    return TWO_PI * total


def protected_until(fol, T, r=1.0):
    """Largest tau with (tau, r) inside the ingoing cone {v <= v(0, 2T)}."""
    return float(fol.v(0.0, 2.0 * T) - fol.v(0.0, r))


def counterexample(T_list=(8, 16, 32, 64), k=1, p=0.0, J=1024, cadence=0.25, tau_end=None, threads=1):
    """Table of LHS = 2 pi int int_{r <= 1} phi^2 dr dtau against the data side.

    ``tau_end(T)`` is the length of the time window (default T).  The fitted
    exponent is the log-log slope of LHS / RHS against T.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not 0.0 <= p < 1.0:
        raise ValueError("p must lie in [0, 1)")
    T_list = [float(T) for T in T_list]
    if sorted(T_list) != T_list or len(T_list) < 2:
        raise ValueError("T_list must be ascending with at least two entries")
    bg = make_background("minkowski")
    fol = make_foliation(bg)

    def one(T):
        tau_max = float(tau_end(T)) if tau_end is not None else T
        R_max = 4.0 * T + tau_max + 20.0
        grid = make_grid(R_max, J, "cfl-balanced", fol)
        n_out = int(np.ceil(tau_max / cadence))
        cfg = EvolutionConfig(tau_max=n_out * cadence, cadence=cadence, probes=())
        run = evolve(data_presets("appendixA", T_param=T), grid, bg, fol, cfg)
        inner = grid.r <= 1.0
        ball = np.array([gridmod.quad(run.phi[0][i] ** 2, grid, r_hi=1.0) for i in range(run.taus.size)])
        lhs = TWO_PI * simpson(ball, x=run.taus)
        tau_prot = protected_until(fol, T)
        window = run.taus <= tau_prot
        dev = float(np.max(np.abs(run.phi[0][window][:, inner] - 1.0)))
        rhs = data_side(T, k, p)
        return CounterexampleRow(T, float(lhs), float(rhs), float(lhs / rhs), float(run.taus[-1]), tau_prot, dev)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, T_list))
    else:
        rows = [one(T) for T in T_list]
    logT = np.log([r.T for r in rows])
    logR = np.log([r.ratio for r in rows])
    exponent = float(np.polyfit(logT, logR, 1)[0])
    return CounterexampleTable(rows, k, p, exponent, float(2 * k - 1 - p))
