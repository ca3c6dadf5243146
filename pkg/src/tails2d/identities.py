"""Pointwise identity checker.

Each identity is evaluated on seeded smooth test fields phi(tau, r) (a Gaussian
bump times a random polynomial, times cos(m theta)).  Every derivative is a
fourth-order centred difference applied to closed-form callables, so nested
operators are composed exactly as written.  An identity holds when the
mismatch between its two sides shrinks by about 16 per halving of the step.

The wave operator has an independent reference: the divergence form
``-d_t^2 phi + (G/r) d_r(G r d_r phi) - m^2 A^2 r^-2 phi`` in (t, r)
coordinates, with d_t = T and d_r|_t = Z.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ENTRIES = ("a", "b", "c", "d", "e", "f", "g", "h")
LABELS = {
    "a": "double-null and (tau, r) forms of the wave operator",
    "b": "equation for psi = r^1/2 phi",
    "c": "equation for Psi0 = r^1/2 G Z phi0",
    "d": "elliptic form L(G^1/2 psi) = -F[G^1/2 T psi] + G^-3/2 r^1/2 box phi",
    "e": "r^p multiplier identity for f = r g",
    "f": "first commutator [box, rL] phi",
    "g": "coefficient facts for -r g'' - g'",
    "h": "modified T multiplier identity",
}
DEFAULT_STEPS = (0.02, 0.01, 0.005)
RATIO_BAND = (12.0, 20.0)


# -- difference operators on callables --------------------------------------

def _d_tau(f, d):
    return lambda tau, r: (f(tau - 2 * d, r) - 8 * f(tau - d, r) + 8 * f(tau + d, r) - f(tau + 2 * d, r)) / (12 * d)


def _d_r(f, d):
    return lambda tau, r: (f(tau, r - 2 * d) - 8 * f(tau, r - d) + 8 * f(tau, r + d) - f(tau, r + 2 * d)) / (12 * d)


def _d2_tau(f, d):
    return lambda tau, r: (-f(tau - 2 * d, r) + 16 * f(tau - d, r) - 30 * f(tau, r)
                           + 16 * f(tau + d, r) - f(tau + 2 * d, r)) / (12 * d * d)


def _d2_r(f, d):
    return lambda tau, r: (-f(tau, r - 2 * d) + 16 * f(tau, r - d) - 30 * f(tau, r)
                           + 16 * f(tau, r + d) - f(tau, r + 2 * d)) / (12 * d * d)


def _d_1d(g, d):
    return lambda r: (g(r - 2 * d) - 8 * g(r - d) + 8 * g(r + d) - g(r + 2 * d)) / (12 * d)


class Calculus:
    """Frame derivatives of callables phi(tau, r) at difference step ``d``."""

    def __init__(self, bg, fol, d, m=0):
        self.bg, self.fol, self.d, self.m = bg, fol, d, m

    # coefficients
    def G(self, r):
        return self.bg.G(r)

    def Gh(self, r):
        return self.bg.G(r) * self.fol.h(r)

    # vector fields
    def T(self, f):
        g = _d_tau(f, self.d)
        return lambda tau, r: 0.5 * g(tau, r)

    def X(self, f):
        return _d_r(f, self.d)

    def L(self, f):
        Tf, Xf = self.T(f), self.X(f)
        return lambda tau, r: self.Gh(r) * Tf(tau, r) + self.G(r) * Xf(tau, r)

    def Lbar(self, f):
        Tf, Xf = self.T(f), self.X(f)
        return lambda tau, r: (2.0 - self.Gh(r)) * Tf(tau, r) - self.G(r) * Xf(tau, r)

    def Z(self, f):
        Tf, Xf = self.T(f), self.X(f)
        return lambda tau, r: Xf(tau, r) + (self.fol.h(r) - 1.0 / self.G(r)) * Tf(tau, r)

    def rL(self, f):
        Lf = self.L(f)
        return lambda tau, r: r * Lf(tau, r)

    # the wave operator, three ways
    def box_divergence(self, f):
        """-d_t^2 + (G/r) d_r(G r d_r) - m^2 A^2 / r^2 with d_t = T, d_r|_t = Z."""
        bg, m = self.bg, self.m
        TTf = self.T(self.T(f))
        Zf = self.Z(f)
        flux = lambda tau, r: bg.G(r) * r * Zf(tau, r)
        Zflux = self.Z(flux)
        return lambda tau, r: (-TTf(tau, r) + bg.G(r) / r * Zflux(tau, r)
                               - m * m * bg.A(r) ** 2 / r**2 * f(tau, r))

    def box_double_null(self, f):
        bg, m = self.bg, self.m
        LbL = self.Lbar(self.L(f))
        Lf, Lbf = self.L(f), self.Lbar(f)
        return lambda tau, r: (-LbL(tau, r) + 0.5 / r * bg.G(r) * (Lf(tau, r) - Lbf(tau, r))
                               - m * m * bg.A(r) ** 2 / r**2 * f(tau, r))

    def box_tau_r(self, f):
        bg, fol, m, d = self.bg, self.fol, self.m, self.d
        TT = lambda tau, r: 0.25 * _d2_tau(f, d)(tau, r)
        XT = self.X(self.T(f))
        Tf, Xf = self.T(f), self.X(f)
        XX = _d2_r(f, d)

        def out(tau, r):
            G, dG, h, dh = bg.G(r), bg.dG(r), fol.h(r), fol.dh(r)
            Gh = G * h
            dGh = dG * h + G * dh
            inner = (-h * (2.0 - Gh) * TT(tau, r) - (2.0 - 2.0 * Gh) * XT(tau, r)
                     + (dGh - (1.0 - Gh) / r) * Tf(tau, r) + G * XX(tau, r)
                     + (G + r * dG) / r * Xf(tau, r) - m * m * bg.A(r) ** 2 / (G * r * r) * f(tau, r))
            return G * inner

        return out


# -- test fields --------------------------------------------------------------

@dataclass(frozen=True)
class TestField:
    """Gaussian in (tau, r) times a cubic polynomial with seeded coefficients."""

    coeffs: tuple
    tau0: float
    r0: float
    width: float

    def __call__(self, tau, r):
        x = (tau - self.tau0) / self.width
        y = (r - self.r0) / self.width
        c = self.coeffs
        poly = c[0] + c[1] * x + c[2] * y + c[3] * x * y + c[4] * y * y + c[5] * x * x * y
        return poly * np.exp(-0.5 * (x * x + y * y))


def random_field(rng, r0=2.0):
    coeffs = tuple(rng.uniform(-1.0, 1.0, 6))
    return TestField(coeffs, float(rng.uniform(1.0, 3.0)), float(r0 + rng.uniform(-0.5, 0.5)),
                     float(rng.uniform(1.2, 2.0)))


def sample_points(rng, n=48, r_lo=0.4, r_hi=6.0):
    tau = rng.uniform(0.0, 4.0, n)
    r = rng.uniform(r_lo, r_hi, n)
    return tau, r


# -- individual identities ----------------------------------------------------
# Each returns (lhs, rhs) callables built from a Calculus and a test field.

def _identity_a(C, phi):
    return C.box_double_null(phi), C.box_tau_r(phi)


def _identity_a_oracle(C, phi):
    return C.box_divergence(phi), C.box_tau_r(phi)


def _identity_b(C, phi):
    bg, m = C.bg, C.m
    psi = lambda tau, r: np.sqrt(r) * phi(tau, r)
    box = C.box_divergence(phi)
    LbL = C.Lbar(C.L(psi))
    lhs = lambda tau, r: np.sqrt(r) * box(tau, r)

    def rhs(tau, r):
        G, dG = bg.G(r), bg.dG(r)
        return (-LbL(tau, r) + 0.25 / r**2 * G * (G - 2.0 * r * dG) * psi(tau, r)
                - m * m * bg.A(r) ** 2 / r**2 * psi(tau, r))

    return lhs, rhs


def _identity_c(C, phi):
    bg = C.bg
    Zphi = C.Z(phi)
    Psi = lambda tau, r: np.sqrt(r) * bg.G(r) * Zphi(tau, r)
    Zbox = C.Z(C.box_divergence(phi))
    LbL = C.Lbar(C.L(Psi))
    lhs = lambda tau, r: np.sqrt(r) * bg.G(r) * Zbox(tau, r)

    def rhs(tau, r):
        G, dG = bg.G(r), bg.dG(r)
        return -LbL(tau, r) - 0.75 / r**2 * G * (G - 2.0 / 3.0 * r * dG) * Psi(tau, r)

    return lhs, rhs


def script_L_potential(bg, r, m=0):
    """Zeroth-order part of the elliptic operator (angular term included)."""
    G, dG, ddG = bg.G(r), bg.dG(r), bg.ddG(r)
    return (0.25 / r**2 * (1.0 - 2.0 * r * dG / G + (r * dG / G) ** 2 - 2.0 * r * r * ddG / G)
            - m * m * bg.A(r) ** 2 / (G * G * r * r))


def _identity_d(C, phi, sign=-1.0):
    bg, fol = C.bg, C.fol
    chi = lambda tau, r: np.sqrt(bg.G(r) * r) * phi(tau, r)  # G^1/2 psi
    XXchi = _d2_r(chi, C.d)
    Tchi = C.T(chi)
    XTchi = C.X(Tchi)
    TTchi = C.T(Tchi)
    box = C.box_divergence(phi)

    def lhs(tau, r):
        return XXchi(tau, r) + script_L_potential(bg, r, C.m) * chi(tau, r)

    def rhs(tau, r):
        G, dG, h, dh = bg.G(r), bg.dG(r), fol.h(r), fol.dh(r)
        Gh = G * h
        dGh = dG * h + G * dh
        F = (-h * (2.0 - Gh) / G * TTchi(tau, r) - 2.0 * (1.0 - Gh) / G * XTchi(tau, r)
             + (dG / G * (1.0 - Gh) + dGh) / G * Tchi(tau, r))
        return sign * F + G ** -1.5 * np.sqrt(r) * box(tau, r)

    return lhs, rhs


def _identity_e(C, phi, g):
    bg = C.bg
    dg = _d_1d(g, C.d)
    ddg = _d_1d(dg, C.d)
    f = lambda r: r * g(r)
    df = lambda r: g(r) + r * dg(r)
    psi = lambda tau, r: np.sqrt(r) * phi(tau, r)
    Lpsi = C.L(psi)
    Lphi = C.L(phi)
    box = C.box_divergence(phi)
    flux_bar = lambda tau, r: f(r) * Lpsi(tau, r) ** 2

    def flux(tau, r):
        G, dG = bg.G(r), bg.dG(r)
        return 0.25 * G * G * (2.0 * r * dg(r) + g(r) + 2.0 * r * g(r) * dG / G) * phi(tau, r) ** 2

    Lb_bar = C.Lbar(flux_bar)
    L_flux = C.L(flux)
    lhs = lambda tau, r: -2.0 * f(r) * Lpsi(tau, r) * np.sqrt(r) * box(tau, r)

    def rhs(tau, r):
        G, dG, ddG = bg.G(r), bg.dG(r), bg.ddG(r)
        zeroth = 0.5 * G**3 * (-r * ddg(r) - (1.0 + 3.0 * r * dG / G) * dg(r)
                               - g(r) / G * (r * ddG + r * dG * dG / G + dG))
        return (Lb_bar(tau, r) + L_flux(tau, r) + G * r * df(r) * Lphi(tau, r) ** 2
                + zeroth * phi(tau, r) ** 2)

    return lhs, rhs


def _identity_f(C, phi):
    bg = C.bg
    rLphi = C.rL(phi)
    box_rL = C.box_divergence(rLphi)
    rL_box = C.rL(C.box_divergence(phi))
    Zphi = C.Z(phi)
    Psi = lambda tau, r: np.sqrt(r) * bg.G(r) * Zphi(tau, r)
    LPsi = C.L(Psi)
    Lphi = C.L(phi)
    lhs = lambda tau, r: box_rL(tau, r) - rL_box(tau, r)

    def rhs(tau, r):
        G, dG = bg.G(r), bg.dG(r)
        return ((G * G + G * r * dG) / r * Lphi(tau, r) + 2.0 / np.sqrt(r) * G * LPsi(tau, r)
                - G * dG / np.sqrt(r) * Psi(tau, r))

    return lhs, rhs


def _identity_h(C, phi, f, alpha=0.5, f1=None, without_G=False):
    """4 f T(Phi) Ftilde as a divergence, Ftilde = Lbar L Phi + alpha r^-2 (1 + f1) Phi (m = 0).

    The -f' term carries a factor G; ``without_G`` drops it (the identity then fails unless G = 1).
    """
    bg, fol = C.bg, C.fol
    f1 = f1 if f1 is not None else (lambda r: 0.0 * r)
    df = _d_1d(f, C.d)
    LbL = C.Lbar(C.L(phi))
    Lphi, Lbphi, Tphi = C.L(phi), C.Lbar(phi), C.T(phi)
    Q = lambda tau, r: Lbphi(tau, r) ** 2 - Lphi(tau, r) ** 2

    def energy(tau, r):
        Gh = bg.G(r) * fol.h(r)
        return f(r) * ((2.0 - Gh) * Lphi(tau, r) ** 2 + Gh * Lbphi(tau, r) ** 2
                       + 2.0 * alpha / r**2 * (1.0 + f1(r)) * phi(tau, r) ** 2)

    T_energy = C.T(energy)
    X_flux = C.X(lambda tau, r: f(r) * Q(tau, r))

    def lhs(tau, r):
        Ft = LbL(tau, r) + alpha / r**2 * (1.0 + f1(r)) * phi(tau, r)
        return 4.0 * f(r) * Tphi(tau, r) * Ft

    def rhs(tau, r):
        c = 1.0 if without_G else bg.G(r)
        return T_energy(tau, r) + bg.G(r) * X_flux(tau, r) - c * df(r) * Q(tau, r)

    return lhs, rhs


# -- coefficient facts -------------------------------------------------------

@dataclass(frozen=True)
class NamedWeight:
    name: str
    g: object
    exact: object  # closed form of -r g'' - g'
    points: tuple


def named_weights(p=1.5):
    """g = 1, g = r^(p-1) and g1 = (1+r)^-1 with their closed forms."""
    return (
        NamedWeight("one", lambda r: np.ones_like(r), lambda r: np.zeros_like(r), (0.5, 1.0, 2.0, 5.0)),
        NamedWeight(f"r^(p-1), p={p:g}", lambda r: r ** (p - 1.0),
                    lambda r: -((p - 1.0) ** 2) * r ** (p - 2.0), (2.0, 0.5, 5.0)),
        NamedWeight("(1+r)^-1", lambda r: 1.0 / (1.0 + r),
                    lambda r: (1.0 + r) ** -2 - 2.0 * r * (1.0 + r) ** -3, (0.0, 1.0, 3.0)),
    )


def weight_operator(g, d):
    """-r g'' - g' by nested fourth-order differences."""
    dg = _d_1d(g, d)
    ddg = _d_1d(dg, d)
    return lambda r: -r * ddg(r) - dg(r)


# -- driver ------------------------------------------------------------------

@dataclass
class IdentityResult:
    key: str
    label: str
    mismatches: list
    ratios: list
    scale: float
    passed: bool
    values: dict = field(default_factory=dict)

    def as_dict(self):
        return {"key": self.key, "label": self.label, "mismatches": list(self.mismatches),
                "ratios": list(self.ratios), "scale": self.scale, "passed": bool(self.passed),
                "values": dict(self.values)}


@dataclass
class IdentityReport:
    results: list
    steps: tuple
    seed: int

    @property
    def passed(self):
        return all(r.passed for r in self.results)

    def __getitem__(self, key):
        for r in self.results:
            if r.key == key:
                return r
        raise KeyError(key)

    def as_dict(self):
        return {"seed": self.seed, "steps": list(self.steps), "passed": self.passed,
                "entries": [r.as_dict() for r in self.results]}


def _verdict(errs, scale, band=RATIO_BAND, floor=1e-11):
    errs = np.asarray(errs, dtype=float)
    ratios = errs[:-1] / np.maximum(errs[1:], 1e-300)
    if errs[-1] <= floor * max(scale, 1.0):
        return ratios, True  # exact up to roundoff
    return ratios, bool(band[0] <= ratios[-1] <= band[1])


def _run_pair(builder, bg, fol, fields, pts, steps, m):
    tau, r = pts
    errs, scale = [], 0.0
    for d in steps:
        C = Calculus(bg, fol, d, m)
        worst = 0.0
        for phi in fields:
            lhs, rhs = builder(C, phi)
            a, b = lhs(tau, r), rhs(tau, r)
            worst = max(worst, float(np.max(np.abs(a - b))))
            scale = max(scale, float(np.max(np.abs(a))))
        errs.append(worst)
    return errs, scale


def check_identities(bg, fol, suite="all", seed=0, steps=DEFAULT_STEPS, m=2, g=None, f=None,
                     n_fields=2):
    """Evaluate the selected identities on seeded test fields.

    ``suite`` is "all" or an iterable of entry keys from ``ENTRIES``.  ``m``
    is the angular mode used where an entry allows one.  ``g`` is the weight of
    the multiplier identity (default (1+r)^-1) and ``f`` the one of the modified
    T identity (default (1+r)^-1/2).
    """
    keys = ENTRIES if suite == "all" else tuple(suite)
    unknown = [k for k in keys if k not in ENTRIES]
    if unknown:
        raise ValueError(f"unknown identity entries {unknown}")
    steps = tuple(sorted(steps, reverse=True))
    if len(steps) < 2:
        raise ValueError("need at least two step sizes")
    g = g if g is not None else (lambda r: 1.0 / (1.0 + r))
    f = f if f is not None else (lambda r: (1.0 + r) ** -0.5)
    rng = np.random.default_rng(seed)
    fields = [random_field(rng) for _ in range(n_fields)]
    pts = sample_points(rng)
    f1 = lambda r: 0.1 / (1.0 + r * r)

    builders = {
        "a": (lambda C, p: _identity_a(C, p), m),
        "b": (lambda C, p: _identity_b(C, p), m),
        "c": (lambda C, p: _identity_c(C, p), 0),
        "d": (lambda C, p: _identity_d(C, p), m),
        "e": (lambda C, p: _identity_e(C, p, g), 0),
        "f": (lambda C, p: _identity_f(C, p), 0),
        "h": (lambda C, p: _identity_h(C, p, f, f1=f1), 0),
    }
    results = []
    for key in keys:
        if key == "g":
            results.append(_coefficient_facts(steps))
            continue
        builder, mode = builders[key]
        errs, scale = _run_pair(builder, bg, fol, fields, pts, steps, mode)
        values = {}
        if key == "a":
            # the divergence form is the independent reference for both sides
            e2, _ = _run_pair(lambda C, p: _identity_a_oracle(C, p), bg, fol, fields, pts, steps, mode)
            errs = [max(x, y) for x, y in zip(errs, e2)]
        ratios, ok = _verdict(errs, scale)
        results.append(IdentityResult(key, LABELS[key], errs, list(ratios), scale, ok, values))
    return IdentityReport(results, steps, seed)


def _coefficient_facts(steps):
    worst = np.zeros(len(steps))
    values, ok = {}, True
    for w in named_weights():
        r = np.array(w.points, dtype=float)
        exact = w.exact(r)
        errs = [float(np.max(np.abs(weight_operator(w.g, d)(r) - exact))) for d in steps]
        ratios, good = _verdict(errs, float(np.max(np.abs(exact))))
        ok &= good
        worst = np.maximum(worst, errs)
        values[w.name] = {"r": float(r[0]), "closed_form": float(exact[0]),
                          "difference": float(weight_operator(w.g, steps[-1])(r[:1])[0])}
    ratios, _ = _verdict(worst, 1.0)
    return IdentityResult("g", LABELS["g"], list(worst), list(ratios), 1.0, bool(ok), values)
