"""Experiment configuration: flat ``section.key = value`` text.

Blank lines and ``#`` comments are ignored.  A line ``[section]`` sets a
prefix for the keys that follow, so ``[grid]`` then ``J = 2048`` is the same
as ``grid.J = 2048``.  Every key must appear in ``SCHEMA``; values are
converted to the schema type and validated.  Errors carry the line number.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

STAGES = ("evolve", "diagnose", "renorm", "time-integral", "identities", "inverses", "counterexample")


def _floats(text):
    items = [s.strip() for s in str(text).split(",") if s.strip()]
    return tuple(float(s) for s in items)


def _names(text):
    return tuple(s.strip() for s in str(text).split(",") if s.strip())


def _bool(text):
    t = str(text).strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _auto_float(text):
    t = str(text).strip().lower()
    return "auto" if t == "auto" else float(t)


# key -> (converter, default, help)
SCHEMA = {
    "experiment.name": (str, "custom", "label written to the summary"),
    "experiment.stages": (_names, ("evolve", "diagnose"), f"comma list from {', '.join(STAGES)}"),
    "background.preset": (str, "minkowski", "minkowski | default-perturbed"),
    "background.epsilon": (float, 0.0, "perturbation size"),
    "background.a": (float, 2.0, "flatness exponent (> 1)"),
    "background.epsilon_cap": (float, 0.1, "largest accepted epsilon"),
    "foliation.eta_h": (float, 0.5, "tail exponent of h, in (0, 1]"),
    "foliation.r_plateau": (float, 1.0, "radius where h starts to decay"),
    "grid.J": (int, 1024, "number of nodes"),
    "grid.stretch": (str, "cfl-balanced", "uniform | cfl-balanced"),
    "grid.R_max": (_auto_float, "auto", "outer radius or auto (causal bound)"),
    "grid.margin": (float, 5.0, "extra radius added to the causal bound"),
    "evolution.tau_max": (float, 200.0, "final slice time"),
    "evolution.cfl": (float, 0.4, "CFL factor"),
    "evolution.dissipation": (float, 0.02, "Kreiss-Oliger strength"),
    "evolution.cadence": (float, 0.5, "output spacing in tau"),
    "evolution.probes": (_floats, (0.5, 5.0, 20.0), "probe radii"),
    "data.preset": (str, "gaussian-even", "gaussian-even | gaussian-mode-m | mink-seed | appendixA"),
    "data.amplitude": (float, 1.0, ""),
    "data.r_c": (float, 6.0, "gaussian centre"),
    "data.sigma": (float, 1.0, "gaussian width"),
    "data.m": (int, 1, "angular mode of gaussian-mode-m"),
    "data.T_param": (float, 8.0, "cutoff scale of appendixA"),
    "diagnostics.v_cut": (float, 400.0, "truncation cone of the energies"),
    "diagnostics.delta": (float, 0.1, ""),
    "diagnostics.p_list": (_floats, (0.0, 1.0, 1.1), "weights of the modified r^p energies"),
    "diagnostics.rl_order": (int, 2, "commutation order N <= 2"),
    "diagnostics.t_order": (int, 2, "T-derivative order M <= 2"),
    "diagnostics.sample_cadence": (float, 5.0, "tau spacing of energy samples"),
    "fit.tau_lo": (float, 20.0, ""),
    "fit.tau_hi": (float, 200.0, ""),
    "fit.columns": (_names, ("E", "E_T1", "E_T2", "Etil0Psi0", "Etil0Psi0_T1"), "energy columns to fit"),
    "renorm.coefficient_probes": (_floats, (0.5, 20.0), "probes compared with the coefficient"),
    "renorm.tolerance": (float, 0.02, "relative tolerance of the limit"),
    "renorm.extra_decay_max": (float, -1.0 / 24.0, "largest accepted extra-decay slope"),
    "time_integral.tau_lo": (float, 5.0, ""),
    "time_integral.tau_hi": (float, 100.0, ""),
    "time_integral.tolerance": (float, 1e-3, ""),
    "identities.m": (int, 2, "angular mode used by the identities that allow one"),
    "identities.steps": (_floats, (0.02, 0.01, 0.005), "difference steps, coarse to fine"),
    "inverses.J_list": (_floats, (512, 1024, 2048, 4096), "resolutions of the manufactured solutions"),
    "counterexample.T_list": (_floats, (8.0, 16.0, 32.0, 64.0), ""),
    "counterexample.k": (int, 1, ""),
    "counterexample.p": (float, 0.0, ""),
    "counterexample.J": (int, 1024, ""),
    "output.snapshot_every": (float, 50.0, "tau spacing of snapshot files (0: none)"),
}


class ConfigError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def section(self, name):
        p = name + "."
        return {k[len(p):]: v for k, v in self.values.items() if k.startswith(p)}

    def with_overrides(self, **kv):
        """Copy with ``section__key=value`` replacements (already typed)."""
        vals = dict(self.values)
        for k, v in kv.items():
            key = k.replace("__", ".")
            if key not in SCHEMA:
                raise ConfigError(f"unknown key {key!r}")
            vals[key] = v
        return validate(vals)

    def canonical(self):
        """Sorted ``key = value`` text; identical configs give identical text."""
        return "".join(f"{k} = {_render(self.values[k])}\n" for k in sorted(self.values))

    @property
    def digest(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def _render(v):
    if isinstance(v, tuple):
        return ", ".join(_render(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v).lower() if isinstance(v, bool) else str(v)


_LINE = re.compile(r"^([A-Za-z_][\w.]*)\s*=\s*(.*)$")
_SECTION = re.compile(r"^\[([A-Za-z_][\w]*)\]$")


def parse_config(text, base=None):
    """Parse config text; keys not given keep the defaults (or ``base``)."""
    vals = dict(base.values) if base is not None else {k: v[1] for k, v in SCHEMA.items()}
    prefix = ""
    seen = {}
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _SECTION.match(line)
        if m:
            prefix = m.group(1) + "."
            continue
        m = _LINE.match(line)
        if not m:
            raise ConfigError(f"cannot parse {raw.strip()!r} (expected key = value)", n)
        key = m.group(1) if "." in m.group(1) else prefix + m.group(1)
        if key not in SCHEMA:
            raise ConfigError(f"unknown key {key!r}", n)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r} (first set on line {seen[key]})", n)
        seen[key] = n
        conv = SCHEMA[key][0]
        try:
            vals[key] = conv(m.group(2).strip())
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", n) from None
    try:
        return validate(vals)
    except ConfigError as exc:
        key = getattr(exc, "key", None)
        raise ConfigError(str(exc), seen.get(key)) from None


def load_config(path, base=None):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), base)


def _fail(key, message):
    err = ConfigError(f"{key}: {message}")
    err.key = key
    raise err


def validate(vals):
    for st in vals["experiment.stages"]:
        if st not in STAGES:
            _fail("experiment.stages", f"unknown stage {st!r}")
    if vals["background.preset"] not in ("minkowski", "default-perturbed"):
        _fail("background.preset", f"unknown preset {vals['background.preset']!r}")
    if vals["grid.stretch"] not in ("uniform", "cfl-balanced"):
        _fail("grid.stretch", f"unknown stretch {vals['grid.stretch']!r}")
    if vals["grid.J"] < 16:
        _fail("grid.J", "must be >= 16")
    R = vals["grid.R_max"]
    if R != "auto" and R <= 0:
        _fail("grid.R_max", "must be positive or auto")
    for key in ("evolution.tau_max", "evolution.cadence", "evolution.cfl", "diagnostics.v_cut",
                "diagnostics.sample_cadence"):
        if vals[key] <= 0:
            _fail(key, "must be positive")
    if vals["evolution.dissipation"] < 0:
        _fail("evolution.dissipation", "must be non-negative")
    if not 0 <= vals["diagnostics.rl_order"] <= 2:
        _fail("diagnostics.rl_order", "capped at 2")
    if not 0 <= vals["diagnostics.t_order"] <= 2:
        _fail("diagnostics.t_order", "capped at 2")
    if vals["data.preset"] not in ("gaussian-even", "gaussian-mode-m", "mink-seed", "appendixA"):
        _fail("data.preset", f"unknown data preset {vals['data.preset']!r}")
    if vals["fit.tau_hi"] <= vals["fit.tau_lo"]:
        _fail("fit.tau_hi", "fit window is empty")
    if len(vals["identities.steps"]) < 2:
        _fail("identities.steps", "need at least two steps")
    if not 0.0 <= vals["counterexample.p"] < 1.0:
        _fail("counterexample.p", "must lie in [0, 1)")
    if vals["counterexample.k"] < 1:
        _fail("counterexample.k", "must be >= 1")
    return ExperimentConfig(dict(vals))


def schema_text():
    """The documented schema, one key per line."""
    return "\n".join(f"{k} = {_render(v[1])}    # {v[2]}" if v[2] else f"{k} = {_render(v[1])}"
                     for k, v in SCHEMA.items())


# -- named suites ------------------------------------------------------------

_FULL = "evolve, diagnose, renorm, time-integral, identities, inverses"

SUITES = {
    "mink-baseline": f"""
        experiment.name = mink-baseline
        experiment.stages = {_FULL}
        grid.J = 4096
    """,
    "perturbed-baseline": f"""
        experiment.name = perturbed-baseline
        experiment.stages = {_FULL}
        background.preset = default-perturbed
        background.epsilon = 0.05
        background.a = 2
        grid.J = 4096
    """,
    "mode-contrast": """
        experiment.name = mode-contrast
        experiment.stages = evolve, renorm
        data.preset = gaussian-mode-m
        data.m = 1
        grid.J = 2048
    """,
    "identities": """
        experiment.name = identities
        experiment.stages = identities
    """,
    "counterexample": """
        experiment.name = counterexample
        experiment.stages = counterexample
    """,
    "smoke": """
        experiment.name = smoke
        experiment.stages = evolve, diagnose, renorm, time-integral
        grid.J = 256
        evolution.tau_max = 40
        diagnostics.v_cut = 80
        diagnostics.sample_cadence = 2
        fit.tau_lo = 10
        fit.tau_hi = 40
        time_integral.tau_hi = 40
        output.snapshot_every = 20
    """,
}


def suite_config(name, overrides=None):
    if name not in SUITES:
        raise ConfigError(f"unknown experiment {name!r}; known: {', '.join(SUITES)}")
    cfg = parse_config(SUITES[name])
    return parse_config(overrides, cfg) if overrides else cfg
