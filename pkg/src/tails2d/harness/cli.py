"""Command line entry point: ``tails2d <command> [options]``."""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import SUITES, ConfigError, load_config, parse_config, schema_text, suite_config
from .fit import fit_decay
from .io import read_csv, write_json
from .run import DECAY_TARGETS, run_experiment

# stages implied by each single-purpose command
COMMANDS = {
    "evolve": ("evolve",),
    "diagnose": ("evolve", "diagnose"),
    "renorm": ("evolve", "renorm"),
    "time-integral": ("evolve", "renorm", "time-integral"),
    "identities": ("identities",),
    "counterexample": ("counterexample",),
}


def _parser():
    p = argparse.ArgumentParser(prog="tails2d", description="Late-time tails of 2+1 waves on hyperboloidal slices.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="config file (section.key = value)")
        sp.add_argument("--out", default="out", help="output directory (default: out)")
        sp.add_argument("--threads", type=int, default=1, help="worker threads for independent evolutions")
        sp.add_argument("--seed", type=int, default=0, help="seed of the randomised identity fields")
        sp.add_argument("--quiet", action="store_true")

    for name in COMMANDS:
        common(sub.add_parser(name, help=f"run the {name} stage(s)"))
    sp = sub.add_parser("suite", help=f"named experiment: {', '.join(SUITES)}")
    sp.add_argument("preset")
    common(sp)
    sp = sub.add_parser("fit", help="fit power laws to an existing energies.csv")
    common(sp)
    sp.add_argument("--input", help="energies file (default: <out>/energies.csv)")
    sub.add_parser("schema", help="print the config keys with their defaults")
    return p


def _fit(args, cfg):
    path = args.input or os.path.join(args.out, "energies.csv")
    header, cols = read_csv(path)
    window = (cfg["fit.tau_lo"], cfg["fit.tau_hi"])
    results = []
    for name in cfg["fit.columns"]:
        if name not in cols:
            results.append({"name": name, "error": "column missing"})
            continue
        try:
            rec = fit_decay(cols["tau"], cols[name], window, name).as_dict()
        except ValueError as exc:
            rec = {"name": name, "error": str(exc)}
        if name in DECAY_TARGETS and "slope" in rec:
            target, tol = DECAY_TARGETS[name]
            rec.update(target=target, tolerance=tol, within=abs(rec["slope"] - target) <= tol)
        results.append(rec)
    write_json(os.path.join(args.out, "fits.json"), {"source": os.path.basename(path), "fits": results})
    for rec in results:
        if "slope" in rec:
            print(f"{rec['name']:>16s}  slope {rec['slope']:+.4f} +- {rec['stderr']:.4f}")
        else:
            print(f"{rec['name']:>16s}  {rec['error']}")
    return 0


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.command == "schema":
        print(schema_text())
        return 0
    try:
        if args.command == "suite":
            overrides = open(args.config, encoding="utf-8").read() if args.config else None
            cfg = suite_config(args.preset, overrides)
        else:
            cfg = load_config(args.config) if args.config else parse_config("")
            if args.command in COMMANDS:
                stages = ", ".join(COMMANDS[args.command])
                cfg = parse_config(f"experiment.stages = {stages}", cfg)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.command == "fit":
        return _fit(args, cfg)
    log = (lambda msg: None) if args.quiet else (lambda msg: print(msg, file=sys.stderr))
    outcome = run_experiment(cfg, args.out, threads=args.threads, seed=args.seed, log=log)
    for name, ok in outcome.checks.items():
        print(f"{name:>16s}  {'PASS' if ok else 'FAIL'}")
    if "L_frak" in outcome.summary:
        print(f"{'L_frak':>16s}  {json.dumps(outcome.summary['L_frak']['value'])}")
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
