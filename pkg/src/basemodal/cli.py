"""Command-line interface: run experiments, compare artifacts.

Usage:
    basemodal run --config friction.yaml --out results/ [--seed N] [--threads N]
    basemodal compare ref.csv cand.csv --tol D_free_S6=0.07 [--default-tol 0.01]
    basemodal list-experiments
"""

from __future__ import annotations

import argparse
import sys

import yaml

from .beams import BeamModelError
from .experiments import EXPERIMENTS, ConfigError, run
from .hbm import HbmError
from .identify import IdentificationError
from .io import IoError, SchemaMismatch, compare_tables
from .rig import RigError
from .rom import RomError


def load_config(path):
    with open(path) as fh:
        cfg = yaml.safe_load(fh)
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    return cfg


def _cmd_run(args):
    cfg = load_config(args.config)
    manifest = run(cfg, args.out, seed=args.seed, threads=args.threads)
    print(f"{manifest.experiment}: {len(manifest.artifacts)} artifact(s) "
          f"in {args.out} ({manifest.timings['total_s']:.1f} s)")
    for name in manifest.artifacts:
        print(f"  {name}")
    return 0


def _parse_tols(pairs):
    tols = {}
    for item in pairs or []:
        if "=" not in item:
            raise SystemExit(f"--tol expects column=value, got {item!r}")
        name, val = item.split("=", 1)
        tols[name] = float(val)
    return tols


def _cmd_compare(args):
    tols = _parse_tols(args.tol)
    passed, report = compare_tables(args.reference, args.candidate, tols,
                                    default_tol=args.default_tol)
    for name, err, tol, ok in report:
        print(f"{'PASS' if ok else 'FAIL'} {name}: max rel err "
              f"{err:.3e} (tol {tol:g})")
    if not report:
        print("no columns compared (no tolerances given)")
    print("RESULT:", "PASS" if passed else "FAIL")
    return 0 if passed else 1


def _cmd_list(_args):
    for name in EXPERIMENTS:
        print(name)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="basemodal",
                                description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    pr = sub.add_parser("run", help="run an experiment from a YAML config")
    pr.add_argument("--config", required=True, help="YAML experiment config")
    pr.add_argument("--out", required=True, help="output directory")
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--threads", type=int, default=0)
    pr.set_defaults(func=_cmd_run)

    pc = sub.add_parser("compare", help="compare two CSV artifacts")
    pc.add_argument("reference")
    pc.add_argument("candidate")
    pc.add_argument("--tol", action="append", metavar="COLUMN=RELTOL",
                    help="per-column relative tolerance (repeatable)")
    pc.add_argument("--default-tol", type=float, default=None,
                    help="tolerance for all remaining columns")
    pc.set_defaults(func=_cmd_compare)

    pl = sub.add_parser("list-experiments", help="list available experiments")
    pl.set_defaults(func=_cmd_list)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, IoError, FileNotFoundError, BeamModelError,
            HbmError, IdentificationError, RigError, RomError) as ex:
        print(f"error: {ex}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
