"""Command line entry point: run, validate and list-examples.

Exit codes: 0 all checks passed, 2 some check failed, 1 configuration or
runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import config as config_mod
from .errors import ConfigError, DomainError
from .experiments import build_metric, run_config

log = logging.getLogger("concircular")


def _resolve(path):
    p = Path(path)
    if p.exists():
        return p
    bundled = config_mod.bundled_dir() / p.name
    if bundled.exists():
        return bundled
    bundled = config_mod.bundled_dir() / f"{p.name}.yaml"
    return bundled if bundled.exists() else p


def cmd_run(args):
    cfg = config_mod.load(_resolve(args.config))
    out = Path(args.out) if args.out else Path(cfg.output_dir or Path("results") / cfg.name)
    run = run_config(cfg, out, seed=args.seed, tol_scale=args.tol_scale)
    for res in run.results:
        print(res.report.summary())
    if run.error:
        print(f"error: {run.error}", file=sys.stderr)
    print(f"outputs in {out} ({run.manifest['status']})")
    return run.exit_code


def cmd_validate(args):
    cfg = config_mod.load(_resolve(args.config))
    build_metric(cfg)
    print(f"{cfg.name}: valid ({len(cfg.experiments)} experiments)")
    return 0


def cmd_list(args):
    for path in config_mod.bundled_configs():
        cfg = config_mod.load(path)
        kinds = ", ".join(e["kind"] for e in cfg.experiments)
        print(f"{path.stem:24s} {cfg.metric['family']:10s} {kinds}")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="concircular",
                                 description="Geodesic circles and concircular fields of Finsler metrics")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the experiments of a config")
    run.add_argument("--config", required=True, help="config path or bundled config name")
    run.add_argument("--out", help="output directory")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--tol-scale", type=float, default=1.0, help="multiply every tolerance")
    run.set_defaults(func=cmd_run)
    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("--config", required=True)
    val.set_defaults(func=cmd_validate)
    ls = sub.add_parser("list-examples", help="list bundled configs")
    ls.set_defaults(func=cmd_list)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "tol_scale", 1.0) <= 0:
        print("error: --tol-scale must be positive", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
