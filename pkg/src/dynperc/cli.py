"""``dynperc`` command line: ``dynperc <command> [flags]``."""
from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigError
from .experiments import COMMANDS, EXIT_CONFIG, ExperimentConfig, execute


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dynperc", description="Critical random graph dynamics toolkit.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("files", nargs="*", help="input files (ghp: two FiniteMeasuredSpace/Collection JSON files)")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--mode", choices=("coal", "frag", "dynperc"), default="dynperc")
    p.add_argument("--rate", type=float, default=None, help="override the window clock rate")
    p.add_argument("--t-max", dest="t_max", type=float, default=1.0)
    p.add_argument("--snapshots", type=_floats, default=())
    p.add_argument("--replicas", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("jsonl", "csv"), default="jsonl")
    p.add_argument("--n-list", dest="n_list", type=_ints, default=())
    p.add_argument("--s", type=float, default=1.0, help="duality: lambda' = lambda + s")
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--samples", type=int, default=10_000, help="Monte-Carlo samples for the K threshold")
    p.add_argument("--lemma", default="all")
    p.add_argument("--instances", type=int, default=500)
    p.add_argument("--ghp-mode", dest="ghp_mode", choices=("exact", "bounds"), default="exact")
    p.add_argument("--tol", type=float, default=1e-6)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = ExperimentConfig(**{k: (tuple(v) if k == "files" else v) for k, v in vars(args).items()})
    try:
        report, code = execute(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.out is None:
        json.dump(report, sys.stdout, sort_keys=True)
        sys.stdout.write("\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
