"""Command-line entry point: ``mhdecay <subcommand> [--config PATH] [--out DIR]``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .acceptance import SUITES, exit_status, verify
from .config import ConfigError, default_config, load_config
from .evolution import EvolutionError, SupportError
from .runner import convergence, run

STAGES = {
    "evolve": ("evolve",),
    "modes": ("evolve",),
    "diagnose": ("evolve", "diagnose"),
    "fit": ("evolve", "diagnose", "fit"),
}


def _load(path: str | None):
    if path is None:
        return default_config()
    return load_config(Path(path).read_text())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mhdecay", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("evolve", "evolve the nonlinear or mode sector and write the history"),
        ("modes", "evolve one (s, l) multipole (forces sector = mode)"),
        ("diagnose", "evolve, then compute energies, identities and residual checks"),
        ("fit", "evolve, diagnose and fit decay envelopes along the configured curves"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", metavar="PATH")
        p.add_argument("--out", metavar="DIR", default="out")
    p = sub.add_parser("convergence", help="grid-doubling study with fitted orders")
    p.add_argument("--config", metavar="PATH")
    p.add_argument("--out", metavar="DIR")
    p.add_argument("--levels", type=int, default=3, metavar="N")
    p = sub.add_parser("verify", help="run the acceptance suite")
    p.add_argument("--suite", default="default", choices=sorted(SUITES), metavar="NAME")
    p.add_argument("--out", metavar="DIR")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "verify":
        results = verify(args.suite, emit=print)
        if args.out:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            (out / "acceptance.txt").write_text("".join(r.line() + "\n" for r in results))
        return exit_status(results)
    try:
        cfg = _load(args.config)
        if args.command == "modes":
            cfg = cfg.updated({"sector": "mode"})
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.command == "convergence":
        try:
            report = convergence(cfg, args.levels)
        except ValueError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        print("deltas: " + ", ".join(repr(d) for d in report.deltas))
        print("\n".join(report.lines()))
        if args.out:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            (out / "convergence.ndjson").write_text(report.to_ndjson())
        return 0
    try:
        result = run(cfg, args.out, stages=STAGES[args.command])
    except SupportError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except EvolutionError as exc:
        print(f"evolution aborted: {exc}", file=sys.stderr)
        return 1
    for check in result.checks:
        print(f"[{'PASS' if check.passed else 'FAIL'}] {check.name}: {check.value!r} {check.detail}")
    print(f"run {cfg.run_id}: wrote {', '.join(sorted(result.files + ['run.json']))} to {result.out_dir}")
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
