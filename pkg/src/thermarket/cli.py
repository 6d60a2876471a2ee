"""Command-line experiment runner.

Subcommands: kinetic, canonical, npt, grand, heatflow, sweep, oracle,
verify. Each reads a flat key = value config file; --seed and --out-dir
override the config. Exit codes: 0 success, 2 config error, 3 failed
verification.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .runners import EXPERIMENT_KINDS, ConfigError, load_config, run_experiment
from .verify import format_report, run_checks

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VERIFY = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="thermarket",
        description="Market thermostatistics experiments and verification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in EXPERIMENT_KINDS:
        cmd = sub.add_parser(kind, help=f"run a {kind} experiment")
        if kind == "verify":
            cmd.add_argument("--config", type=Path, default=None)
            cmd.add_argument("--scale", choices=("quick", "full"), default=None)
        else:
            cmd.add_argument("--config", type=Path, required=True)
        cmd.add_argument("--seed", type=int, default=None,
                         help="override the config seed")
        cmd.add_argument("--out-dir", type=Path, default=None,
                         help="override the config output directory")
    return parser


def _run_verify(args) -> int:
    scale = args.scale
    seed = args.seed
    out_dir = args.out_dir
    if args.config is not None:
        cfg = load_config(args.config, seed_override=args.seed,
                          out_dir_override=str(args.out_dir) if args.out_dir else None,
                          kind_override="verify")
        scale = scale or cfg.params["scale"]
        seed = cfg.seed
        out_dir = cfg.out_dir
    scale = scale or "quick"
    if seed is None:
        seed = 20240601
    if out_dir is None:
        print("verify requires --out-dir (or out_dir in the config)", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = run_checks(scale=scale, seed=seed, workdir=out_dir / "scratch")
    report = format_report(results)
    (out_dir / "verify_report.csv").write_text(report)
    print(report, end="")
    all_pass = all(row.passed for _, rows in results for row in rows)
    print(f"verify: {'ALL PASS' if all_pass else 'FAILURES PRESENT'} (scale={scale})")
    return EXIT_OK if all_pass else EXIT_VERIFY


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "verify":
        try:
            return _run_verify(args)
        except ConfigError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    try:
        config = load_config(
            args.config,
            seed_override=args.seed,
            out_dir_override=str(args.out_dir) if args.out_dir else None,
            kind_override=args.command,
        )
        paths = run_experiment(config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for name, path in paths.items():
        print(f"{name}: {path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
