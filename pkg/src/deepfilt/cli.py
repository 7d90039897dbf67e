"""Command-line experiment runner.

    deepfilt run --config <file> [--profile desk|full] [--table T3]
                 [--out <dir>] [--workers k] [--seed s]

--table runs a predefined benchmark table (overriding --config); --config
runs the experiment described by a flat key-value file. Exit codes:
0 success, 2 validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import config as flatcfg
from .errors import NumericalError, ValidationError
from .harness import SeedPack, apply_profile, config_digest, emit_figure_data, \
    experiment_config_from_flat, run_experiment, run_table_suite, TABLE_IDS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deepfilt",
        description="Windowed neural filtering benchmarks with KF/EKF baselines.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run one experiment or benchmark table")
    run_p.add_argument("--config", type=Path, default=None,
                       help="flat key-value experiment description")
    run_p.add_argument("--profile", choices=("desk", "full"), default=None,
                       help="resize the run (desk: minutes, full: paper scale)")
    run_p.add_argument("--table", default=None, metavar="TID",
                       help=f"predefined table id, one of {', '.join(TABLE_IDS)}")
    run_p.add_argument("--out", type=Path, default=None,
                       help="output directory for CSV/meta/figure files")
    run_p.add_argument("--workers", type=int, default=1,
                       help="parallel sweep-cell evaluators (default 1)")
    run_p.add_argument("--seed", type=int, default=None,
                       help="rebase all experiment seeds on this value")
    return parser


def _run(args) -> int:
    seeds = SeedPack.rebased(args.seed) if args.seed is not None else SeedPack()

    if args.table is not None:
        out = args.out if args.out is not None else Path("out")
        profile = args.profile if args.profile is not None else "desk"
        table = run_table_suite(args.table, profile=profile, output_dir=out,
                                workers=args.workers, seeds=seeds)
        print(f"wrote {out / (args.table.upper() + '.csv')}")
        print(table.to_csv_text(), end="")
        return 0

    if args.config is None:
        raise ValidationError("provide --config FILE or --table TID")
    if not args.config.exists():
        raise ValidationError(f"config file not found: {args.config}")
    cfg = experiment_config_from_flat(flatcfg.load_flat(args.config))
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seeds=seeds)
    cfg = apply_profile(cfg, args.profile)
    out = args.out if args.out is not None else cfg.output_dir
    table = run_experiment(cfg, workers=args.workers)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        table.save_csv(out / f"{cfg.name}.csv")
        table.save_meta(out / f"{cfg.name}.meta")
        emit_figure_data(dataclasses.replace(cfg, sweep=None),
                         n_sample_paths=2, output_dir=out, tag=cfg.name)
        print(f"wrote {out / (cfg.name + '.csv')}")
    print(f"config digest: {config_digest(cfg)}")
    print(table.to_csv_text(), end="")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
