"""Command-line orchestration.

Subcommands: diagnose, correlate, trajectory, ood, heatmap, hf-transfer,
config init. Exit codes: 0 success, 1 usage/config error, 2
generator/transport error, 3 data/pairing error.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .campaign import load_records, run_diagnose, run_trajectory
from .config import RunConfig, default_config
from .errors import (
    ConfigError,
    ContractError,
    DimensionMismatchError,
    EvaluationError,
    PairingError,
    ProtocolError,
    UndefinedStatisticError,
)
from .summaries import (
    correlate,
    detect_ood,
    heatmaps_for_sample,
    hf_transfer,
    write_correlations,
    write_detection,
    write_hf_transfer,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_GENERATOR = 2
EXIT_DATA = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="latentgeo", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=False, help="path to the run config JSON")
        p.add_argument("--out-dir", default=None, help="override the output directory")
        p.add_argument("--jobs", type=int, default=None, help="worker pool size")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")

    p = sub.add_parser("diagnose", help="run the pointwise diagnostic campaign")
    add_common(p)

    p = sub.add_parser("correlate", help="rank correlations over recorded metrics")
    p.add_argument("--records", required=True)
    p.add_argument("--pairs", default="lc:phfe,ls:phfe,ls:lc",
                   help="comma-separated metric pairs, e.g. lc:phfe")
    p.add_argument("--subsample-n", type=int, default=0,
                   help="per-run subsample size (0 = 3/4 of the pool)")
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--baseline", default=None, help="baseline condition for drops")
    p.add_argument("--out-dir", default="runs/correlate")

    p = sub.add_parser("trajectory", help="paired interpolation-trajectory campaign")
    add_common(p)

    p = sub.add_parser("ood", help="grade the efficiency-ratio detector on records")
    p.add_argument("--records", required=True)
    p.add_argument("--positive-label", default="ood")
    p.add_argument("--out-dir", default="runs/ood")

    p = sub.add_parser("heatmap", help="write heatmaps for one (seed, condition) sample")
    add_common(p)
    p.add_argument("--sample-seed", type=int, required=True)
    p.add_argument("--condition", required=True)

    p = sub.add_parser("hf-transfer", help="high-frequency transfer summary")
    p.add_argument("--records", required=True)
    p.add_argument("--n-boot", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="runs/hf_transfer")

    p = sub.add_parser("config", help="configuration utilities")
    config_sub = p.add_subparsers(dest="config_command", required=True)
    init = config_sub.add_parser("init", help="write a config with full defaults")
    init.add_argument("--out", default="latentgeo.json")
    init.add_argument("--kind", default="saddle",
                      help="builtin generator kind to scaffold conditions from")

    return parser


def _load_config(args) -> RunConfig:
    if not getattr(args, "config", None):
        raise ConfigError("--config is required for this command")
    cfg = RunConfig.load(args.config)
    if getattr(args, "out_dir", None):
        cfg.out_dir = args.out_dir
    if getattr(args, "jobs", None):
        cfg.jobs = args.jobs
    if getattr(args, "seed", None) is not None:
        cfg.master_seed = args.seed
    cfg.validate()
    return cfg


def _parse_pairs(raw: str) -> list[tuple[str, str]]:
    pairs = []
    for chunk in raw.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        left, sep, right = chunk.partition(":")
        if not sep or not left or not right:
            raise ConfigError(f"bad metric pair {chunk!r}; expected like lc:phfe")
        pairs.append((left.strip(), right.strip()))
    if not pairs:
        raise ConfigError("no metric pairs given")
    return pairs


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "config":
            cfg = default_config(args.kind)
            cfg.save(args.out)
            print(f"wrote {args.out}")
            return EXIT_OK
        if args.command == "diagnose":
            cfg = _load_config(args)
            records_path = run_diagnose(cfg)
            print(f"records written to {records_path}")
            return EXIT_OK
        if args.command == "trajectory":
            cfg = _load_config(args)
            path, records, comparisons = run_trajectory(cfg)
            print(f"{len(records)} trajectory records written to {path}")
            for comp in comparisons:
                rs = comp.resample
                print(f"  {comp.metric}: ratio {rs.ratio_mean:.4f} +/- {rs.ratio_std:.4f}"
                      f" frac {comp.frac:.3f}")
            return EXIT_OK
        if args.command == "correlate":
            records, errors = load_records(args.records)
            result = correlate(records, _parse_pairs(args.pairs), args.subsample_n,
                               args.runs, args.seed, args.baseline)
            write_correlations(result, args.out_dir)
            if errors:
                print(f"note: {len(errors)} error entries skipped", file=sys.stderr)
            print(json.dumps(result["drops"], indent=2, sort_keys=True))
            return EXIT_OK
        if args.command == "ood":
            records, _ = load_records(args.records)
            result = detect_ood(records, args.positive_label)
            write_detection(result, records, args.out_dir)
            print(json.dumps({"auroc": result.auroc, **result.baselines}, indent=2,
                             sort_keys=True))
            return EXIT_OK
        if args.command == "heatmap":
            cfg = _load_config(args)
            paths = heatmaps_for_sample(cfg, args.sample_seed, args.condition,
                                        cfg.out_dir)
            print(json.dumps(paths, indent=2, sort_keys=True))
            return EXIT_OK
        if args.command == "hf-transfer":
            records, _ = load_records(args.records)
            summary = hf_transfer(records, n_boot=args.n_boot, seed=args.seed)
            write_hf_transfer(summary, args.out_dir)
            print(json.dumps(summary["delta_eta"], indent=2, sort_keys=True))
            return EXIT_OK
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EvaluationError, ProtocolError) as exc:
        print(f"generator error: {exc}", file=sys.stderr)
        return EXIT_GENERATOR
    except (PairingError, UndefinedStatisticError, DimensionMismatchError,
            ContractError, FileNotFoundError, KeyError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def entrypoint() -> None:
    sys.exit(main())
