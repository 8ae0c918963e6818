"""Command line entry point: simulate | preprocess | train | evaluate |
fuse | bench | report.

Exit codes: 0 success, 1 validation error (bad flags/config, missing
upstream artifact), 2 runtime failure.
"""

import argparse
import sys

from . import workflow
from .config import (
    RunConfig,
    _parse_dims,
    _parse_int_list,
    _parse_modalities,
    apply_overrides,
    dump_config,
    load_config,
)
from .errors import BlockcastError, ConfigError, MissingArtifactError

STAGES = {
    "simulate": workflow.stage_simulate,
    "preprocess": workflow.stage_preprocess,
    "train": workflow.stage_train,
    "evaluate": workflow.stage_evaluate,
    "fuse": workflow.stage_fuse,
    "bench": workflow.stage_bench,
    "report": workflow.stage_report,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; usage errors are 1
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> _Parser:
    parser = _Parser(
        prog="blockcast",
        description="Multi-modal mmWave blockage prediction workflow",
    )
    sub = parser.add_subparsers(dest="stage", required=True)
    for stage in STAGES:
        p = sub.add_parser(stage, help=f"run the {stage} stage")
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--root", help="dataset root (default: $BLOCKCAST_DATA or ./data)")
        p.add_argument("--seed", type=int, help="base RNG seed threaded everywhere")
        p.add_argument("--seeds", type=int, help="number of scenarios to simulate")
        p.add_argument("--jobs", type=int, help="worker pool size for simulate/preprocess")
        p.add_argument("--scale", choices=("paper", "desk"), help="model size preset")
        p.add_argument("--k", type=int, help="prediction horizon count")
        p.add_argument("--modalities", help="comma list or 'all'")
        p.add_argument("--train-seeds", help="comma list of training seeds")
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", type=int)
        p.add_argument("--lr", type=float)
        p.add_argument("--blockers", type=int, help="blockers per scenario")
        p.add_argument("--duration", type=int, help="steps per scenario")
        p.add_argument("--bev-dims", help="BEV override dims, e.g. 700x1200")
        p.add_argument("--camera-size", help="camera tensor dims, e.g. 256x256")
        p.add_argument("--bench-reps", type=int, help="timing repetitions (>=100)")
        p.add_argument("--train-seed", type=int,
                       help="which trained seed to evaluate/bench (default: first)")
        p.add_argument("--format", choices=("md", "csv"), default="md",
                       help="report output format")
        p.add_argument("--dump-config", action="store_true",
                       help="print the effective config and exit")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    return apply_overrides(
        cfg,
        root=args.root,
        seed=args.seed,
        seeds=args.seeds,
        jobs=args.jobs,
        scale=args.scale,
        k=args.k,
        modalities=_parse_modalities(args.modalities) if args.modalities else None,
        train_seeds=_parse_int_list(args.train_seeds) if args.train_seeds else None,
        epochs=args.epochs,
        batch_size=args.batch_size,
        lr=args.lr,
        n_blockers=args.blockers,
        duration_steps=args.duration,
        bev_dims=_parse_dims(args.bev_dims) if args.bev_dims else None,
        camera_size=_parse_dims(args.camera_size) if args.camera_size else None,
        bench_reps=args.bench_reps,
    )


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"blockcast: config error: {exc}", file=sys.stderr)
        return 1
    if args.dump_config:
        print(dump_config(cfg), end="")
        return 0
    try:
        if args.stage in ("evaluate", "bench", "fuse"):
            STAGES[args.stage](cfg, train_seed=args.train_seed)
        elif args.stage == "report":
            result = STAGES[args.stage](cfg)
            if args.format == "csv":
                print((cfg.data_root / "metrics.csv").read_text(), end="")
            else:
                print(result["markdown"])
        else:
            STAGES[args.stage](cfg)
    except (ConfigError, MissingArtifactError) as exc:
        print(f"blockcast: {exc}", file=sys.stderr)
        return 1
    except BlockcastError as exc:
        print(f"blockcast: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"blockcast: unexpected failure: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
