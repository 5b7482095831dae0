"""Command-line entry point: ``auvloc run | compare | map export``."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .bench import MODEL_KINDS, TrialConfig, build_block_world, compare_models, load_config, run_batch
from .world import MapError, save_map


def _load(args) -> TrialConfig:
    cfg = load_config(args.config) if args.config else TrialConfig()
    if args.seed is not None:
        cfg = cfg.with_(seed=args.seed)
    return cfg


def _progress(quiet: bool):
    if quiet:
        return None

    def report(model, i, metrics):
        conv = "NONE" if metrics.convergence_step is None else metrics.convergence_step
        print(f"  {model} trial {i}: final error {metrics.final_error:.3f} m, converged at {conv}", file=sys.stderr)

    return report


def _cmd_run(args) -> int:
    cfg = _load(args)
    if args.model is not None:
        cfg = cfg.with_(model=args.model)
    report = run_batch(cfg, args.trials, args.out, _progress(args.quiet))
    print("\n".join(report.summary_lines()))
    return 0


def _cmd_compare(args) -> int:
    cfg = _load(args)
    comparison = compare_models(cfg, args.trials, args.out, _progress(args.quiet))
    print("\n".join(comparison.lines()))
    return 0


def _cmd_map_export(args) -> int:
    save_map(build_block_world(), args.out)
    print(f"wrote {args.out}")
    return 0


def _add_batch_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON trial config (defaults apply when omitted)")
    p.add_argument("--trials", type=int, default=20, help="number of seeded trials (default 20)")
    p.add_argument("--seed", type=int, help="master seed; overrides the config")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--quiet", action="store_true", help="suppress per-trial progress")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="auvloc", description="Particle-filter localisation benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a batch of trials for one model")
    _add_batch_args(run)
    run.add_argument("--model", choices=MODEL_KINDS, help="likelihood model; overrides the config")
    run.set_defaults(func=_cmd_run)

    compare = sub.add_parser("compare", help="run both models on identical seeds")
    _add_batch_args(compare)
    compare.set_defaults(func=_cmd_compare)

    map_cmd = sub.add_parser("map", help="map utilities")
    map_sub = map_cmd.add_subparsers(dest="map_command", required=True)
    export = map_sub.add_parser("export", help="write the builtin block world as JSON")
    export.add_argument("--out", type=Path, required=True)
    export.set_defaults(func=_cmd_map_export)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "trials", 1) < 1:
        parser.error("--trials must be at least 1")
    try:
        return args.func(args)
    except (MapError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
