"""Command-line entry points: run batches, plot logs, validate weight files."""

from __future__ import annotations

import argparse
import sys

from .batch import run_batch
from .manifest import ManifestError, parse_manifest
from .predictor import WeightShapeError, load_weights
from .plotting import emit_plot
from .sim import read_log


def _cmd_run(args) -> int:
    try:
        manifest = parse_manifest(args.manifest)
    except (ManifestError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out_dir = args.out if args.out is not None else manifest.out_dir
    jobs = args.jobs if args.jobs is not None else manifest.jobs
    result = run_batch(manifest, out_dir=out_dir, jobs=jobs)

    header = f"{'scenario':<10}{'humans':>7}{'success%':>10}{'collision%':>12}{'timeout%':>10}{'discomfort%':>13}{'avg time s':>12}"
    print(header)
    for cell in result.cells:
        if cell.metrics is None:
            print(f"{cell.kind:<10}{cell.n_humans:>7}  ERROR: {cell.error}")
            continue
        m = cell.metrics
        avg = f"{m.avg_travel_time:.2f}" if m.avg_travel_time is not None else "-"
        print(
            f"{cell.kind:<10}{cell.n_humans:>7}{m.success_rate:>10.1f}{m.collision_rate:>12.1f}"
            f"{m.timeout_rate:>10.1f}{m.discomfort_rate:>13.1f}{avg:>12}"
        )
    if out_dir is not None:
        print(f"artifacts written to {out_dir}")
    return 1 if result.any_error else 0


def _cmd_plot(args) -> int:
    try:
        log = read_log(args.log)
        emit_plot(log, args.out)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.out}")
    return 0


def _cmd_check_weights(args) -> int:
    try:
        weights = load_weights(args.file)
    except (OSError, ValueError, KeyError) as exc:
        print(f"invalid weight file: {exc}", file=sys.stderr)
        return 1
    n_params = sum(t.size for t in weights.tensors.values())
    print(
        f"ok: hidden_size={weights.hidden_size} grid={weights.grid} "
        f"extent_m={weights.extent_m} tensors={len(weights.tensors)} params={n_params}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crowdmpc",
        description="Crowd-navigation MPC benchmark runner",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a batch of simulations from a manifest")
    run.add_argument("--manifest", required=True, help="JSON manifest file")
    run.add_argument("--out", default=None, help="output directory for artifacts")
    run.add_argument("--jobs", type=int, default=None, help="parallel worker processes")
    run.set_defaults(func=_cmd_run)

    plot = sub.add_parser("plot", help="render a trajectory log as SVG")
    plot.add_argument("--log", required=True, help="JSONL trajectory log")
    plot.add_argument("--out", required=True, help="output SVG path")
    plot.set_defaults(func=_cmd_plot)

    check = sub.add_parser("check-weights", help="validate a predictor weight file")
    check.add_argument("--file", required=True, help="weight JSON file")
    check.set_defaults(func=_cmd_check_weights)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
