#!/usr/bin/env python3
"""Benchmark grid over both scenarios and crowd sizes 5..8.

Reproduces the headline success/collision/discomfort/travel-time table
layout; seeds per cell and parallelism are configurable.
"""

import argparse
from pathlib import Path

from crowdmpc.batch import run_batch
from crowdmpc.manifest import RunManifest, save_manifest


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=100, help="runs per grid cell")
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out", default="results/benchmark")
    parser.add_argument("--humans", type=int, nargs="+", default=[5, 6, 7, 8])
    args = parser.parse_args()

    manifest = RunManifest(
        scenarios=["circle", "square"],
        n_humans=args.humans,
        seeds=args.seeds,
        jobs=args.jobs,
        write_logs=False,
        plots=False,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_manifest(manifest, out / "manifest.json")
    result = run_batch(manifest, out_dir=out, jobs=args.jobs)

    header = f"{'scenario':<9}{'humans':>7}{'success%':>10}{'collision%':>12}{'discomfort%':>13}{'avg time s':>12}{'solve ms':>10}"
    print(header)
    print("-" * len(header))
    for cell in result.cells:
        m = cell.metrics
        if m is None:
            print(f"{cell.kind:<9}{cell.n_humans:>7}  ERROR: {cell.error}")
            continue
        print(
            f"{cell.kind:<9}{cell.n_humans:>7}{m.success_rate:>10.1f}{m.collision_rate:>12.1f}"
            f"{m.discomfort_rate:>13.1f}{m.avg_travel_time:>12.2f}{1e3 * m.mean_step_compute:>10.2f}"
        )
    print(f"\nartifacts in {out}")


if __name__ == "__main__":
    main()
