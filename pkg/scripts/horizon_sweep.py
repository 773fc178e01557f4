#!/usr/bin/env python3
"""Control-horizon sweep: per-step compute time and success vs H."""

import argparse
from pathlib import Path

from crowdmpc.batch import run_batch
from crowdmpc.manifest import RunManifest
from crowdmpc.mpc import MpcParams


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--horizons", type=int, nargs="+", default=[4, 8, 12])
    parser.add_argument("--seeds", type=int, default=100)
    parser.add_argument("--humans", type=int, default=6)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out", default="results/horizon_sweep")
    args = parser.parse_args()

    print(f"{'scenario':<9}{'H':>4}{'solve ms':>10}{'success%':>10}{'collision%':>12}{'discomfort%':>13}")
    for horizon in args.horizons:
        manifest = RunManifest(
            scenarios=["circle", "square"],
            n_humans=[args.humans],
            seeds=args.seeds,
            mpc=MpcParams(horizon=horizon),
            jobs=args.jobs,
            write_logs=False,
            plots=False,
        )
        result = run_batch(manifest, out_dir=Path(args.out) / f"h{horizon}", jobs=args.jobs)
        for cell in result.cells:
            m = cell.metrics
            print(
                f"{cell.kind:<9}{horizon:>4}{1e3 * m.mean_step_compute:>10.2f}"
                f"{m.success_rate:>10.1f}{m.collision_rate:>12.1f}{m.discomfort_rate:>13.1f}"
            )


if __name__ == "__main__":
    main()
