#!/usr/bin/env python3
"""Run a single crowd-crossing episode and render its trajectory plot."""

import argparse
import time
from pathlib import Path

import numpy as np

from crowdmpc import (
    ConstantVelocity,
    IbrParams,
    MpcParams,
    ScenarioConfig,
    SocialLstm,
    load_weights,
    run_simulation,
    write_log,
)
from crowdmpc.plotting import emit_plot


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--kind", choices=["circle", "square"], default="circle")
    parser.add_argument("--humans", type=int, default=6)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--weights", default=None, help="predictor weight file (default: constant velocity)")
    parser.add_argument("--out", default="results/demo", help="output directory")
    args = parser.parse_args()

    predictor = SocialLstm(load_weights(args.weights)) if args.weights else ConstantVelocity()
    config = ScenarioConfig(kind=args.kind, n_humans=args.humans, seed=args.seed)

    t0 = time.perf_counter()
    outcome, log = run_simulation(config, predictor, MpcParams(), IbrParams())
    wall = time.perf_counter() - t0

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / f"{args.kind}_n{args.humans}_seed{args.seed}.jsonl"
    svg_path = log_path.with_suffix(".svg")
    write_log(log, log_path)
    emit_plot(log, svg_path)

    print(f"outcome: {outcome.status.value}")
    print(f"travel time: {outcome.travel_time:.1f} s over {outcome.n_steps} steps")
    print(f"min robot-pedestrian separation: {outcome.min_separation:.2f} m")
    print(f"mean solve time: {1e3 * np.mean(outcome.step_compute_times):.1f} ms (wall {wall:.1f} s)")
    print(f"wrote {log_path} and {svg_path}")


if __name__ == "__main__":
    main()
