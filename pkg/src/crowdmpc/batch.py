"""Batch experiment runner: seeded grids of simulations and their artifacts.

One grid cell is a (scenario kind, crowd size) pair run over ``seeds``
derived seeds. Cells are independent, so runs may execute on a process
pool; results are aggregated in seed order, which makes every artifact a
pure function of the manifest regardless of the parallelism degree.

metrics.csv intentionally contains only deterministic columns; wall-clock
step times go to timing.csv so reruns of the same manifest are
byte-identical in metrics.csv.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

from .manifest import RunManifest, derive_seed
from .plotting import emit_plot
from .predictor import ConstantVelocity, SocialLstm, load_weights
from .sim import MetricsSummary, SimOutcome, compute_metrics, read_log, run_simulation, scenario_with, write_log

METRICS_COLUMNS = (
    "scenario", "n_humans", "seeds", "success_rate", "collision_rate",
    "timeout_rate", "discomfort_rate", "avg_travel_time", "error",
)


@dataclass
class CellResult:
    kind: str
    n_humans: int
    seeds: int
    metrics: MetricsSummary | None
    outcomes: list[SimOutcome]
    error: str | None = None

    @property
    def total_steps(self) -> int:
        return sum(o.n_steps for o in self.outcomes)

    @property
    def converged_early_steps(self) -> int:
        return sum(o.ibr_converged_early for o in self.outcomes)


@dataclass
class BatchResult:
    cells: list[CellResult]
    any_error: bool


@lru_cache(maxsize=4)
def _cached_weights(path: str):
    return load_weights(path)


def _predictor_for(manifest: RunManifest):
    if manifest.predictor == "social_lstm":
        return SocialLstm(_cached_weights(manifest.weights))
    return ConstantVelocity()


def _run_one(manifest: RunManifest, kind: str, n_humans: int, index: int, log_path: str | None):
    """Worker: one simulation; returns (kind, n_humans, index, outcome, error)."""
    try:
        config = scenario_with(
            manifest.scenario,
            kind=kind,
            n_humans=n_humans,
            seed=derive_seed(manifest.base_seed, kind, n_humans, index),
        )
        outcome, log = run_simulation(config, _predictor_for(manifest), manifest.mpc, manifest.ibr)
        if log_path is not None:
            write_log(log, log_path)
        return kind, n_humans, index, outcome, None
    except Exception as exc:  # recorded per cell; the batch keeps going
        return kind, n_humans, index, None, f"{type(exc).__name__}: {exc}"


def _run_one_star(args):
    return _run_one(*args)


def run_batch(manifest: RunManifest, out_dir=None, jobs: int | None = None) -> BatchResult:
    """Execute the full grid and write metrics.csv / timing.csv (+ logs, plots)."""
    out = Path(out_dir) if out_dir is not None else (
        Path(manifest.out_dir) if manifest.out_dir else None
    )
    jobs = jobs if jobs is not None else manifest.jobs
    log_dir = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        if manifest.write_logs or manifest.plots:
            log_dir = out / "logs"
            log_dir.mkdir(exist_ok=True)

    tasks = []
    for kind in manifest.scenarios:
        for n_humans in manifest.n_humans:
            for index in range(manifest.seeds):
                log_path = None
                if log_dir is not None and (manifest.write_logs or index == 0):
                    log_path = str(log_dir / f"{kind}_n{n_humans}_run{index:04d}.jsonl")
                tasks.append((manifest, kind, n_humans, index, log_path))

    if jobs <= 1:
        results = [_run_one_star(task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one_star, tasks, chunksize=4))

    by_cell: dict[tuple[str, int], list] = {}
    for kind, n_humans, index, outcome, error in results:
        by_cell.setdefault((kind, n_humans), []).append((index, outcome, error))

    cells = []
    any_error = False
    for kind in manifest.scenarios:
        for n_humans in manifest.n_humans:
            entries = sorted(by_cell.get((kind, n_humans), []))
            errors = [e for _, _, e in entries if e is not None]
            outcomes = [o for _, o, _ in entries if o is not None]
            if errors:
                any_error = True
                cells.append(CellResult(kind, n_humans, manifest.seeds, None, outcomes, errors[0]))
            else:
                cells.append(
                    CellResult(kind, n_humans, manifest.seeds, compute_metrics(outcomes), outcomes)
                )

    if out is not None:
        write_metrics_csv(cells, out / "metrics.csv")
        write_timing_csv(cells, out / "timing.csv")
        if manifest.plots and log_dir is not None:
            plot_dir = out / "plots"
            plot_dir.mkdir(exist_ok=True)
            for cell in cells:
                first_log = log_dir / f"{cell.kind}_n{cell.n_humans}_run0000.jsonl"
                if first_log.exists():
                    emit_plot(read_log(first_log), plot_dir / f"{cell.kind}_n{cell.n_humans}.svg")
    return BatchResult(cells=cells, any_error=any_error)


def _fmt(value) -> str:
    if value is None:
        return ""
    return repr(value) if isinstance(value, float) else str(value)


def write_metrics_csv(cells, path) -> None:
    """Success/collision/timeout/discomfort rates and travel time per cell."""
    lines = [",".join(METRICS_COLUMNS)]
    for cell in cells:
        m = cell.metrics
        row = [
            cell.kind, cell.n_humans, cell.seeds,
            m.success_rate if m else None,
            m.collision_rate if m else None,
            m.timeout_rate if m else None,
            m.discomfort_rate if m else None,
            m.avg_travel_time if m else None,
            cell.error or "",
        ]
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_timing_csv(cells, path) -> None:
    """Wall-clock mean compute per control step (kept out of metrics.csv)."""
    lines = ["scenario,n_humans,seeds,mean_step_compute"]
    for cell in cells:
        m = cell.metrics
        mean = m.mean_step_compute if m else None
        lines.append(",".join(_fmt(v) for v in (cell.kind, cell.n_humans, cell.seeds, mean)))
    Path(path).write_text("\n".join(lines) + "\n")
