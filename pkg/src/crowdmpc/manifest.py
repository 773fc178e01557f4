"""Batch-run manifests: JSON parsing, validation, and per-cell seed derivation."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .ibr import IbrParams
from .mpc import MpcParams
from .sim import ScenarioConfig


class ManifestError(ValueError):
    """Manifest file is malformed or out of range."""


@dataclass
class RunManifest:
    scenarios: list[str] = field(default_factory=lambda: ["circle"])
    n_humans: list[int] = field(default_factory=lambda: [5])
    seeds: int = 100                 # number of seeded runs per grid cell
    base_seed: int = 0
    predictor: str = "cv"            # "cv" or "social_lstm"
    weights: str | None = None       # weight file, required for social_lstm
    mpc: MpcParams = field(default_factory=MpcParams)
    ibr: IbrParams = field(default_factory=IbrParams)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    out_dir: str | None = None
    jobs: int = 1
    write_logs: bool = True
    plots: bool = True


def derive_seed(base_seed: int, kind: str, n_humans: int, index: int) -> int:
    """Stable per-run seed: adding grid cells never changes existing ones."""
    key = f"{base_seed}|{kind}|{n_humans}|{index}".encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big") % (2**63)


def _build(cls, section: str, values: dict, defaults):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ManifestError(f"unknown key {sorted(unknown)[0]!r} in section {section!r}")
    try:
        return dataclasses.replace(defaults, **values)
    except ValueError as exc:
        raise ManifestError(f"invalid value in section {section!r}: {exc}") from exc


def parse_manifest(path) -> RunManifest:
    """Read and validate a manifest file; an empty file means all defaults."""
    text = Path(path).read_text().strip()
    raw = json.loads(text) if text else {}
    if not isinstance(raw, dict):
        raise ManifestError("manifest must be a JSON object")

    known = {f.name for f in dataclasses.fields(RunManifest)}
    unknown = set(raw) - known
    if unknown:
        raise ManifestError(f"unknown key {sorted(unknown)[0]!r}")

    manifest = RunManifest(
        mpc=_build(MpcParams, "mpc", raw.get("mpc", {}), MpcParams()),
        ibr=_build(IbrParams, "ibr", raw.get("ibr", {}), IbrParams()),
        scenario=_build(ScenarioConfig, "scenario", raw.get("scenario", {}), ScenarioConfig()),
    )
    for name in ("scenarios", "n_humans", "seeds", "base_seed", "predictor",
                 "weights", "out_dir", "jobs", "write_logs", "plots"):
        if name in raw:
            setattr(manifest, name, raw[name])

    if not isinstance(manifest.scenarios, list) or not manifest.scenarios:
        raise ManifestError("scenarios must be a non-empty list")
    for kind in manifest.scenarios:
        if kind not in ("circle", "square"):
            raise ManifestError(f"scenarios entries must be 'circle' or 'square', got {kind!r}")
    if not isinstance(manifest.n_humans, list) or not manifest.n_humans:
        raise ManifestError("n_humans must be a non-empty list")
    for n in manifest.n_humans:
        if not isinstance(n, int) or n < 0:
            raise ManifestError(f"n_humans entries must be integers >= 0, got {n!r}")
    if not isinstance(manifest.seeds, int) or manifest.seeds < 1:
        raise ManifestError(f"seeds must be an integer >= 1, got {manifest.seeds!r}")
    if not isinstance(manifest.jobs, int) or manifest.jobs < 1:
        raise ManifestError(f"jobs must be an integer >= 1, got {manifest.jobs!r}")
    if manifest.predictor not in ("cv", "social_lstm"):
        raise ManifestError(f"predictor must be 'cv' or 'social_lstm', got {manifest.predictor!r}")
    if manifest.predictor == "social_lstm":
        if not manifest.weights:
            raise ManifestError("predictor 'social_lstm' requires a 'weights' path")
        if not Path(manifest.weights).exists():
            raise ManifestError(f"weights file not found: {manifest.weights}")
    return manifest


def manifest_to_dict(manifest: RunManifest) -> dict:
    """JSON-serialisable form; parse_manifest on the result is the identity."""
    return {
        "scenarios": list(manifest.scenarios),
        "n_humans": list(manifest.n_humans),
        "seeds": manifest.seeds,
        "base_seed": manifest.base_seed,
        "predictor": manifest.predictor,
        "weights": manifest.weights,
        "mpc": dataclasses.asdict(manifest.mpc),
        "ibr": dataclasses.asdict(manifest.ibr),
        "scenario": dataclasses.asdict(manifest.scenario),
        "out_dir": manifest.out_dir,
        "jobs": manifest.jobs,
        "write_logs": manifest.write_logs,
        "plots": manifest.plots,
    }


def save_manifest(manifest: RunManifest, path) -> None:
    Path(path).write_text(json.dumps(manifest_to_dict(manifest), indent=2))
