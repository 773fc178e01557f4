"""Pedestrian trajectory prediction over a sliding observation window.

Two predictors share one interface: a constant-velocity baseline and a
from-scratch recurrent model in which every agent runs the same LSTM cell
while a social pooling layer sums neighbouring hidden states on a spatial
grid, so crowd interaction feeds each agent's recurrence. The model emits a
per-step displacement that is added to the last observed position.

Horizon rollouts are recursive: each predicted step (with the robot's own
planned position substituted at index 0) is appended to the window, the
window slides, and the predictor runs again.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class WeightShapeError(ValueError):
    """A weight tensor is missing, mis-shaped, or non-finite."""


GATES = ("input", "forget", "cell", "output")


def expected_shapes(hidden_size: int, grid: int, embedding: int) -> dict[str, tuple[int, ...]]:
    """Tensor-name to shape map for a given architecture configuration."""
    shapes: dict[str, tuple[int, ...]] = {
        "embed_input.weight": (embedding, 2),
        "embed_input.bias": (embedding,),
        "embed_pool.weight": (embedding, grid * grid * hidden_size),
        "embed_pool.bias": (embedding,),
        "head.weight": (2, hidden_size),
        "head.bias": (2,),
    }
    for gate in GATES:
        shapes[f"lstm_{gate}.w_x"] = (hidden_size, 2 * embedding)
        shapes[f"lstm_{gate}.w_h"] = (hidden_size, hidden_size)
        shapes[f"lstm_{gate}.bias"] = (hidden_size,)
    return shapes


@dataclass(eq=False)
class LstmWeights:
    """One shared weight set for all agents.

    ``tensors`` maps the names from :func:`expected_shapes` to float arrays;
    ``grid`` and ``extent_m`` configure the social pooling map (grid x grid
    cells covering extent_m x extent_m metres centred on each agent).
    """

    hidden_size: int
    grid: int
    extent_m: float
    tensors: dict[str, np.ndarray]

    @property
    def embedding_size(self) -> int:
        w = self.tensors.get("embed_input.weight")
        if w is None:
            raise WeightShapeError("missing tensor 'embed_input.weight'")
        return int(w.shape[0])

    def validate(self) -> None:
        if self.hidden_size < 1 or self.grid < 1:
            raise WeightShapeError("hidden_size and grid must be >= 1")
        if not self.extent_m > 0.0:
            raise WeightShapeError("extent_m must be positive")
        shapes = expected_shapes(self.hidden_size, self.grid, self.embedding_size)
        for name, shape in shapes.items():
            tensor = self.tensors.get(name)
            if tensor is None:
                raise WeightShapeError(f"missing tensor {name!r}")
            if tensor.shape != shape:
                raise WeightShapeError(
                    f"tensor {name!r} has shape {tensor.shape}, expected {shape}"
                )
            if not np.isfinite(tensor).all():
                raise WeightShapeError(f"tensor {name!r} has non-finite entries")
        extra = set(self.tensors) - set(shapes)
        if extra:
            raise WeightShapeError(f"unexpected tensors: {sorted(extra)}")


def zero_weights(hidden_size: int = 64, grid: int = 4, extent_m: float = 2.0,
                 embedding: int = 32) -> LstmWeights:
    """All-zero weights; the resulting model predicts zero displacement."""
    tensors = {
        name: np.zeros(shape)
        for name, shape in expected_shapes(hidden_size, grid, embedding).items()
    }
    return LstmWeights(hidden_size, grid, extent_m, tensors)


def random_weights(rng: np.random.Generator, hidden_size: int = 64, grid: int = 4,
                   extent_m: float = 2.0, embedding: int = 32, scale: float = 0.1) -> LstmWeights:
    """Random Gaussian weights, scaled by fan-in; useful for tests and demos."""
    tensors = {}
    for name, shape in expected_shapes(hidden_size, grid, embedding).items():
        fan_in = shape[-1] if len(shape) > 1 else 1
        tensors[name] = rng.standard_normal(shape) * (scale / np.sqrt(fan_in))
    return LstmWeights(hidden_size, grid, extent_m, tensors)


def save_weights(weights: LstmWeights, path) -> None:
    """Write weights as named-tensor JSON (row-major data lists)."""
    weights.validate()
    payload = {
        "hidden_size": weights.hidden_size,
        "grid": weights.grid,
        "extent_m": weights.extent_m,
        "tensors": {
            name: {"shape": list(t.shape), "data": t.ravel().tolist()}
            for name, t in sorted(weights.tensors.items())
        },
    }
    Path(path).write_text(json.dumps(payload))


def load_weights(path) -> LstmWeights:
    """Load and validate a weight file written by :func:`save_weights`."""
    raw = json.loads(Path(path).read_text())
    try:
        hidden_size = int(raw["hidden_size"])
        grid = int(raw["grid"])
        extent_m = float(raw["extent_m"])
        entries = raw["tensors"]
    except (KeyError, TypeError) as exc:
        raise WeightShapeError(f"malformed weight file: {exc}") from exc
    tensors = {}
    for name, entry in entries.items():
        shape = tuple(int(s) for s in entry["shape"])
        data = np.asarray(entry["data"], dtype=float)
        if data.size != int(np.prod(shape)):
            raise WeightShapeError(
                f"tensor {name!r}: {data.size} values do not fill shape {shape}"
            )
        tensors[name] = data.reshape(shape)
    weights = LstmWeights(hidden_size, grid, extent_m, tensors)
    weights.validate()
    return weights


@dataclass(frozen=True)
class ConstantVelocity:
    """Extrapolate each pedestrian's last observed displacement."""


@dataclass(frozen=True, eq=False)
class SocialLstm:
    weights: LstmWeights


PredictorKind = ConstantVelocity | SocialLstm


@dataclass
class WorldHistory:
    """Sliding window of observed positions, robot first.

    ``positions`` has shape (T, N+1, 2), ordered oldest to newest; column 0
    is the robot and columns 1..N are the pedestrians.
    """

    positions: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.positions, dtype=float)
        if p.ndim != 3 or p.shape[2] != 2 or p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError(f"window must have shape (T, N+1, 2), got {p.shape}")
        if not np.isfinite(p).all():
            raise ValueError("window has non-finite entries")
        self.positions = p

    @property
    def length(self) -> int:
        return self.positions.shape[0]

    @property
    def n_pedestrians(self) -> int:
        return self.positions.shape[1] - 1

    @classmethod
    def initial(cls, row, length: int) -> "WorldHistory":
        """Window at episode start: the first observation repeated ``length`` times."""
        row = np.asarray(row, dtype=float)
        return cls(np.tile(row[None, :, :], (length, 1, 1)))

    def advanced(self, new_row) -> "WorldHistory":
        """Slide the window forward by one observation."""
        new_row = np.asarray(new_row, dtype=float)
        return WorldHistory(np.concatenate([self.positions[1:], new_row[None]], axis=0))


def _relu(x):
    return np.maximum(x, 0.0)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _social_pool(positions: np.ndarray, hidden: np.ndarray, grid: int, extent: float) -> np.ndarray:
    """Sum neighbour hidden states into a grid map centred on each agent.

    positions: (M, 2), hidden: (M, hid); returns (M, grid*grid*hid) with the
    cell layout row-major in (x_cell, y_cell). Neighbours at or beyond half
    the extent are ignored.
    """
    m, hid = hidden.shape
    pooled = np.zeros((m, grid * grid * hid))
    if m == 1:
        return pooled
    half = 0.5 * extent
    cell = extent / grid
    for i in range(m):
        rel = positions - positions[i]
        inside = (np.abs(rel[:, 0]) < half) & (np.abs(rel[:, 1]) < half)
        inside[i] = False
        if not inside.any():
            continue
        idx = np.floor((rel[inside] + half) / cell).astype(int)
        idx = np.clip(idx, 0, grid - 1)
        flat = idx[:, 0] * grid + idx[:, 1]
        target = pooled[i].reshape(grid * grid, hid)
        np.add.at(target, flat, hidden[inside])
    return pooled


def _lstm_forward(weights: LstmWeights, window: np.ndarray) -> np.ndarray:
    """One forward pass over the window; returns next positions for all agents."""
    t = weights.tensors
    m = window.shape[1]
    h = np.zeros((m, weights.hidden_size))
    c = np.zeros((m, weights.hidden_size))
    for step in range(1, window.shape[0]):
        disp = window[step] - window[step - 1]
        e_in = _relu(disp @ t["embed_input.weight"].T + t["embed_input.bias"])
        pool = _social_pool(window[step], h, weights.grid, weights.extent_m)
        e_pool = _relu(pool @ t["embed_pool.weight"].T + t["embed_pool.bias"])
        x = np.concatenate([e_in, e_pool], axis=1)
        gate = {
            name: x @ t[f"lstm_{name}.w_x"].T + h @ t[f"lstm_{name}.w_h"].T + t[f"lstm_{name}.bias"]
            for name in GATES
        }
        c = _sigmoid(gate["forget"]) * c + _sigmoid(gate["input"]) * np.tanh(gate["cell"])
        h = _sigmoid(gate["output"]) * np.tanh(c)
    displacement = h @ t["head.weight"].T + t["head.bias"]
    return window[-1] + displacement


def predict_next(kind: PredictorKind, window: WorldHistory) -> np.ndarray:
    """Predict each pedestrian's next position; returns an (N, 2) array.

    The robot (column 0) is part of the input but never predicted.
    """
    pos = window.positions
    if isinstance(kind, ConstantVelocity):
        if window.n_pedestrians == 0:
            return np.zeros((0, 2))
        if window.length < 2:
            return pos[-1, 1:].copy()
        return (2.0 * pos[-1] - pos[-2])[1:]
    if isinstance(kind, SocialLstm):
        kind.weights.validate()
        if window.n_pedestrians == 0:
            return np.zeros((0, 2))
        return _lstm_forward(kind.weights, pos)[1:]
    raise TypeError(f"unknown predictor kind: {kind!r}")


def rollout_predictions(kind: PredictorKind, window: WorldHistory, robot_plan_positions) -> np.ndarray:
    """Recursively predict pedestrians over the horizon of the robot's plan.

    After each step the predicted pedestrian positions and the robot's
    *planned* position (never a predicted one) are appended to the window.
    Returns an (H, N, 2) array.
    """
    plan_positions = np.asarray(robot_plan_positions, dtype=float)
    if plan_positions.ndim != 2 or plan_positions.shape[1] != 2:
        raise ValueError(
            f"robot_plan_positions must have shape (H, 2), got {plan_positions.shape}"
        )
    horizon = plan_positions.shape[0]
    n = window.n_pedestrians
    out = np.empty((horizon, n, 2))
    current = window
    for step in range(horizon):
        nxt = predict_next(kind, current)
        out[step] = nxt
        new_row = np.concatenate([plan_positions[step][None, :], nxt], axis=0)
        current = current.advanced(new_row)
    return out
