"""Double-integrator robot model and straight-line reference paths.

Positions are metres, velocities m/s, accelerations m/s^2. Every planar
vector is a float numpy array of shape (2,), an acceleration plan is an
array of shape (H, 2). Holding the acceleration constant over a step of
length tau advances the state exactly (zero-order hold):

    position' = position + tau * velocity + tau^2/2 * accel
    velocity' = velocity + tau * accel
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InvalidStateError(ValueError):
    """A state, action, or step size is unusable (wrong shape or non-finite)."""


def as_vec2(value, name: str = "vector") -> np.ndarray:
    """Coerce ``value`` to a finite float array of shape (2,)."""
    v = np.asarray(value, dtype=float)
    if v.shape != (2,):
        raise InvalidStateError(f"{name} must be a 2-vector, got shape {v.shape}")
    if not np.isfinite(v).all():
        raise InvalidStateError(f"{name} has non-finite entries: {v!r}")
    return v


def as_plan(value, name: str = "plan") -> np.ndarray:
    """Coerce ``value`` to a finite float array of shape (H, 2)."""
    plan = np.asarray(value, dtype=float)
    if plan.ndim != 2 or plan.shape[1] != 2:
        raise InvalidStateError(f"{name} must have shape (H, 2), got {plan.shape}")
    if not np.isfinite(plan).all():
        raise InvalidStateError(f"{name} has non-finite entries")
    return plan


@dataclass
class RobotState:
    """Planar robot state: position [m] and velocity [m/s]."""

    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self) -> None:
        self.position = as_vec2(self.position, "position")
        self.velocity = as_vec2(self.velocity, "velocity")


def step_dynamics(state: RobotState, action, tau: float) -> RobotState:
    """Advance one step of length ``tau`` under constant acceleration."""
    if not tau > 0.0:
        raise InvalidStateError(f"tau must be positive, got {tau}")
    a = as_vec2(action, "action")
    position = state.position + tau * state.velocity + 0.5 * tau * tau * a
    velocity = state.velocity + tau * a
    return RobotState(position, velocity)


def rollout_arrays(initial: RobotState, plan, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Roll a plan forward; returns (positions, velocities), each (H, 2).

    Row k is the state after applying actions 0..k, identical to k+1
    successive :func:`step_dynamics` calls.
    """
    if not tau > 0.0:
        raise InvalidStateError(f"tau must be positive, got {tau}")
    u = as_plan(plan)
    horizon = len(u)
    positions = np.empty((horizon, 2))
    velocities = np.empty((horizon, 2))
    p = initial.position
    v = initial.velocity
    for k in range(horizon):
        a = u[k]
        p = p + tau * v + 0.5 * tau * tau * a
        v = v + tau * a
        positions[k] = p
        velocities[k] = v
    return positions, velocities


def rollout(initial: RobotState, plan, tau: float) -> list[RobotState]:
    """Like :func:`rollout_arrays` but returning a list of ``RobotState``."""
    positions, velocities = rollout_arrays(initial, plan, tau)
    return [RobotState(p, v) for p, v in zip(positions, velocities)]


def reference_trajectory(start, goal, horizon: int, tau: float, v_max: float) -> np.ndarray:
    """Desired positions on the straight line from ``start`` to ``goal``.

    Each of the ``horizon`` points advances from the previous one by at most
    tau * v_max along the fixed unit direction computed once from ``start``;
    the path saturates exactly at the goal and stays there. Returns an array
    of shape (horizon, 2).
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    if not (tau > 0.0 and v_max > 0.0):
        raise ValueError("tau and v_max must be positive")
    start = as_vec2(start, "start")
    goal = as_vec2(goal, "goal")
    points = np.empty((horizon, 2))
    offset = goal - start
    distance = float(np.hypot(offset[0], offset[1]))
    if distance == 0.0:
        points[:] = goal
        return points
    direction = offset / distance
    step = tau * v_max
    point = start
    for k in range(horizon):
        to_go = goal - point
        remaining = float(np.hypot(to_go[0], to_go[1]))
        if remaining <= step:
            point = goal.copy()
        else:
            point = point + step * direction
        points[k] = point
    return points
