"""Iterative best response: alternate prediction and planning to a fixed point.

Each control step repeats two moves: predict the pedestrians over the
horizon given the robot's current plan, then re-solve the plan against
those predictions, warm-started from the previous iterate. The loop stops
when the plan changes by at most ``epsilon`` (Euclidean norm over the whole
flattened plan) or after ``j_max`` rounds; only the first action of the
final plan is executed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import RobotState, as_plan, as_vec2, reference_trajectory, rollout_arrays
from .mpc import MpcParams, solve_mpc
from .predictor import PredictorKind, WorldHistory, rollout_predictions


@dataclass(frozen=True)
class IbrParams:
    j_max: int = 5
    epsilon: float = 1e-2

    def __post_init__(self) -> None:
        if self.j_max < 1:
            raise ValueError("j_max must be >= 1")
        if not self.epsilon > 0.0:
            raise ValueError("epsilon must be positive")


@dataclass
class TimestepResult:
    action: np.ndarray      # first action of the final plan, (2,)
    plan: np.ndarray        # final plan, (H, 2); next step's warm-start source
    iterations: int
    converged: bool


def initialize_warm_start(horizon: int) -> np.ndarray:
    """All-zero plan used before any solution exists."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    return np.zeros((horizon, 2))


def shift_warm_start(previous_plan) -> np.ndarray:
    """Shift a plan one step forward, repeating the final action."""
    plan = as_plan(previous_plan)
    return np.concatenate([plan[1:], plan[-1:]], axis=0)


def solve_timestep(
    history: WorldHistory,
    robot_state: RobotState,
    goal,
    u_prev,
    warm,
    predictor: PredictorKind,
    mpc_params: MpcParams,
    ibr_params: IbrParams,
) -> TimestepResult:
    """Run the best-response loop for one control step.

    ``warm`` is the (already shifted) plan from the previous step; its
    rollout provides the robot positions for the first prediction round.
    """
    goal = as_vec2(goal, "goal")
    u_prev = as_vec2(u_prev, "u_prev")
    plan = np.clip(as_plan(warm, "warm"), -mpc_params.a_max, mpc_params.a_max)
    plan_positions, _ = rollout_arrays(robot_state, plan, mpc_params.tau)
    reference = reference_trajectory(
        robot_state.position, goal, mpc_params.horizon, mpc_params.tau, mpc_params.v_max
    )

    iterations = 0
    converged = False
    for _ in range(ibr_params.j_max):
        predictions = rollout_predictions(predictor, history, plan_positions)
        solution = solve_mpc(robot_state, u_prev, reference, predictions, mpc_params, plan)
        delta = solution.plan - plan
        change = float(np.sqrt((delta * delta).sum()))
        plan = solution.plan
        plan_positions = solution.positions
        iterations += 1
        if change <= ibr_params.epsilon:
            converged = True
            break
    return TimestepResult(
        action=plan[0].copy(), plan=plan, iterations=iterations, converged=converged
    )
