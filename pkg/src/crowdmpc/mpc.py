"""Receding-horizon objective, analytic gradient, and box-constrained solver.

The decision variable is the acceleration plan, an (H, 2) array; states are
eliminated by rolling the double integrator forward (single shooting). The
acceleration box is enforced exactly by projection; the velocity box is a
soft smoothed-hinge penalty whose residual violation is verified after every
solve. Collision avoidance enters as a smoothed-hinge penalty on the squared
safety margin, with a speed-dependent required distance.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _fastsolve
from .dynamics import RobotState, as_plan, as_vec2, rollout_arrays


class SolverInputError(ValueError):
    """The solver was handed an instance it cannot evaluate."""


@dataclass(frozen=True)
class MpcParams:
    """Controller parameters; defaults follow the benchmark configuration."""

    tau: float = 0.4            # step length [s]
    horizon: int = 8            # number of planned actions H
    window: int = 8             # observation window length L fed to the predictor
    v_max: float = 1.0          # velocity box, per component [m/s]
    a_max: float = 2.0          # acceleration box, per component [m/s^2]
    d_min: float = 0.8          # minimum allowed robot-pedestrian distance [m]
    rho: float = 0.5            # speed-dependent distance scaling [s^2]
    mu: float = 30.0            # smoothed-hinge sharpness
    w_goal: float = 10.0
    w_acce: float = 0.1
    w_jerk: float = 0.1
    w_coll: float = 1e10
    w_vel: float = 1e4

    def __post_init__(self) -> None:
        for name in ("tau", "v_max", "a_max", "d_min", "rho", "mu"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if self.horizon < 1 or self.window < 1:
            raise ValueError("horizon and window must be >= 1")
        for name in ("w_goal", "w_acce", "w_jerk", "w_coll", "w_vel"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")


@dataclass
class MpcSolution:
    """Result of one solve: plan, its rollout, and solver diagnostics."""

    plan: np.ndarray          # (H, 2), inside the acceleration box exactly
    positions: np.ndarray     # (H, 2)
    velocities: np.ndarray    # (H, 2)
    objective: float
    iterations: int
    converged: bool
    velocity_violation: float  # max componentwise overshoot beyond v_max [m/s]
    objective_history: list[float] = field(default_factory=list)


def smax(x, mu: float):
    """Smoothed hinge log(exp(mu*x) + 1)/mu, a tight upper bound on max(x, 0).

    Evaluated as max(x, 0) + log1p(exp(-mu*|x|))/mu: safe for arguments of
    any magnitude, and never below the hinge even after rounding.
    """
    if not mu > 0.0:
        raise ValueError(f"mu must be positive, got {mu}")
    x = np.asarray(x, dtype=float)
    return np.maximum(x, 0.0) + np.log1p(np.exp(-mu * np.abs(x))) / mu


def _sigmoid(z):
    # logistic function written via tanh: stable for any argument magnitude
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def cost_goal(positions, reference) -> float:
    """Sum of squared distances between achieved and reference positions."""
    positions = np.asarray(positions, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if positions.shape != reference.shape:
        raise ValueError(
            f"positions {positions.shape} and reference {reference.shape} differ"
        )
    d = positions - reference
    return float((d * d).sum())


def cost_acce(plan) -> float:
    """Sum of squared acceleration components over the plan."""
    u = as_plan(plan)
    return float((u * u).sum())


def cost_jerk(plan, u_prev) -> float:
    """Sum of squared step-to-step acceleration changes, seeded by ``u_prev``."""
    u = as_plan(plan)
    prev = as_vec2(u_prev, "u_prev")
    d = np.diff(u, axis=0, prepend=prev[None, :])
    return float((d * d).sum())


def cost_coll(positions, velocities, predictions, params: MpcParams) -> float:
    """Smoothed-hinge penalty on the speed-dependent separation margin.

    For every pedestrian and horizon step the penalised margin is
    d_min^2 + rho*|v|^2 - |s_robot - s_ped|^2.
    """
    positions = np.asarray(positions, dtype=float)
    velocities = np.asarray(velocities, dtype=float)
    predictions = np.asarray(predictions, dtype=float)
    if predictions.size == 0:
        return 0.0
    if predictions.shape[0] != positions.shape[0]:
        raise ValueError("predictions and rollout horizons differ")
    diff = positions[:, None, :] - predictions          # (H, N, 2)
    dist_sq = (diff * diff).sum(axis=-1)                # (H, N)
    speed_sq = (velocities * velocities).sum(axis=-1)   # (H,)
    margin = params.d_min**2 + params.rho * speed_sq[:, None] - dist_sq
    return float(smax(margin, params.mu).sum())


def cost_vel(velocities, params: MpcParams) -> float:
    """Smoothed-hinge penalty on componentwise velocity-box violations."""
    v = np.asarray(velocities, dtype=float)
    return float(
        (smax(v - params.v_max, params.mu) + smax(-v - params.v_max, params.mu)).sum()
    )


def _objective(u, u_prev, v0, reference, predictions, params, want_grad):
    """Weighted objective (and its plan gradient) in the robot-centred frame.

    ``reference`` and ``predictions`` must already be expressed relative to
    the current robot position; this keeps the solve invariant under rigid
    translation of the instance.
    """
    tau = params.tau
    horizon = len(u)
    mu = params.mu

    # forward rollout from the origin, same update as step_dynamics
    pos = np.empty((horizon, 2))
    vel = np.empty((horizon, 2))
    p = np.zeros(2)
    v = v0
    for k in range(horizon):
        a = u[k]
        p = p + tau * v + 0.5 * tau * tau * a
        v = v + tau * a
        pos[k] = p
        vel[k] = v

    gs = np.zeros((horizon, 2)) if want_grad else None
    gv = np.zeros((horizon, 2)) if want_grad else None

    ds = pos - reference
    total = params.w_goal * float((ds * ds).sum())
    if want_grad:
        gs += (2.0 * params.w_goal) * ds

    total += params.w_acce * float((u * u).sum())
    du = np.diff(u, axis=0, prepend=u_prev[None, :])
    total += params.w_jerk * float((du * du).sum())

    if predictions.size:
        diff = pos[:, None, :] - predictions
        dist_sq = (diff * diff).sum(axis=-1)
        speed_sq = (vel * vel).sum(axis=-1)
        margin = params.d_min**2 + params.rho * speed_sq[:, None] - dist_sq
        total += params.w_coll * float((np.logaddexp(0.0, mu * margin) / mu).sum())
        if want_grad:
            sig = _sigmoid(mu * margin)                        # (H, N)
            gs += (-2.0 * params.w_coll) * np.einsum("hn,hnc->hc", sig, diff)
            gv += (2.0 * params.rho * params.w_coll) * sig.sum(axis=1)[:, None] * vel

    over = mu * (vel - params.v_max)
    under = mu * (-vel - params.v_max)
    total += params.w_vel * float(
        ((np.logaddexp(0.0, over) + np.logaddexp(0.0, under)) / mu).sum()
    )
    if not want_grad:
        return total, None
    gv += params.w_vel * (_sigmoid(over) - _sigmoid(under))

    # direct plan terms
    gu = (2.0 * params.w_acce) * u
    jerk = (2.0 * params.w_jerk) * du
    gu += jerk - np.vstack([jerk[1:], np.zeros((1, 2))])

    # adjoint sweep: accumulate dJ/dstate backwards through the rollout
    def revcum(x):
        return np.cumsum(x[::-1], axis=0)[::-1]

    ps = revcum(gs)                       # total dJ/d pos_k
    pv = revcum(gv) + tau * (revcum(ps) - ps)  # total dJ/d vel_k
    gu += (0.5 * tau * tau) * ps + tau * pv
    return total, gu


def _prepare(initial, u_prev, reference, predictions, params):
    reference = np.asarray(reference, dtype=float)
    predictions = np.asarray(predictions, dtype=float)
    horizon = params.horizon
    if reference.shape != (horizon, 2):
        raise ValueError(f"reference must have shape ({horizon}, 2), got {reference.shape}")
    if predictions.ndim != 3 or predictions.shape[0] != horizon or predictions.shape[2] != 2:
        raise ValueError(
            f"predictions must have shape ({horizon}, N, 2), got {predictions.shape}"
        )
    origin = initial.position
    ref_local = reference - origin
    pred_local = predictions - origin if predictions.size else predictions
    return as_vec2(u_prev, "u_prev"), initial.velocity, ref_local, pred_local


def total_cost(plan, u_prev, initial: RobotState, reference, predictions, params: MpcParams) -> float:
    """Weighted objective of a plan: goal tracking + effort + collision + velocity box."""
    u = as_plan(plan)
    u_prev, v0, ref_local, pred_local = _prepare(initial, u_prev, reference, predictions, params)
    value, _ = _objective(u, u_prev, v0, ref_local, pred_local, params, want_grad=False)
    return value


def total_cost_gradient(plan, u_prev, initial: RobotState, reference, predictions, params: MpcParams) -> np.ndarray:
    """Exact gradient of :func:`total_cost` w.r.t. the flattened (2H,) plan."""
    u = as_plan(plan)
    u_prev, v0, ref_local, pred_local = _prepare(initial, u_prev, reference, predictions, params)
    _, grad = _objective(u, u_prev, v0, ref_local, pred_local, params, want_grad=True)
    return grad.ravel()


def _lbfgs_direction(grad, memory):
    """Two-loop recursion: apply the inverse-Hessian estimate to ``grad``."""
    q = grad.copy()
    alphas = []
    for s, y, rho in reversed(memory):
        a = rho * float((s * q).sum())
        alphas.append(a)
        q -= a * y
    if memory:
        s, y, rho = memory[-1]
        q *= float((s * y).sum()) / float((y * y).sum())
    for (s, y, rho), a in zip(memory, reversed(alphas)):
        b = rho * float((y * q).sum())
        q += (a - b) * s
    return q


def _solve_loop_python(u0, v0, ref_local, pred_local, u_prev, params: MpcParams,
                       max_iter: int, grad_tol: float, memory_size: int):
    """Reference implementation of the projected quasi-Newton loop.

    ``crowdmpc._fastsolve.solve_loop`` is its compiled twin; both must
    implement the same algorithm.
    """
    box = params.a_max
    u = np.clip(u0, -box, box)

    def objective(plan, want_grad):
        return _objective(plan, u_prev, v0, ref_local, pred_local, params, want_grad)

    f, g = objective(u, True)
    history = [f]
    alpha_bb = 1.0 / (float(np.abs(g).max()) + 1.0)
    memory: list[tuple[np.ndarray, np.ndarray, float]] = []
    iterations = 0
    converged = False
    stalled = 0

    def line_search(direction, t0):
        t = t0
        for _ in range(40):
            u_new = np.clip(u + t * direction, -box, box)
            decrease = float((g * (u_new - u)).sum())
            if decrease >= 0.0:
                return None
            f_new, _ = objective(u_new, False)
            if np.isfinite(f_new) and f_new <= f + 1e-4 * decrease:
                return u_new
            t *= 0.5
        return None

    for _ in range(max_iter):
        pg = u - np.clip(u - g, -box, box)
        if float(np.sqrt((pg * pg).sum())) <= grad_tol:
            converged = True
            break
        # freeze coordinates sitting on the box with the gradient pushing out
        pinned = ((u <= -box) & (g > 0.0)) | ((u >= box) & (g < 0.0))
        g_free = np.where(pinned, 0.0, g)
        u_new = None
        if memory and g_free.any():
            direction = -_lbfgs_direction(g_free, memory)
            direction[pinned] = 0.0
            if float((direction * g).sum()) < 0.0:
                u_new = line_search(direction, 1.0)
        if u_new is None:
            t0 = float(min(max(alpha_bb, 1e-14), 1e2))
            u_new = line_search(-g, t0)
        if u_new is None:
            break
        f_new, g_new = objective(u_new, True)
        s = u_new - u
        y = g_new - g
        sy = float((s * y).sum())
        if sy > 1e-12 * float(np.sqrt((s * s).sum() * (y * y).sum())):
            memory.append((s, y, 1.0 / sy))
            if len(memory) > memory_size:
                memory.pop(0)
            alpha_bb = float((s * s).sum()) / sy
        else:
            alpha_bb = 1.0 / (float(np.abs(g_new).max()) + 1.0)
        # objective-stall stop: on very stiff instances the projected-gradient
        # tolerance is unreachable while the objective is already flat; a
        # stalled solve returns a stable plan instead of a wandering iterate
        stalled = stalled + 1 if f - f_new <= 1e-8 * max(1.0, abs(f_new)) else 0
        u, f, g = u_new, f_new, g_new
        history.append(f)
        iterations += 1
        if stalled >= 10:
            converged = True
            break

    return u, f, iterations, converged, history


def solve_mpc(
    initial: RobotState,
    u_prev,
    reference,
    predictions,
    params: MpcParams,
    warm_start,
    *,
    max_iter: int = 200,
    grad_tol: float = 1e-4,
    memory_size: int = 10,
    use_compiled: bool | None = None,
) -> MpcSolution:
    """Minimise the plan objective inside the acceleration box.

    Projected limited-memory quasi-Newton descent: coordinates pinned at the
    box with an outward-pushing gradient are frozen, an L-BFGS step is taken
    on the rest, and a monotone Armijo backtracking line search (with a
    spectral projected-gradient fallback) guarantees every accepted iterate
    decreases the objective. Stops when the norm of the projected gradient
    step drops below ``grad_tol``, when the objective stalls (relative
    improvement below 1e-8 for ten accepted steps), or after ``max_iter``
    accepted steps. If the rolled-out velocities overshoot the soft box by
    more than 1e-3 m/s, the solve is repeated with an escalated velocity
    weight until the bound is met. Deterministic given its inputs.
    """
    box = params.a_max
    u_prev, v0, ref_local, pred_local = _prepare(initial, u_prev, reference, predictions, params)
    u0 = np.clip(as_plan(warm_start, "warm_start"), -box, box)

    f0, _ = _objective(u0, u_prev, v0, ref_local, pred_local, params, want_grad=False)
    if not np.isfinite(f0):
        raise SolverInputError(f"objective at warm start is {f0}")

    compiled = _fastsolve.HAVE_NUMBA if use_compiled is None else use_compiled

    def run_loop(u_start, run_params):
        if compiled:
            preds = np.ascontiguousarray(pred_local, dtype=float)
            if preds.size == 0:
                preds = np.zeros((run_params.horizon, 0, 2))
            u, f, iterations, converged, hist, hist_len = _fastsolve.solve_loop(
                u_start, v0, np.ascontiguousarray(ref_local, dtype=float), preds,
                u_prev, box, run_params.tau, run_params.d_min, run_params.rho,
                run_params.mu, run_params.v_max, run_params.w_goal,
                run_params.w_acce, run_params.w_jerk, run_params.w_coll,
                run_params.w_vel, max_iter, grad_tol, memory_size,
            )
            return u, float(f), iterations, converged, hist[:hist_len].tolist()
        return _solve_loop_python(
            u_start, v0, ref_local, pred_local, u_prev, run_params,
            max_iter, grad_tol, memory_size,
        )

    u, f, iterations, converged, history = run_loop(u0, params)

    def box_violation(u_plan):
        _, velocities = rollout_arrays(initial, u_plan, params.tau)
        return max(0.0, float(np.abs(velocities).max(initial=0.0)) - params.v_max)

    # penalty continuation: the soft velocity box can be trampled by the much
    # larger collision weight; escalate until the verified bound holds
    violation = box_violation(u)
    escalated = params
    while violation > 1e-3 and escalated.w_vel < 1e12:
        escalated = replace(escalated, w_vel=escalated.w_vel * 100.0)
        u, _, extra_iters, converged, more = run_loop(u, escalated)
        iterations += extra_iters
        history.extend(more[1:])
        violation = box_violation(u)
    if escalated is not params:
        # report the objective under the nominal weights
        f, _ = _objective(u, u_prev, v0, ref_local, pred_local, params, want_grad=False)

    positions, velocities = rollout_arrays(initial, u, params.tau)
    return MpcSolution(
        plan=u,
        positions=positions,
        velocities=velocities,
        objective=f,
        iterations=iterations,
        converged=converged,
        velocity_violation=violation,
        objective_history=history,
    )
