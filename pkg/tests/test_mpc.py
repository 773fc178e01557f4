import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crowdmpc._fastsolve import HAVE_NUMBA, _eval
from crowdmpc.dynamics import RobotState, reference_trajectory, rollout_arrays
from crowdmpc.mpc import (
    MpcParams,
    SolverInputError,
    _objective,
    cost_acce,
    cost_coll,
    cost_goal,
    cost_jerk,
    cost_vel,
    smax,
    solve_mpc,
    total_cost,
    total_cost_gradient,
)

# frozen with mpmath at 40 digits
SMAX_AT_0 = 0.023104906018664843647
SMAX_AT_MINUS_1 = 3.1192076562799122598e-15
SMAX_AT_1 = 1.0000000000000031192
EIGHT_LN2_OVER_30 = 0.18483924814931874918


def fd_gradient(plan, u_prev, initial, reference, predictions, params, h=1e-6):
    """Central-difference oracle for the plan gradient."""
    flat = np.asarray(plan, dtype=float).ravel()
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        up = flat.copy()
        dn = flat.copy()
        up[i] += h
        dn[i] -= h
        grad[i] = (
            total_cost(up.reshape(-1, 2), u_prev, initial, reference, predictions, params)
            - total_cost(dn.reshape(-1, 2), u_prev, initial, reference, predictions, params)
        ) / (2 * h)
    return grad


def random_instance(seed, n_peds=4, horizon=8):
    rng = np.random.default_rng(seed)
    params = MpcParams(horizon=horizon)
    initial = RobotState(rng.uniform(-1, 1, 2), rng.uniform(-0.8, 0.8, 2))
    goal = initial.position + rng.uniform(-4, 4, 2)
    reference = reference_trajectory(initial.position, goal, horizon, params.tau, params.v_max)
    predictions = initial.position + rng.uniform(-3, 3, (horizon, n_peds, 2))
    plan = rng.uniform(-1.5, 1.5, (horizon, 2))
    u_prev = rng.uniform(-1, 1, 2)
    return plan, u_prev, initial, reference, predictions, params


class TestSmax:
    def test_closed_form_values(self):
        assert abs(smax(0.0, 30.0) - SMAX_AT_0) <= 1e-12
        assert abs(smax(-1.0, 30.0) - SMAX_AT_MINUS_1) <= 1e-13
        assert abs(smax(1.0, 30.0) - SMAX_AT_1) <= 1e-12

    def test_overflow_safe_extremes(self):
        for x in (-1e3 / 30, 1e3 / 30, -1e6, 1e6):
            value = float(smax(x, 30.0))
            assert np.isfinite(value)
            assert value >= max(x, 0.0)

    @given(st.floats(-22, 1.1))
    def test_excess_strictly_positive_where_representable(self, x):
        # the excess over the hinge lies in (0, ln2/mu]; beyond x ~ 1.2 the
        # residual exp(-mu x)/mu falls under one ulp of x in float64
        mu = 30.0
        excess = float(smax(x, mu)) - max(x, 0.0)
        assert 0.0 < excess <= np.log(2.0) / mu + 1e-16

    @given(st.floats(-1e3, 1e3))
    def test_never_below_hinge(self, x):
        assert float(smax(x, 30.0)) >= max(x, 0.0)

    @given(st.floats(-20, 20), st.floats(1e-9, 20))
    def test_monotone_increasing(self, x, gap):
        assert smax(x + gap, 30.0) > smax(x, 30.0)

    def test_rejects_bad_mu(self):
        with pytest.raises(ValueError):
            smax(0.0, 0.0)


class TestCostTerms:
    def test_goal_zero_when_tracking(self):
        ref = np.arange(16.0).reshape(8, 2)
        assert cost_goal(ref.copy(), ref) == 0.0

    def test_goal_single_offset(self):
        ref = np.zeros((3, 2))
        pos = ref.copy()
        pos[1] = [3.0, 4.0]
        assert cost_goal(pos, ref) == 25.0

    def test_goal_quadratic_homogeneity(self, rng):
        ref = rng.normal(size=(8, 2))
        pos = ref + rng.normal(size=(8, 2))
        assert cost_goal(ref + 2 * (pos - ref), ref) == pytest.approx(4 * cost_goal(pos, ref), rel=1e-12)

    def test_goal_length_mismatch(self):
        with pytest.raises(ValueError):
            cost_goal(np.zeros((3, 2)), np.zeros((4, 2)))

    def test_acce_and_jerk_zero_plan(self):
        plan = np.zeros((8, 2))
        assert cost_acce(plan) == 0.0
        assert cost_jerk(plan, [0, 0]) == 0.0

    def test_acce_and_jerk_single_action(self):
        plan = np.zeros((8, 2))
        plan[0] = [1.0, 2.0]
        assert cost_acce(plan) == 5.0
        assert cost_jerk(plan, [0, 0]) == 10.0  # entry and exit steps

    def test_jerk_constant_plan_matches_u_prev(self):
        plan = np.tile([0.7, -0.2], (8, 1))
        assert cost_jerk(plan, [0.7, -0.2]) == 0.0

    def test_coll_far_pedestrian(self):
        params = MpcParams()
        positions = np.zeros((8, 2))
        velocities = np.zeros((8, 2))
        predictions = np.tile([100.0, 0.0], (8, 1, 1))
        assert cost_coll(positions, velocities, predictions, params) <= 1e-12

    def test_coll_at_minimum_distance(self):
        params = MpcParams()
        positions = np.zeros((8, 2))
        velocities = np.zeros((8, 2))
        predictions = np.tile([params.d_min, 0.0], (8, 1, 1))
        value = cost_coll(positions, velocities, predictions, params)
        assert value == pytest.approx(EIGHT_LN2_OVER_30, abs=1e-12)

    def test_coll_empty_crowd(self):
        params = MpcParams()
        assert cost_coll(np.zeros((8, 2)), np.zeros((8, 2)), np.zeros((8, 0, 2)), params) == 0.0


class TestTotalCost:
    def test_vanishes_at_goal_at_rest(self):
        params = MpcParams()
        initial = RobotState([2.0, 1.0], [0.0, 0.0])
        reference = np.tile(initial.position, (8, 1))
        value = total_cost(np.zeros((8, 2)), [0, 0], initial, reference, np.zeros((8, 0, 2)), params)
        assert 0.0 <= value <= 1e-8  # only the velocity-box tail remains

    def test_equals_sum_of_terms(self, rng):
        plan, u_prev, initial, reference, predictions, params = random_instance(7)
        positions, velocities = rollout_arrays(initial, plan, params.tau)
        parts = (
            params.w_goal * cost_goal(positions, reference)
            + params.w_acce * cost_acce(plan)
            + params.w_jerk * cost_jerk(plan, u_prev)
            + params.w_coll * cost_coll(positions, velocities, predictions, params)
            + params.w_vel * cost_vel(velocities, params)
        )
        total = total_cost(plan, u_prev, initial, reference, predictions, params)
        assert total == pytest.approx(parts, rel=1e-12)

    def test_weight_linearity(self):
        plan, u_prev, initial, reference, predictions, _ = random_instance(11)
        base = MpcParams(w_coll=0.0, w_vel=0.0, w_acce=0.0, w_jerk=0.0, w_goal=1.0)
        doubled = MpcParams(w_coll=0.0, w_vel=0.0, w_acce=0.0, w_jerk=0.0, w_goal=2.0)
        a = total_cost(plan, u_prev, initial, reference, predictions, base)
        b = total_cost(plan, u_prev, initial, reference, predictions, doubled)
        assert b == pytest.approx(2 * a, rel=1e-12)


class TestGradient:
    def test_zero_at_stationary_optimum(self):
        params = MpcParams()
        initial = RobotState([0.0, 0.0], [0.0, 0.0])
        reference = np.zeros((8, 2))
        grad = total_cost_gradient(
            np.zeros((8, 2)), [0, 0], initial, reference, np.zeros((8, 0, 2)), params
        )
        assert np.array_equal(grad, np.zeros(16))

    def test_single_step_chain_rule(self):
        # only the goal term active, H = 1: dJ/du = 2 w (s' - ref) * tau^2/2
        params = MpcParams(horizon=1, w_acce=0.0, w_jerk=0.0, w_coll=0.0, w_vel=0.0)
        initial = RobotState([0.0, 0.0], [0.3, -0.1])
        reference = np.array([[1.0, 2.0]])
        plan = np.array([[0.5, 0.25]])
        pos, _ = rollout_arrays(initial, plan, params.tau)
        expected = 2.0 * params.w_goal * (pos[0] - reference[0]) * (0.5 * params.tau**2)
        grad = total_cost_gradient(plan, [0, 0], initial, reference, np.zeros((1, 0, 2)), params)
        assert np.allclose(grad, expected, rtol=1e-12)

    @pytest.mark.parametrize("seed", range(12))
    def test_matches_central_differences(self, seed):
        plan, u_prev, initial, reference, predictions, params = random_instance(seed)
        analytic = total_cost_gradient(plan, u_prev, initial, reference, predictions, params)
        numeric = fd_gradient(plan, u_prev, initial, reference, predictions, params)
        rel = np.linalg.norm(numeric - analytic) / np.linalg.norm(analytic)
        assert rel <= 1e-4


@pytest.mark.skipif(not HAVE_NUMBA, reason="compiled path unavailable")
class TestCompiledTwin:
    @pytest.mark.parametrize("seed", range(8))
    def test_objective_and_gradient_agree(self, seed):
        plan, u_prev, initial, reference, predictions, params = random_instance(seed, n_peds=3)
        ref_local = reference - initial.position
        pred_local = predictions - initial.position
        f_ref, g_ref = _objective(plan, u_prev, initial.velocity, ref_local, pred_local, params, True)
        gu = np.zeros_like(plan)
        f_fast = _eval(
            plan, initial.velocity, ref_local, np.ascontiguousarray(pred_local), u_prev,
            params.tau, params.d_min, params.rho, params.mu, params.v_max,
            params.w_goal, params.w_acce, params.w_jerk, params.w_coll, params.w_vel,
            True, gu,
        )
        assert f_fast == pytest.approx(f_ref, rel=1e-12)
        assert np.allclose(gu, g_ref, rtol=1e-9, atol=1e-12)

    def test_solver_paths_agree_on_converging_instance(self):
        params = MpcParams()
        initial = RobotState([0.0, 0.0], [0.0, 0.0])
        reference = reference_trajectory([0, 0], [2.5, 1.0], 8, params.tau, params.v_max)
        predictions = np.tile([0.0, -3.0], (8, 1, 1))  # pedestrian well clear
        warm = np.zeros((8, 2))
        fast = solve_mpc(initial, [0, 0], reference, predictions, params, warm, use_compiled=True)
        slow = solve_mpc(initial, [0, 0], reference, predictions, params, warm, use_compiled=False)
        assert fast.converged and slow.converged
        # both reach the same optimum value; the exact minimiser coordinates
        # (and stall points) may differ within the tolerance ball along flat
        # directions
        assert fast.objective == pytest.approx(slow.objective, rel=1e-6)

    def test_solver_paths_both_satisfy_contracts_when_capped(self):
        plan, u_prev, initial, reference, predictions, params = random_instance(3, n_peds=2)
        warm = np.clip(plan, -params.a_max, params.a_max)
        warm_cost = total_cost(warm, u_prev, initial, reference, predictions, params)
        for use_compiled in (True, False):
            sol = solve_mpc(initial, u_prev, reference, predictions, params, warm,
                            use_compiled=use_compiled)
            assert np.abs(sol.plan).max() <= params.a_max
            assert sol.objective <= warm_cost + 1e-9 * max(1.0, abs(warm_cost))


class TestSolver:
    def make_goal_instance(self):
        params = MpcParams()
        initial = RobotState([0.0, 0.0], [0.0, 0.0])
        goal = np.array([1.0, 0.0])
        reference = reference_trajectory(initial.position, goal, params.horizon, params.tau, params.v_max)
        return params, initial, goal, reference, np.zeros((params.horizon, 0, 2))

    def test_accelerates_toward_goal_and_beats_line_search_oracle(self):
        params, initial, goal, reference, predictions = self.make_goal_instance()
        sol = solve_mpc(initial, [0, 0], reference, predictions, params, np.zeros((8, 2)))
        direction = goal / np.linalg.norm(goal)
        assert float(sol.plan[0] @ direction) > 0.0
        # grid-search oracle over constant plans along the goal line
        best = np.inf
        for alpha in np.linspace(-params.a_max, params.a_max, 161):
            candidate = np.tile(alpha * direction, (8, 1))
            best = min(best, total_cost(candidate, [0, 0], initial, reference, predictions, params))
        assert sol.objective <= best + 1e-9

    def test_warm_start_fixed_point(self):
        params, initial, _, reference, predictions = self.make_goal_instance()
        first = solve_mpc(initial, [0, 0], reference, predictions, params, np.zeros((8, 2)))
        second = solve_mpc(initial, [0, 0], reference, predictions, params, first.plan)
        assert second.converged
        assert np.abs(second.plan - first.plan).max() <= 1e-8

    def test_objective_never_worse_than_warm_start(self, rng):
        for seed in range(5):
            plan, u_prev, initial, reference, predictions, params = random_instance(seed)
            warm = np.clip(plan, -params.a_max, params.a_max)
            sol = solve_mpc(initial, u_prev, reference, predictions, params, warm)
            warm_cost = total_cost(warm, u_prev, initial, reference, predictions, params)
            assert sol.objective <= warm_cost + 1e-9 * max(1.0, abs(warm_cost))

    def test_monotone_objective_history(self):
        plan, u_prev, initial, reference, predictions, params = random_instance(2)
        sol = solve_mpc(initial, u_prev, reference, predictions, params, np.zeros((8, 2)))
        history = np.asarray(sol.objective_history)
        assert (np.diff(history) <= 0.0).all()

    def test_box_feasibility_exact(self):
        for seed in range(5):
            plan, u_prev, initial, reference, predictions, params = random_instance(seed)
            sol = solve_mpc(initial, u_prev, reference, predictions, params, plan)
            assert np.abs(sol.plan).max() <= params.a_max

    def test_velocity_violation_small(self):
        params, initial, _, reference, predictions = self.make_goal_instance()
        sol = solve_mpc(initial, [0, 0], reference, predictions, params, np.zeros((8, 2)))
        assert sol.velocity_violation <= 1e-3

    def test_detour_clearance_beats_straight_plan(self):
        params = MpcParams()
        initial = RobotState([0.0, 0.0], [0.0, 0.0])
        goal = np.array([4.0, 0.0])
        reference = reference_trajectory(initial.position, goal, params.horizon, params.tau, params.v_max)
        # pedestrian parked on the straight-line midpoint of the horizon's reach
        predictions = np.tile([1.6, 0.0], (8, 1, 1))
        no_coll = MpcParams(w_coll=0.0)
        straight = solve_mpc(initial, [0, 0], reference, np.zeros((8, 0, 2)), no_coll, np.zeros((8, 2)))
        avoiding = solve_mpc(initial, [0, 0], reference, predictions, params, np.zeros((8, 2)))

        def min_clearance(solution):
            d = solution.positions - np.array([1.6, 0.0])
            return float(np.sqrt((d * d).sum(axis=1)).min())

        assert min_clearance(avoiding) > min_clearance(straight)

    def test_translation_invariance(self):
        # solved in the robot-centred frame, so an (exactly representable)
        # rigid shift of the whole instance leaves the plan unchanged
        def quantize(x):
            return np.round(np.asarray(x, dtype=float) * 2.0**20) / 2.0**20

        params = MpcParams()
        rng = np.random.default_rng(42)
        initial = RobotState(quantize(rng.uniform(-2, 2, 2)), quantize(rng.uniform(-0.5, 0.5, 2)))
        reference = quantize(initial.position + rng.uniform(-3, 3, (8, 2)))
        predictions = quantize(initial.position + rng.uniform(-3, 3, (8, 3, 2)))
        shift = quantize([103.7, -58.1])
        sol = solve_mpc(initial, [0, 0], reference, predictions, params, np.zeros((8, 2)))
        moved = RobotState(initial.position + shift, initial.velocity)
        sol_shifted = solve_mpc(
            moved, [0, 0], reference + shift, predictions + shift, params, np.zeros((8, 2))
        )
        assert np.abs(sol.plan - sol_shifted.plan).max() <= 1e-9

    @given(st.integers(0, 200))
    def test_objective_translation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        params = MpcParams()
        plan = rng.uniform(-2, 2, (8, 2))
        u_prev = rng.uniform(-1, 1, 2)
        initial = RobotState(rng.uniform(-2, 2, 2), rng.uniform(-1, 1, 2))
        reference = initial.position + rng.uniform(-3, 3, (8, 2))
        predictions = initial.position + rng.uniform(-3, 3, (8, 2, 2))
        shift = rng.uniform(-200, 200, 2)
        a = total_cost(plan, u_prev, initial, reference, predictions, params)
        b = total_cost(
            plan, u_prev, RobotState(initial.position + shift, initial.velocity),
            reference + shift, predictions + shift, params,
        )
        assert b == pytest.approx(a, rel=1e-9, abs=1e-9)

    def test_deterministic(self):
        plan, u_prev, initial, reference, predictions, params = random_instance(9)
        a = solve_mpc(initial, u_prev, reference, predictions, params, plan)
        b = solve_mpc(initial, u_prev, reference, predictions, params, plan)
        assert np.array_equal(a.plan, b.plan)
        assert a.objective == b.objective
        assert a.iterations == b.iterations

    def test_non_finite_objective_rejected(self):
        params = MpcParams()
        initial = RobotState([0.0, 0.0], [0.0, 0.0])
        reference = np.full((8, 2), np.inf)
        with pytest.raises(SolverInputError):
            solve_mpc(initial, [0, 0], reference, np.zeros((8, 0, 2)), params, np.zeros((8, 2)))
