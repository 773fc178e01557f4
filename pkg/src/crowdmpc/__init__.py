"""Crowd navigation: prediction-coupled MPC, ORCA pedestrians, benchmark harness."""

from .dynamics import (
    InvalidStateError,
    RobotState,
    reference_trajectory,
    rollout,
    rollout_arrays,
    step_dynamics,
)
from .ibr import IbrParams, TimestepResult, initialize_warm_start, shift_warm_start, solve_timestep
from .manifest import ManifestError, RunManifest, derive_seed, parse_manifest, save_manifest
from .mpc import (
    MpcParams,
    MpcSolution,
    SolverInputError,
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
from .orca import HalfPlane, OrcaAgent, lp2d, lp3d, orca_halfplane, orca_step, orca_velocity
from .predictor import (
    ConstantVelocity,
    LstmWeights,
    PredictorKind,
    SocialLstm,
    WeightShapeError,
    WorldHistory,
    load_weights,
    predict_next,
    random_weights,
    rollout_predictions,
    save_weights,
    zero_weights,
)
from .sim import (
    MetricsSummary,
    Scenario,
    ScenarioConfig,
    ScenarioError,
    SimOutcome,
    SimStatus,
    TrajectoryLog,
    compute_metrics,
    discomfort_check,
    generate_scenario,
    read_log,
    run_simulation,
    write_log,
)

__version__ = "0.1.0"
