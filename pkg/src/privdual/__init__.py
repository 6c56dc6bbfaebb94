"""Cloud-mediated primal-dual solver for coupled multi-agent programs with
joint-differentially-private messaging and misreport-incentive bounds."""

from .analysis import (
    BetaBound,
    SaddlePoint,
    beta_bound,
    error_curves,
    lagrangian,
    lambda_bound,
    load_saddle_point,
    misreport_gain,
    rho_bound,
    save_saddle_point,
    solve_saddle_point,
)
from .engine import (
    AdjacentClipped,
    Behavior,
    ConstantTarget,
    RunState,
    Schedule,
    Trajectory,
    Truthful,
    agent_primal_update,
    cloud_compute_q,
    cloud_dual_update,
    run,
    step_sizes,
)
from .errors import ConfigError, NumericsError, SlaterViolationError
from .mechanism import (
    NoisePlan,
    NoiseStream,
    calibrate,
    check_adjacency,
    constraint_sensitivity,
    gradient_sensitivity,
    laplace_inverse_cdf,
    sample_laplace,
)
from .problem import (
    AgentSpec,
    CallbackConstraintSet,
    ConstraintSet,
    DerivedConstants,
    ProblemSpec,
    QuadraticConstraintSet,
    QuadraticObjective,
    derive_constants,
    eval_constraints,
    eval_jacobian_block,
    eval_objective,
)
from .projections import DualBall, project_box, project_dual

__version__ = "0.1.0"
