"""Primal-dual distributed gradient temporal-difference learning.

Multi-agent policy evaluation as a consensus-constrained saddle-point
problem, with exact linear-algebra oracles to check the stochastic
algorithm against.
"""

from .approx import FeatureMap, RbfSpec, projection_matrix, rbf_features, value_estimate
from .learn import (
    DgtdState,
    MetricsRecord,
    MetricsSeries,
    SamplingMode,
    StepSchedule,
    clamp_box,
    dgtd_step,
    gtd_single,
    residual_step,
    run_dgtd,
    td0_step,
)
from .mrp import (
    MarkovRewardProcess,
    StationaryDist,
    Transition,
    random_mrp,
    sample_double,
    sample_iid,
    sample_trajectory,
    stationary_distribution,
)
from .network import CommNetwork, build_network, laplacian_kron, neighbor_disagreement
from .oracle import (
    BoxSet,
    SaddleSystem,
    StackedState,
    StationarySet,
    assemble_saddle_system,
    dual_objective,
    integrate_ode,
    kkt_residual,
    lyapunov_bilinear,
    msbe,
    mspbe,
    mspbe_gradient,
    primal_objective,
    solve_projected_bellman,
    stationary_set,
)

__version__ = "0.1.0"
