"""Elastic gradient descent solution paths, their infinitesimal-step limits,
elastic-net baselines and experiment harnesses."""

from .data import (
    BlockSpec,
    BlockSplit,
    Dataset,
    DIABETES_COLUMNS,
    gen_blocks,
    gen_simple,
    gradient_at,
    load_diabetes,
)
from .descent import (
    DescentConfig,
    DirectionResult,
    Flavor,
    SolutionPath,
    c_alpha,
    c_alpha_eps,
    direction,
    h_alpha,
    h_alpha_bounds,
    run_descent,
    select_active,
)
from .elastic_net import (
    ENConfig,
    ENResult,
    LambdaContext,
    default_lambda_grid,
    en_closed_form_isotropic,
    en_path,
    en_solve_cd,
    lambda_approx_from_t,
    lambda_from_t,
    ridge_two_forms,
)
from .errors import (
    AllZeroGradient,
    DomainError,
    ElasticPathsError,
    NoEventInHorizon,
    NonFiniteIterate,
    NotPSD,
    ParseError,
    ShapeError,
    SingularSystem,
    TruncationBreakdown,
)
from .flow import (
    AnalyticalPath,
    FlowConfig,
    FlowSegment,
    coordinate_flow,
    detect_next_event,
    elastic_flow,
    gradient_flow,
    gradient_flow_beta,
    magnus_omega,
)
from .metrics import (
    PathMetrics,
    SelectionResult,
    confusion_rates,
    count_models,
    path_metrics,
    select_one_se_cv,
    select_val_mse,
    true_path_rate,
)

__version__ = "1.0.0"

__all__ = [name for name in dir() if not name.startswith("_")]
