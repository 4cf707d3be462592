from .estimate import (
    DEFAULT_ESTIMATOR_SETTINGS,
    BiasDecayResult,
    DistanceMode,
    EstimatorSettings,
    GuardFlags,
    ModeContribution,
    PositivityMargin,
    SmoothedEstimate,
    SmoothingMethod,
)
from .experiment import (
    DEFAULT_EXPERIMENT_CONFIG,
    DEFAULT_KL_CHECK_CONFIG,
    DEFAULT_MINIMAX_CONFIG,
    DEFAULT_W2_PROTOCOL,
    SCHEMA_VERSION,
    EstimateRecord,
    EstimatorMode,
    ExperimentConfig,
    GirsanovEstimator,
    KLCheckConfig,
    KLReport,
    MinimaxConfig,
    MinimaxReport,
    MinimaxRow,
    RateReport,
    RateRow,
    W2Protocol,
)
from .manifold import Manifold, ManifoldKind, ManifoldPoint, QuadratureGrid
from .measure import DiscreteMeasure, SolverKind, TransportResult
from .path import DiffusionPath

__all__ = [
    "Manifold",
    "ManifoldKind",
    "ManifoldPoint",
    "QuadratureGrid",
    "DiscreteMeasure",
    "SolverKind",
    "TransportResult",
    "DiffusionPath",
    "DistanceMode",
    "PositivityMargin",
    "SmoothingMethod",
    "EstimatorSettings",
    "DEFAULT_ESTIMATOR_SETTINGS",
    "SmoothedEstimate",
    "GuardFlags",
    "BiasDecayResult",
    "ModeContribution",
    "SCHEMA_VERSION",
    "W2Protocol",
    "DEFAULT_W2_PROTOCOL",
    "EstimatorMode",
    "ExperimentConfig",
    "DEFAULT_EXPERIMENT_CONFIG",
    "RateRow",
    "RateReport",
    "GirsanovEstimator",
    "KLCheckConfig",
    "DEFAULT_KL_CHECK_CONFIG",
    "KLReport",
    "MinimaxConfig",
    "DEFAULT_MINIMAX_CONFIG",
    "MinimaxRow",
    "MinimaxReport",
    "EstimateRecord",
]
