from .densities import (
    BumpFamily,
    Density,
    SpherePolyDensity,
    TrigDensity,
    UniformDensity,
    kl_quadrature,
    make_bump_family,
    make_density,
    sample_mu,
)
from .diffusion import (
    GeneratorSpec,
    InitialMode,
    SdeConfig,
    girsanov_compensator,
    girsanov_log_ratio,
    make_generator,
    occupation_measure,
    simulate,
    simulate_replicas,
    simulate_stream,
)
from .estimator import bandwidth_rule, certify_positivity, guard_flags, population_smooth, smooth
from .exceptions import (
    BandwidthError,
    ConstructionError,
    InputError,
    NumericalWarning,
    OccupationError,
    SimulationError,
    SolverSizeError,
)
from .kernels import KernelProfile, NormalizedKernel, eta, kernel_eval, make_profile
from .models import (
    DiffusionPath,
    DiscreteMeasure,
    DistanceMode,
    EstimatorSettings,
    ExperimentConfig,
    KLCheckConfig,
    Manifold,
    ManifoldPoint,
    MinimaxConfig,
    QuadratureGrid,
    SmoothedEstimate,
    TransportResult,
    W2Protocol,
)
from .spectral import FourierBasis, bias_decay_check, laplacian_identity_check, neg_sobolev_half, peyre_bound
from .transport import risk_w2, w1_exact, w2_entropic, w2_exact

__version__ = "0.1.0"

__all__ = [
    # Geometry and models
    "Manifold",
    "ManifoldPoint",
    "QuadratureGrid",
    "DiscreteMeasure",
    "DiffusionPath",
    "TransportResult",
    "SmoothedEstimate",
    "DistanceMode",
    "EstimatorSettings",
    "W2Protocol",
    "ExperimentConfig",
    "KLCheckConfig",
    "MinimaxConfig",
    # Densities
    "Density",
    "UniformDensity",
    "TrigDensity",
    "SpherePolyDensity",
    "BumpFamily",
    "make_density",
    "make_bump_family",
    "sample_mu",
    "kl_quadrature",
    # Diffusions
    "GeneratorSpec",
    "InitialMode",
    "SdeConfig",
    "make_generator",
    "simulate",
    "simulate_replicas",
    "simulate_stream",
    "occupation_measure",
    "girsanov_log_ratio",
    "girsanov_compensator",
    # Kernels and estimation
    "KernelProfile",
    "NormalizedKernel",
    "make_profile",
    "eta",
    "kernel_eval",
    "bandwidth_rule",
    "guard_flags",
    "smooth",
    "population_smooth",
    "certify_positivity",
    # Transport and spectral checks
    "w2_exact",
    "w1_exact",
    "w2_entropic",
    "risk_w2",
    "FourierBasis",
    "neg_sobolev_half",
    "peyre_bound",
    "laplacian_identity_check",
    "bias_decay_check",
    # Exceptions
    "OccupationError",
    "InputError",
    "BandwidthError",
    "ConstructionError",
    "SolverSizeError",
    "SimulationError",
    "NumericalWarning",
]
