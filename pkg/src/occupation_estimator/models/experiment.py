from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

from .estimate import DistanceMode, PositivityMargin, SmoothingMethod
from .measure import SolverKind

SCHEMA_VERSION = "1"


class W2Protocol(BaseModel):
    """Sampled two-sample protocol for ``E[W2²(estimate, μ)]``.

    ``n_est`` points are resampled from the estimate (multinomially, with a
    uniform jitter inside the grid cell when ``jitter`` is set and the grid
    is a periodic product), ``n_ref`` points are drawn from ``μ``; the W2²
    between the two empirical measures is averaged over ``repeats``.
    """

    model_config = ConfigDict(frozen=True)

    n_ref: int = Field(default=1000, ge=1)
    n_est: int = Field(default=1000, ge=1)
    solver: SolverKind = Field(default=SolverKind.EXACT)
    epsilon: Optional[float] = Field(
        default=None, gt=0, description="Entropic regularisation; default 0.01 diam²"
    )
    repeats: int = Field(default=1, ge=1)
    jitter: bool = Field(default=True)
    max_iter: int = Field(default=2000, ge=1)
    tol: float = Field(default=1e-9, gt=0)


class EstimatorMode(str, Enum):
    OCCUPATION = "occupation"
    SMOOTHED = "smoothed"


class ExperimentConfig(BaseModel):
    """A rate experiment: replicas of paths over a geometric grid of horizons."""

    model_config = ConfigDict(frozen=True)

    manifold: str = Field(default="circle:c=1")
    density: str = Field(default="trig:a1=0.5")
    generator: str = Field(default="langevin")
    t_grid: Tuple[float, ...] = Field(default=(64.0, 128.0, 256.0, 512.0))
    replicas: int = Field(default=8, ge=1)
    kernel: str = Field(default="poly:r=4")
    sobolev_order: int = Field(default=2, ge=0)
    bandwidth_constant: float = Field(default=1.0, gt=0)
    empirical_bandwidth: bool = Field(
        default=False, description="Use the T^-1/2 / T^-1/(d-2) rule"
    )
    distance_mode: DistanceMode = Field(default=DistanceMode.AMBIENT)
    estimator_mode: EstimatorMode = Field(default=EstimatorMode.OCCUPATION)
    margin: PositivityMargin = Field(
        default=PositivityMargin.LIPSCHITZ, description="Positivity certificate of smoothed estimates"
    )
    smoothing_method: SmoothingMethod = Field(default=SmoothingMethod.AUTO)
    clamp_critical_bandwidth: bool = Field(
        default=True, description="Keep h above the critical bandwidth of signed kernels"
    )
    protocol: W2Protocol = Field(default_factory=W2Protocol)
    master_seed: int = Field(default=0, ge=0)
    dt: Optional[float] = Field(default=None, gt=0, description="Default: min(1e-3, h²/10)")
    initial: str = Field(default="invariant")
    initial_point: Optional[Tuple[float, ...]] = None
    record_every: int = Field(default=1, ge=1)
    grid_resolution: Optional[int] = Field(default=None, ge=2)
    guard_constant: float = Field(default=1.0, gt=0)
    workers: int = Field(default=1, ge=1)
    output: Optional[str] = Field(default=None, description="CSV path; JSON summary alongside")

    @field_validator("t_grid")
    @classmethod
    def validate_t_grid(cls, v: Tuple[float, ...]) -> Tuple[float, ...]:
        if len(v) < 4:
            raise ValueError(f"t_grid needs at least 4 horizons, got {len(v)}")
        if any(t <= 0 for t in v):
            raise ValueError("horizons must be positive")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("t_grid must be strictly increasing")
        return v


class RateRow(BaseModel):
    T: float
    t_index: int
    replica: int
    seed: int
    h: Optional[float] = None
    positivity_ok: Optional[bool] = None
    guard_main: Optional[bool] = None
    guard_variance: Optional[bool] = None
    w2: Optional[float] = Field(default=None, description="W2² estimate")
    wall_time: float = 0.0
    error: Optional[str] = None


class RateReport(BaseModel):
    schema_version: str = SCHEMA_VERSION
    config: ExperimentConfig
    rows: List[RateRow]
    mean_w2: Dict[str, float] = Field(default_factory=dict, description="Mean W2² per T")
    slope: Optional[float] = None
    slope_stderr: Optional[float] = None
    theoretical_slope: float
    fit_reliable: bool = True

    @property
    def protocol(self) -> W2Protocol:
        return self.config.protocol


class GirsanovEstimator(str, Enum):
    LOG_RATIO = "log_ratio"
    COMPENSATOR = "compensator"


class KLCheckConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    manifold: str = Field(default="circle:c=1")
    p: str = Field(default="trig:a1=0.3")
    q: str = Field(default="uniform")
    horizon: float = Field(default=10.0, gt=0)
    dt: float = Field(default=1e-3, gt=0)
    replicas: int = Field(default=200, ge=2)
    master_seed: int = Field(default=0, ge=0)
    adjudicate_with: GirsanovEstimator = Field(default=GirsanovEstimator.COMPENSATOR)
    z_threshold: float = Field(default=2.0, gt=0)
    batch_size: int = Field(default=50, ge=1, description="Replicas integrated together")
    workers: int = Field(default=1, ge=1)


class KLReport(BaseModel):
    schema_version: str = SCHEMA_VERSION
    config: KLCheckConfig
    log_ratio_mean: float
    log_ratio_stderr: float
    compensator_mean: float
    compensator_stderr: float
    quadrature_p: float
    quadrature_p_squared: float
    z_p: float
    z_p_squared: float
    matching_mode: Optional[str] = Field(
        default=None, description="'p', 'p_squared', or None when zero or both match"
    )


class MinimaxConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    manifold: str = Field(default="circle:c=1")
    epsilons: Tuple[float, ...] = Field(default=(0.1, 0.05))
    amplitude_fractions: Tuple[float, ...] = Field(
        default=(0.25, 0.5, 1.0), description="v as a fraction of eps^ell"
    )
    sobolev_order: int = Field(default=2, ge=0)
    horizon: float = Field(default=100.0, gt=0)
    pairs: int = Field(default=4, ge=1)
    master_seed: int = Field(default=0, ge=0)

    @field_validator("amplitude_fractions")
    @classmethod
    def validate_fractions(cls, v: Tuple[float, ...]) -> Tuple[float, ...]:
        if any(not 0 < f <= 1 for f in v):
            raise ValueError("amplitude fractions must lie in (0, 1]")
        return v


class MinimaxRow(BaseModel):
    epsilon: float
    amplitude: float
    kappa: float
    centers: int
    hamming: int
    w1: float
    lower_bound_form: float = Field(description="v eps^(d+1) / kappa² * d_H")
    kl_p: float
    kl_p_squared: float


class MinimaxReport(BaseModel):
    schema_version: str = SCHEMA_VERSION
    config: MinimaxConfig
    rows: List[MinimaxRow]
    w1_amplitude_exponent: Optional[float] = None
    kl_amplitude_exponent: Optional[float] = None
    kl_epsilon_exponent: Optional[float] = None
    theoretical_kl_epsilon_exponent: float


DEFAULT_W2_PROTOCOL = W2Protocol()
DEFAULT_EXPERIMENT_CONFIG = ExperimentConfig()
DEFAULT_KL_CHECK_CONFIG = KLCheckConfig()
DEFAULT_MINIMAX_CONFIG = MinimaxConfig()


class EstimateRecord(BaseModel):
    """On-disk form of a smoothed estimate: grid values and the derived measure."""

    schema_version: str = SCHEMA_VERSION
    manifold: str
    grid_resolution: int = Field(..., ge=2)
    h: float = Field(..., gt=0)
    horizon: Optional[float] = None
    kernel: str
    distance_mode: DistanceMode
    positivity_ok: bool
    mass: float
    values: List[float]
    support: List[List[float]]
    weights: List[float]
