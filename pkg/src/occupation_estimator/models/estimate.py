from enum import Enum
from typing import Any, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .manifold import ManifoldPoint, QuadratureGrid, frozen_array
from .measure import DiscreteMeasure


class DistanceMode(str, Enum):
    AMBIENT = "ambient"
    GEODESIC = "geodesic"


class PositivityMargin(str, Enum):
    """How the nonnegativity of a signed estimate is certified between nodes."""

    LIPSCHITZ = "lipschitz"
    GRID = "grid"


class SmoothingMethod(str, Enum):
    AUTO = "auto"
    DIRECT = "direct"
    BINNED = "binned"


class EstimatorSettings(BaseModel):
    margin: PositivityMargin = Field(default=PositivityMargin.LIPSCHITZ)
    method: SmoothingMethod = Field(default=SmoothingMethod.AUTO)
    chunk_size: int = Field(
        default=2048, ge=1, description="Source points per kernel block"
    )
    direct_work_limit: float = Field(
        default=5e7,
        gt=0,
        description="Above this many kernel evaluations `auto` bins onto the grid",
    )


DEFAULT_ESTIMATOR_SETTINGS = EstimatorSettings()


class SmoothedEstimate(BaseModel):
    """Grid values of the smoothed occupation density and the derived measure."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: QuadratureGrid
    values: np.ndarray
    positivity_ok: bool
    fallback_point: ManifoldPoint
    measure: DiscreteMeasure
    h: float = Field(..., gt=0)
    horizon: Optional[float] = Field(default=None, gt=0, description="Observation time T")
    kernel: str
    distance_mode: DistanceMode

    @field_validator("values")
    @classmethod
    def validate_values(cls, v: Any) -> np.ndarray:
        return frozen_array(v, 1, "values")

    @model_validator(mode="after")
    def validate_measure(self) -> "SmoothedEstimate":
        if self.values.shape[0] != self.grid.size:
            raise ValueError("one value per grid node is required")
        if not self.positivity_ok and self.measure.size != 1:
            raise ValueError("a failed positivity check must fall back to a Dirac mass")
        return self

    @property
    def mass(self) -> float:
        return self.grid.integrate(self.values)

    @property
    def is_fallback(self) -> bool:
        return not self.positivity_ok


class GuardFlags(BaseModel):
    """Validity flags of the signed-kernel regime for one (T, h) pair.

    ``main`` is ``T h^d >= c ln T``; ``variance`` is ``T h^{d-2} >= c ln T``.
    """

    model_config = ConfigDict(frozen=True)

    main: bool
    variance: bool


class BiasDecayResult(BaseModel):
    """Negative-Sobolev bias ``|(-Δ)^{-1/2}(p_h - p)|²`` over a bandwidth sweep."""

    model_config = ConfigDict(frozen=True)

    bandwidths: Tuple[float, ...]
    norms_squared: Tuple[float, ...]
    slope: Optional[float] = Field(default=None, description="Fitted exponent in h")
    slope_stderr: Optional[float] = None
    theoretical_slope: float


class ModeContribution(BaseModel):
    """One Fourier mode of ``|(-Δ)^{-1/2} f|²``: ``energy / eigenvalue``."""

    model_config = ConfigDict(frozen=True)

    k: Tuple[int, ...]
    eigenvalue: float = Field(..., gt=0)
    energy: float = Field(..., ge=0, description="|f_k|² in the L² normalised basis")
    contribution: float = Field(..., ge=0)
