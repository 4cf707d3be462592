from typing import Any, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .manifold import Manifold, frozen_array


class DiffusionPath(BaseModel):
    """A recorded trajectory: times ``t_0 = 0 < ... < t_N = T`` and positions.

    ``record_every`` is the number of integrator steps between recorded
    points; Girsanov ratios need every step (``record_every == 1``).
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    manifold: Manifold
    times: np.ndarray
    intrinsic: np.ndarray
    dt: float = Field(..., gt=0, description="Integrator step size")
    record_every: int = Field(default=1, ge=1)
    seed: Optional[int] = None
    generator: str = Field(default="langevin", description="Generator provenance")
    density: str = Field(default="uniform", description="Target density provenance")

    @field_validator("times")
    @classmethod
    def validate_times(cls, v: Any) -> np.ndarray:
        arr = frozen_array(v, 1, "times")
        if arr.shape[0] == 0:
            raise ValueError("a path needs at least one point")
        if np.any(np.diff(arr) <= 0):
            raise ValueError("times must be strictly increasing")
        return arr

    @field_validator("intrinsic")
    @classmethod
    def validate_intrinsic(cls, v: Any) -> np.ndarray:
        return frozen_array(v, 2, "intrinsic")

    @model_validator(mode="after")
    def validate_shapes(self) -> "DiffusionPath":
        if self.intrinsic.shape != (self.times.shape[0], self.manifold.intrinsic_dim):
            raise ValueError(
                f"positions shape {self.intrinsic.shape} does not match "
                f"{self.times.shape[0]} times on a {self.manifold.intrinsic_dim}-manifold"
            )
        return self

    @property
    def horizon(self) -> float:
        """Observed duration ``t_N - t_0``."""
        return float(self.times[-1] - self.times[0])

    @property
    def n_points(self) -> int:
        return int(self.times.shape[0])

    def window(self, start: int, stop: int) -> "DiffusionPath":
        """Sub-path with recorded points ``start..stop`` inclusive."""
        if not 0 <= start < stop < self.n_points:
            raise ValueError(f"invalid window [{start}, {stop}] for {self.n_points} points")
        return self.model_copy(
            update={
                "times": self.times[start : stop + 1],
                "intrinsic": self.intrinsic[start : stop + 1],
            }
        )
