from enum import Enum
from typing import Any, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .manifold import Manifold, frozen_array


class DiscreteMeasure(BaseModel):
    """Weighted point cloud on a manifold, support in intrinsic coordinates."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    manifold: Manifold
    support: np.ndarray
    weights: np.ndarray

    @field_validator("support")
    @classmethod
    def validate_support(cls, v: Any) -> np.ndarray:
        arr = frozen_array(v, 2, "support")
        if arr.shape[0] == 0:
            raise ValueError("support must be nonempty")
        return arr

    @field_validator("weights")
    @classmethod
    def validate_weights(cls, v: Any) -> np.ndarray:
        arr = frozen_array(v, 1, "weights")
        if np.any(arr < 0):
            raise ValueError("weights must be nonnegative")
        if abs(float(arr.sum()) - 1.0) > 1e-10:
            raise ValueError(f"weights must sum to 1, got {float(arr.sum())!r}")
        return arr

    @model_validator(mode="after")
    def validate_shapes(self) -> "DiscreteMeasure":
        if self.support.shape[0] != self.weights.shape[0]:
            raise ValueError("support and weights must have the same length")
        if self.support.shape[1] != self.manifold.intrinsic_dim:
            raise ValueError("support coordinates do not match the manifold dimension")
        return self

    @classmethod
    def uniform(cls, manifold: Manifold, support: np.ndarray) -> "DiscreteMeasure":
        support = np.asarray(support, dtype=float)
        if support.ndim == 1:
            support = support.reshape(-1, manifold.intrinsic_dim)
        n = support.shape[0]
        return cls(manifold=manifold, support=support, weights=np.full(n, 1.0 / n))

    @classmethod
    def dirac(cls, manifold: Manifold, intrinsic: np.ndarray) -> "DiscreteMeasure":
        location = np.asarray(intrinsic, dtype=float).reshape(1, manifold.intrinsic_dim)
        return cls(manifold=manifold, support=location, weights=np.ones(1))

    @classmethod
    def normalized(
        cls, manifold: Manifold, support: np.ndarray, weights: np.ndarray
    ) -> "DiscreteMeasure":
        """Build from nonnegative unnormalised weights."""
        weights = np.asarray(weights, dtype=float)
        total = weights.sum()
        if total <= 0:
            raise ValueError("weights must have positive total mass")
        return cls(manifold=manifold, support=support, weights=weights / total)

    @property
    def size(self) -> int:
        return int(self.weights.shape[0])

    def integrate(self, values: np.ndarray) -> float:
        """Integral of a function given by its values on the support."""
        return float(np.dot(np.asarray(values, dtype=float), self.weights))

    def merged(self) -> "DiscreteMeasure":
        """Merge atoms sitting at identical coordinates."""
        unique, inverse = np.unique(self.support, axis=0, return_inverse=True)
        weights = np.zeros(unique.shape[0])
        np.add.at(weights, np.asarray(inverse).reshape(-1), self.weights)
        return DiscreteMeasure.normalized(self.manifold, unique, weights)


class SolverKind(str, Enum):
    EXACT = "exact"
    ENTROPIC = "entropic"


class TransportResult(BaseModel):
    """Outcome of a transport solve; ``cost`` is W2² (or W1 for linear cost)."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    cost: float = Field(..., ge=0)
    solver: SolverKind
    epsilon: Optional[float] = Field(default=None, description="Entropic regularisation")
    plan: Optional[np.ndarray] = Field(default=None, description="Coupling matrix")
    marginal_residual: float = Field(default=0.0, ge=0)
    converged: bool = True
    iterations: Optional[int] = None
