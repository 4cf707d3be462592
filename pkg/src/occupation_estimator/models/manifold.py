import math
from enum import Enum
from typing import Any, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


def frozen_array(value: Any, ndim: int, name: str) -> np.ndarray:
    """Coerce ``value`` to a read-only float array with ``ndim`` dimensions."""
    arr = np.array(value, dtype=float)
    if ndim == 2 and arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != ndim:
        raise ValueError(f"`{name}` must be a {ndim}-dimensional array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"`{name}` contains non-finite values")
    arr.flags.writeable = False
    return arr


class ManifoldKind(str, Enum):
    CIRCLE = "circle"
    SPHERE = "sphere"
    TORUS = "torus"


class Manifold(BaseModel):
    """A model manifold: circle, 2-sphere or flat torus.

    ``size`` is the circumference of a circle, the radius of a sphere or the
    side length of a flat torus. ``dimension`` is the intrinsic dimension.
    """

    model_config = ConfigDict(frozen=True)

    kind: ManifoldKind
    size: float = Field(..., gt=0, description="Circumference, radius or side length")
    dimension: int = Field(default=1, ge=1, le=16)

    @model_validator(mode="after")
    def validate_dimension(self) -> "Manifold":
        if self.kind == ManifoldKind.CIRCLE and self.dimension != 1:
            raise ValueError("a circle has intrinsic dimension 1")
        if self.kind == ManifoldKind.SPHERE and self.dimension != 2:
            raise ValueError("the sphere has intrinsic dimension 2")
        return self

    @classmethod
    def circle(cls, circumference: float = 1.0) -> "Manifold":
        return cls(kind=ManifoldKind.CIRCLE, size=circumference, dimension=1)

    @classmethod
    def sphere(cls, radius: float = 1.0) -> "Manifold":
        return cls(kind=ManifoldKind.SPHERE, size=radius, dimension=2)

    @classmethod
    def torus(cls, dimension: int, side: float = 1.0) -> "Manifold":
        return cls(kind=ManifoldKind.TORUS, size=side, dimension=dimension)

    @property
    def is_periodic(self) -> bool:
        """True for the flat manifolds, whose intrinsic chart is [0, s)^d."""
        return self.kind != ManifoldKind.SPHERE

    @property
    def intrinsic_dim(self) -> int:
        return self.dimension

    @property
    def ambient_dim(self) -> int:
        if self.kind == ManifoldKind.SPHERE:
            return 3
        return 2 * self.dimension

    @property
    def period(self) -> float:
        if not self.is_periodic:
            raise AttributeError("the sphere has no period")
        return self.size

    @property
    def embedding_radius(self) -> float:
        """Radius of each embedded circle (flat kinds) or of the sphere."""
        if self.kind == ManifoldKind.SPHERE:
            return self.size
        return self.size / (2.0 * math.pi)

    @property
    def injectivity_radius(self) -> float:
        if self.kind == ManifoldKind.SPHERE:
            return math.pi * self.size
        return self.size / 2.0

    @property
    def diameter(self) -> float:
        if self.kind == ManifoldKind.SPHERE:
            return math.pi * self.size
        return self.size * math.sqrt(self.dimension) / 2.0

    @property
    def total_volume(self) -> float:
        if self.kind == ManifoldKind.SPHERE:
            return 4.0 * math.pi * self.size**2
        return self.size**self.dimension

    @property
    def spec(self) -> str:
        """Config-file form, e.g. ``"torus:d=5,s=1"``."""
        if self.kind == ManifoldKind.CIRCLE:
            return f"circle:c={self.size:g}"
        if self.kind == ManifoldKind.SPHERE:
            return f"sphere:r={self.size:g}"
        return f"torus:d={self.dimension},s={self.size:g}"


class ManifoldPoint(BaseModel):
    """A location on a manifold in intrinsic and ambient coordinates.

    Build points with ``geometry.point`` so that ``ambient`` is always the
    embedding of ``intrinsic``.
    """

    model_config = ConfigDict(frozen=True)

    intrinsic: Tuple[float, ...]
    ambient: Tuple[float, ...]

    def intrinsic_array(self) -> np.ndarray:
        return np.asarray(self.intrinsic, dtype=float)

    def ambient_array(self) -> np.ndarray:
        return np.asarray(self.ambient, dtype=float)


class QuadratureGrid(BaseModel):
    """Quadrature nodes (intrinsic coordinates) and volume weights.

    ``shape`` is the product layout of the nodes (C order), ``mesh`` the
    covering radius: every manifold point lies within ``mesh`` of a node.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    manifold: Manifold
    nodes: np.ndarray
    weights: np.ndarray
    shape: Tuple[int, ...]
    mesh: float = Field(..., gt=0)

    @field_validator("nodes")
    @classmethod
    def validate_nodes(cls, v: Any) -> np.ndarray:
        return frozen_array(v, 2, "nodes")

    @field_validator("weights")
    @classmethod
    def validate_weights(cls, v: Any) -> np.ndarray:
        arr = frozen_array(v, 1, "weights")
        if np.any(arr < 0):
            raise ValueError("quadrature weights must be nonnegative")
        return arr

    @model_validator(mode="after")
    def validate_layout(self) -> "QuadratureGrid":
        n = int(np.prod(self.shape))
        if self.nodes.shape != (n, self.manifold.intrinsic_dim):
            raise ValueError(
                f"nodes shape {self.nodes.shape} does not match layout {self.shape}"
            )
        if self.weights.shape != (n,):
            raise ValueError("one weight per node is required")
        volume = self.manifold.total_volume
        if abs(float(self.weights.sum()) - volume) > 1e-10 * volume:
            raise ValueError("quadrature weights must sum to the total volume")
        return self

    @property
    def size(self) -> int:
        return int(self.weights.shape[0])

    @property
    def is_periodic_product(self) -> bool:
        """Uniform periodic trapezoid layout (flat manifolds only)."""
        return self.manifold.is_periodic

    @property
    def resolution(self) -> Optional[int]:
        if self.is_periodic_product:
            return self.shape[0]
        return None

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(np.asarray(values, dtype=float), self.weights))
