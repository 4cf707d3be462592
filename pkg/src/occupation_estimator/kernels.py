"""Radial kernel profiles, the normaliser η_h and evaluation of K_h.

A profile ``K`` is a polynomial in ``t`` on ``[0, 1]`` and zero beyond. It is
normalised so that ``∫_{R^d} K(|u|) du = 1`` in its target dimension. The
smoothing kernel on a manifold is

    K_h(x, y) = K(dist(x, y) / h) / η_h(x),   η_h(x) = ∫_M K(dist(x, y) / h) dy,

with ``dist`` the ambient (chordal) or the geodesic distance. All model
manifolds are homogeneous, so ``η_h`` does not depend on ``x``.
"""

import itertools
import logging
import math
from typing import Iterator, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import Polynomial
from pydantic import BaseModel, ConfigDict, Field
from scipy import integrate, special

from . import geometry
from .exceptions import BandwidthError, ConstructionError, InputError
from .models.estimate import DistanceMode
from .models.manifold import Manifold, ManifoldKind, ManifoldPoint, QuadratureGrid
from .specs import KernelFamily, KernelSpec, parse_kernel

logger = logging.getLogger(__name__)

MAX_KERNEL_DIMENSION = 6
_QUAD_OPTIONS = {"epsabs": 1e-14, "epsrel": 1e-12, "limit": 200}
_MAX_ETA_GRID_NODES = 4_000_000


def sphere_area(dimension: int) -> float:
    """Surface area ``S_{d-1}`` of the unit sphere in ``R^d``."""
    return 2.0 * math.pi ** (dimension / 2.0) / special.gamma(dimension / 2.0)


class KernelProfile(BaseModel):
    """A radial profile with its order, Lipschitz constant and sup norm."""

    model_config = ConfigDict(frozen=True)

    family: KernelFamily
    order: int = Field(..., ge=0, le=8)
    dimension: int = Field(..., ge=1, le=MAX_KERNEL_DIMENSION)
    coefficients: Tuple[float, ...] = Field(..., description="Power series in t on [0, 1]")
    lipschitz: float = Field(..., ge=0)
    sup_norm: float = Field(..., gt=0)
    nonneg: bool

    @property
    def polynomial(self) -> Polynomial:
        return Polynomial(self.coefficients)

    @property
    def spec(self) -> str:
        return KernelSpec(family=self.family, order=self.order).text

    def __call__(self, t: Union[float, np.ndarray]) -> np.ndarray:
        t = np.abs(np.asarray(t, dtype=float))
        return np.where(t <= 1.0, self.polynomial(np.minimum(t, 1.0)), 0.0)

    def derivative(self, t: Union[float, np.ndarray]) -> np.ndarray:
        t = np.abs(np.asarray(t, dtype=float))
        return np.where(t <= 1.0, self.polynomial.deriv()(np.minimum(t, 1.0)), 0.0)


def _extreme_abs(poly: Polynomial) -> Tuple[float, float]:
    """Largest absolute value and minimum of ``poly`` on ``[0, 1]``."""
    candidates = [0.0, 1.0]
    for root in poly.deriv().roots():
        if abs(root.imag) < 1e-12 and 0.0 <= root.real <= 1.0:
            candidates.append(float(root.real))
    values = poly(np.array(candidates))
    return float(np.max(np.abs(values))), float(np.min(values))


def _finish_profile(
    family: KernelFamily, order: int, dimension: int, poly: Polynomial
) -> KernelProfile:
    sup_norm, minimum = _extreme_abs(poly)
    lipschitz, _ = _extreme_abs(poly.deriv())
    # the profile jumps to zero at t = 1 unless K(1) = 0
    lipschitz = lipschitz if abs(poly(1.0)) < 1e-12 else math.inf
    return KernelProfile(
        family=family,
        order=order,
        dimension=dimension,
        coefficients=tuple(float(c) for c in poly.coef),
        lipschitz=lipschitz,
        sup_norm=sup_norm,
        nonneg=minimum >= -1e-14,
    )


def make_profile(
    family: Union[str, KernelSpec, KernelFamily], dimension: int, order: Optional[int] = None
) -> KernelProfile:
    """Build a kernel profile normalised for ``R^dimension``.

    ``poly_order(r)`` is ``K(t) = (Σ_j c_j t^{2j}) (1 - t²)²`` with ``r / 2``
    coefficients chosen so that ``∫K = 1`` and the even radial moments of
    degree ``2 .. r - 2`` vanish; odd moments vanish by symmetry.

    Raises:
        InputError: Unsupported order or dimension.
        ConstructionError: If the moment system is singular.
    """
    if isinstance(family, str):
        spec = parse_kernel(family)
    elif isinstance(family, KernelFamily):
        spec = KernelSpec(family=family, order=order or 2)
    else:
        spec = family
    if order is not None and spec.family == KernelFamily.POLY:
        spec = KernelSpec(family=KernelFamily.POLY, order=order)
    if not 1 <= dimension <= MAX_KERNEL_DIMENSION:
        raise InputError(
            f"Kernel dimension must be in [1, {MAX_KERNEL_DIMENSION}], got {dimension}",
            {"dimension": dimension},
        )
    area = sphere_area(dimension)
    if spec.family == KernelFamily.TRIANGULAR:
        c = dimension * (dimension + 1) / area
        return _finish_profile(spec.family, 2, dimension, Polynomial([c, -c]))
    if spec.family == KernelFamily.EPANECHNIKOV:
        c = dimension * (dimension + 2) / (2.0 * area)
        return _finish_profile(spec.family, 2, dimension, Polynomial([c, 0.0, -c]))

    r = spec.order
    if r < 2 or r % 2 or r > 8:
        raise InputError(f"Kernel order must be even and in [2, 8], got {r}", {"order": r})
    n = r // 2
    half = dimension / 2.0
    system = np.array(
        [[0.5 * area * special.beta(j + k + half, 3.0) for j in range(n)] for k in range(n)]
    )
    rhs = np.zeros(n)
    rhs[0] = 1.0
    try:
        if np.linalg.cond(system) > 1e14:
            raise np.linalg.LinAlgError("ill-conditioned")
        coeffs = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise ConstructionError(
            f"Moment system for poly:r={r} in dimension {dimension} is singular",
            {"order": r, "dimension": dimension, "reason": str(exc)},
        )
    series = np.zeros(2 * n - 1)
    series[0::2] = coeffs
    poly = Polynomial(series) * Polynomial([1.0, 0.0, -2.0, 0.0, 1.0])
    return _finish_profile(KernelFamily.POLY, r, dimension, poly)


def sphere_moment(alpha: Sequence[int]) -> float:
    """``∫_{S^{d-1}} ω^α dω`` in closed form."""
    alpha = tuple(int(a) for a in alpha)
    if any(a % 2 for a in alpha):
        return 0.0
    d = len(alpha)
    log_num = sum(special.gammaln((a + 1) / 2.0) for a in alpha)
    return float(2.0 * math.exp(log_num - special.gammaln((sum(alpha) + d) / 2.0)))


def moment_integral(profile: KernelProfile, alpha: Sequence[int]) -> float:
    """``∫_{R^d} K(|u|) u^α du`` by adaptive radial quadrature.

    Independent of the Beta-function system used to build the profile.
    """
    if len(alpha) != profile.dimension:
        raise InputError(f"Multi-index {tuple(alpha)} does not have {profile.dimension} entries")
    angular = sphere_moment(alpha)
    if angular == 0.0:
        return 0.0
    power = sum(alpha) + profile.dimension - 1
    radial, _ = integrate.quad(lambda t: float(profile(t)) * t**power, 0.0, 1.0, **_QUAD_OPTIONS)
    return float(radial * angular)


def multi_indices(dimension: int, max_degree: int, min_degree: int = 1) -> Iterator[Tuple[int, ...]]:
    for total in range(min_degree, max_degree + 1):
        for combo in itertools.combinations_with_replacement(range(dimension), total):
            alpha = [0] * dimension
            for axis in combo:
                alpha[axis] += 1
            yield tuple(alpha)


def vanishing_moments(profile: KernelProfile) -> Tuple[Tuple[int, ...], ...]:
    """Multi-indices whose moments must vanish for a kernel of order ``r``."""
    return tuple(multi_indices(profile.dimension, profile.order - 1))


# --------------------------------------------------------------------------
# Normaliser
# --------------------------------------------------------------------------


class Normalizer(BaseModel):
    """The value of ``η_h`` and how it was obtained (``radial`` or ``grid``)."""

    model_config = ConfigDict(frozen=True)

    manifold: Manifold
    h: float
    distance_mode: DistanceMode
    value: float
    method: str

    def __call__(self, x: Optional[ManifoldPoint] = None) -> float:
        return self.value

    def values(self, intrinsic: np.ndarray) -> np.ndarray:
        n = np.asarray(intrinsic).reshape(-1, self.manifold.intrinsic_dim).shape[0]
        return np.full(n, self.value)

    @property
    def scaled(self) -> float:
        """``h^{-d} η_h``."""
        return self.value / self.h**self.manifold.intrinsic_dim


def _radial_eta(
    manifold: Manifold, profile: KernelProfile, h: float, mode: DistanceMode
) -> Optional[float]:
    def quad(func, upper: float) -> float:  # type: ignore[no-untyped-def]
        value, _ = integrate.quad(func, 0.0, upper, **_QUAD_OPTIONS)
        return float(value)

    d = manifold.intrinsic_dim
    if manifold.kind == ManifoldKind.SPHERE:
        r = manifold.size
        if mode == DistanceMode.GEODESIC:
            upper = min(math.pi, h / r)
            return 2.0 * math.pi * r**2 * quad(
                lambda th: float(profile(r * th / h)) * math.sin(th), upper
            )
        upper = math.pi if h >= 2.0 * r else 2.0 * math.asin(h / (2.0 * r))
        return 2.0 * math.pi * r**2 * quad(
            lambda th: float(profile(2.0 * r * math.sin(th / 2.0) / h)) * math.sin(th), upper
        )
    s = manifold.size
    if mode == DistanceMode.GEODESIC and h <= s / 2.0:
        radial = quad(lambda t: float(profile(t)) * t ** (d - 1), 1.0)
        return sphere_area(d) * radial * h**d
    if mode == DistanceMode.GEODESIC and d == 1:
        return 2.0 * quad(lambda a: float(profile(a / h)), s / 2.0)
    if mode == DistanceMode.AMBIENT and d == 1:
        radius = manifold.embedding_radius
        if h >= 2.0 * radius:
            upper = s / 2.0
        else:
            upper = s / math.pi * math.asin(h / (2.0 * radius))
        return 2.0 * quad(lambda a: float(profile(2.0 * radius * math.sin(math.pi * a / s) / h)), upper)
    return None


def _eta_grid_resolution(manifold: Manifold, h: float) -> int:
    d = manifold.intrinsic_dim
    wanted = max(geometry.default_resolution(manifold), int(math.ceil(8.0 * manifold.size / h)))
    cap = int(math.floor(_MAX_ETA_GRID_NODES ** (1.0 / d)))
    return max(2, min(wanted, cap))


def eta(
    manifold: Manifold,
    profile: KernelProfile,
    h: float,
    distance_mode: Union[str, DistanceMode] = DistanceMode.AMBIENT,
    grid: Optional[QuadratureGrid] = None,
) -> Normalizer:
    """Compute ``η_h``.

    One-dimensional radial quadrature is used whenever the ball integral
    reduces to one (sphere, circle, torus in geodesic mode with ``h <= s/2``);
    otherwise the grid quadrature ``Σ_j K(dist(x, y_j)/h) w_j``.

    Raises:
        InputError: If ``h <= 0`` or the profile dimension is wrong.
        BandwidthError: If the normaliser is not positive.
    """
    mode = DistanceMode(distance_mode)
    if h <= 0:
        raise InputError(f"Bandwidth must be positive, got {h!r}", {"h": h})
    if profile.dimension != manifold.intrinsic_dim:
        raise InputError(
            f"Profile built for dimension {profile.dimension} used on {manifold.spec}",
            {"profile_dimension": profile.dimension},
        )
    value = None if grid is not None else _radial_eta(manifold, profile, h, mode)
    method = "radial"
    if value is None:
        method = "grid"
        if grid is None:
            grid = geometry.quadrature_grid(manifold, _eta_grid_resolution(manifold, h))
        anchor = grid.nodes[:1]
        dist = geometry.pairwise_distances(manifold, anchor, grid.nodes, mode.value)[0]
        value = grid.integrate(profile(dist / h))
    if value <= 0:
        raise BandwidthError(
            f"Kernel normaliser is {value:.3e} at h={h:g} on {manifold.spec}; reduce h",
            {"h": h, "eta": value},
        )
    logger.debug("eta(h=%g, %s, %s) = %.6e via %s", h, mode.value, manifold.spec, value, method)
    return Normalizer(manifold=manifold, h=float(h), distance_mode=mode, value=float(value), method=method)


class NormalizedKernel:
    """``K_h`` on a manifold: profile, bandwidth, distance mode and ``η_h``."""

    def __init__(
        self,
        manifold: Manifold,
        profile: KernelProfile,
        h: float,
        distance_mode: Union[str, DistanceMode] = DistanceMode.AMBIENT,
        normalizer: Optional[Normalizer] = None,
    ) -> None:
        self.manifold = manifold
        self.profile = profile
        self.h = float(h)
        self.distance_mode = DistanceMode(distance_mode)
        self.normalizer = normalizer or eta(manifold, profile, h, self.distance_mode)

    @property
    def lipschitz(self) -> float:
        """Lipschitz bound ``2 Lip(K) h^{-d-1}`` of ``y -> K_h(x, y)`` below ``h_c``."""
        return 2.0 * self.profile.lipschitz * self.h ** (-self.manifold.intrinsic_dim - 1)

    @property
    def sup_bound(self) -> float:
        return 2.0 * self.profile.sup_norm * self.h ** (-self.manifold.intrinsic_dim)

    def raw(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Unnormalised ``K(dist(x_i, y_j) / h)`` matrix."""
        dist = geometry.pairwise_distances(self.manifold, x, y, self.distance_mode.value)
        return self.profile(dist / self.h)

    def matrix(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self.raw(x, y) / self.normalizer.value

    def __repr__(self) -> str:
        return (
            f"NormalizedKernel({self.profile.spec!r}, h={self.h:g}, "
            f"{self.distance_mode.value}, eta={self.normalizer.value:.4g})"
        )


def kernel_eval(nk: NormalizedKernel, x: ManifoldPoint, y: ManifoldPoint) -> float:
    """``K_h(x, y) = K(dist(x, y) / h) / η_h(x)``."""
    geometry.validate_point(nk.manifold, x)
    geometry.validate_point(nk.manifold, y)
    return float(nk.matrix(x.intrinsic_array()[None, :], y.intrinsic_array()[None, :])[0, 0])


def detect_critical_bandwidth(
    manifold: Manifold,
    profile: KernelProfile,
    distance_mode: Union[str, DistanceMode] = DistanceMode.AMBIENT,
    h_max: Optional[float] = None,
    levels: int = 12,
) -> float:
    """Largest ``h`` of a dyadic sweep with ``h^{-d} η_h >= 1/2``.

    Raises:
        ConstructionError: If no level of the sweep qualifies.
    """
    h = h_max or manifold.diameter
    for _ in range(levels):
        try:
            if eta(manifold, profile, h, distance_mode).scaled >= 0.5:
                logger.info("Critical bandwidth on %s (%s): h_c = %g", manifold.spec, profile.spec, h)
                return h
        except BandwidthError:
            pass
        h /= 2.0
    raise ConstructionError(
        f"No bandwidth in the dyadic sweep below {h_max or manifold.diameter:g} "
        f"satisfies h^-d eta_h >= 1/2",
        {"levels": levels},
    )
