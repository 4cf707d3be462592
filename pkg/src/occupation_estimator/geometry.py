"""Model manifolds: embeddings, distances, exponential maps and grids.

Intrinsic coordinates:

- circle of circumference ``c``: arc length ``θ ∈ [0, c)``;
- flat torus of side ``s``: ``x ∈ [0, s)^d``, each coordinate embedded as a
  circle of circumference ``s`` (ambient pairs ``(cos, sin)``, interleaved);
- sphere of radius ``r``: polar angle ``θ ∈ [0, π]`` and azimuth ``φ ∈ [0, 2π)``.

The embedding ``embed`` is the single source of truth for ambient
coordinates. Batched helpers operate on ``(n, d)`` intrinsic and ``(n, m)``
ambient arrays; the single-point operations wrap them.
"""

import logging
import math
from typing import List, Optional, Sequence, Union

import numpy as np

from .exceptions import InputError
from .models.manifold import Manifold, ManifoldKind, ManifoldPoint, QuadratureGrid

logger = logging.getLogger(__name__)

SeedLike = Union[None, int, np.random.Generator, np.random.SeedSequence]

TANGENT_TOLERANCE = 1e-10
EMBEDDING_TOLERANCE = 1e-9
AMBIENT_GEODESIC_CONSTANT = math.pi / 2.0


def as_generator(seed: SeedLike) -> np.random.Generator:
    """Return a numpy ``Generator`` for an int seed, a SeedSequence or a generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


# --------------------------------------------------------------------------
# Coordinates
# --------------------------------------------------------------------------


def wrap(manifold: Manifold, intrinsic: np.ndarray) -> np.ndarray:
    """Reduce intrinsic coordinates to the canonical chart."""
    x = np.asarray(intrinsic, dtype=float)
    if manifold.is_periodic:
        s = manifold.size
        wrapped = np.mod(x, s)
        # np.mod can return s itself for tiny negative inputs
        wrapped[wrapped >= s] = 0.0
        return wrapped
    return chart(manifold, embed(manifold, x))


def embed(manifold: Manifold, intrinsic: np.ndarray) -> np.ndarray:
    """Ambient coordinates of intrinsic points, shape ``(n, m)``."""
    x = _as_batch(intrinsic, manifold.intrinsic_dim, "intrinsic")
    if manifold.is_periodic:
        angle = 2.0 * math.pi * x / manifold.size
        out = np.empty((x.shape[0], manifold.ambient_dim))
        out[:, 0::2] = np.cos(angle)
        out[:, 1::2] = np.sin(angle)
        return manifold.embedding_radius * out
    theta, phi = x[:, 0], x[:, 1]
    r = manifold.size
    return r * np.column_stack(
        (np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta))
    )


def chart(manifold: Manifold, ambient: np.ndarray) -> np.ndarray:
    """Intrinsic coordinates of ambient points (the inverse of ``embed``)."""
    y = _as_batch(ambient, manifold.ambient_dim, "ambient")
    if manifold.is_periodic:
        angle = np.arctan2(y[:, 1::2], y[:, 0::2])
        x = np.mod(angle, 2.0 * math.pi) * manifold.size / (2.0 * math.pi)
        x[x >= manifold.size] = 0.0
        return x
    theta = np.arctan2(np.hypot(y[:, 0], y[:, 1]), y[:, 2])
    phi = np.mod(np.arctan2(y[:, 1], y[:, 0]), 2.0 * math.pi)
    phi[phi >= 2.0 * math.pi] = 0.0
    return np.column_stack((theta, phi))


def point(manifold: Manifold, intrinsic: Union[float, Sequence[float], np.ndarray]) -> ManifoldPoint:
    """Build a point from intrinsic coordinates."""
    x = wrap(manifold, _as_batch(intrinsic, manifold.intrinsic_dim, "intrinsic")[:1])
    return ManifoldPoint(
        intrinsic=tuple(float(v) for v in x[0]),
        ambient=tuple(float(v) for v in embed(manifold, x)[0]),
    )


def point_from_ambient(manifold: Manifold, ambient: Sequence[float]) -> ManifoldPoint:
    """Build a point from ambient coordinates, which must lie on the manifold."""
    y = _as_batch(ambient, manifold.ambient_dim, "ambient")[:1]
    intrinsic = chart(manifold, y)
    if np.max(np.abs(embed(manifold, intrinsic) - y)) > EMBEDDING_TOLERANCE:
        raise InputError(
            f"Ambient point {tuple(y[0])} does not lie on {manifold.spec}",
            {"manifold": manifold.spec},
        )
    return point(manifold, intrinsic[0])


def points(manifold: Manifold, intrinsic: np.ndarray) -> List[ManifoldPoint]:
    """Convert an intrinsic array into a list of points."""
    x = _as_batch(intrinsic, manifold.intrinsic_dim, "intrinsic")
    return [point(manifold, row) for row in x]


def validate_point(manifold: Manifold, x: ManifoldPoint) -> None:
    """Check that ``x`` is a point of ``manifold``; raise ``InputError`` if not."""
    if len(x.intrinsic) != manifold.intrinsic_dim or len(x.ambient) != manifold.ambient_dim:
        raise InputError(
            f"Point with {len(x.intrinsic)} intrinsic / {len(x.ambient)} ambient "
            f"coordinates does not belong to {manifold.spec}",
            {"manifold": manifold.spec},
        )
    expected = embed(manifold, x.intrinsic_array())[0]
    if np.max(np.abs(expected - x.ambient_array())) > EMBEDDING_TOLERANCE:
        raise InputError(
            f"Point {x.intrinsic} is not on {manifold.spec}: ambient coordinates "
            "do not match the embedding",
            {"manifold": manifold.spec},
        )


# --------------------------------------------------------------------------
# Distances
# --------------------------------------------------------------------------


def geodesic_distance(manifold: Manifold, x: ManifoldPoint, y: ManifoldPoint) -> float:
    validate_point(manifold, x)
    validate_point(manifold, y)
    return float(
        geodesic_distances(manifold, x.intrinsic_array()[None, :], y.intrinsic_array()[None, :])[0]
    )


def ambient_distance(manifold: Manifold, x: ManifoldPoint, y: ManifoldPoint) -> float:
    validate_point(manifold, x)
    validate_point(manifold, y)
    return float(np.linalg.norm(x.ambient_array() - y.ambient_array()))


def geodesic_distances(manifold: Manifold, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Row-wise geodesic distances between two intrinsic arrays of equal length."""
    x = _as_batch(x, manifold.intrinsic_dim, "x")
    y = _as_batch(y, manifold.intrinsic_dim, "y")
    if manifold.is_periodic:
        return np.sqrt(np.sum(_torus_gap(manifold.size, x, y) ** 2, axis=-1))
    return _sphere_angle(embed(manifold, x), embed(manifold, y)) * manifold.size


def pairwise_distances(
    manifold: Manifold, x: np.ndarray, y: np.ndarray, mode: str = "geodesic"
) -> np.ndarray:
    """Distance matrix of shape ``(len(x), len(y))`` in ``geodesic`` or ``ambient`` mode."""
    x = _as_batch(x, manifold.intrinsic_dim, "x")
    y = _as_batch(y, manifold.intrinsic_dim, "y")
    if manifold.is_periodic:
        gap = _torus_gap(manifold.size, x[:, None, :], y[None, :, :])
        if mode == "geodesic":
            return np.sqrt(np.sum(gap**2, axis=-1))
        chord = 2.0 * manifold.embedding_radius * np.sin(math.pi * gap / manifold.size)
        return np.sqrt(np.sum(chord**2, axis=-1))
    if mode == "geodesic":
        # haversine form, accurate for short arcs
        theta_x, theta_y = x[:, None, 0], y[None, :, 0]
        hav = np.sin((theta_x - theta_y) / 2.0) ** 2 + np.sin(theta_x) * np.sin(
            theta_y
        ) * np.sin((x[:, None, 1] - y[None, :, 1]) / 2.0) ** 2
        return 2.0 * manifold.size * np.arcsin(np.sqrt(np.clip(hav, 0.0, 1.0)))
    ex, ey = embed(manifold, x), embed(manifold, y)
    sq = (
        np.sum(ex**2, axis=1)[:, None]
        + np.sum(ey**2, axis=1)[None, :]
        - 2.0 * ex @ ey.T
    )
    return np.sqrt(np.maximum(sq, 0.0))


def _torus_gap(side: float, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    a = np.abs(x - y) % side
    return np.minimum(a, side - a)


def _sphere_angle(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    dot = np.sum(a * b, axis=-1)
    return np.arctan2(cross, dot)


# --------------------------------------------------------------------------
# Tangent spaces
# --------------------------------------------------------------------------


def tangent_frame(manifold: Manifold, intrinsic: np.ndarray) -> np.ndarray:
    """Unit tangent vectors along each flat coordinate, shape ``(n, d, m)``.

    Only defined on the circle and torus; the sphere has no global frame.
    """
    if not manifold.is_periodic:
        raise InputError("the sphere has no global tangent frame", {"manifold": manifold.spec})
    x = _as_batch(intrinsic, manifold.intrinsic_dim, "intrinsic")
    d = manifold.intrinsic_dim
    angle = 2.0 * math.pi * x / manifold.size
    frame = np.zeros((x.shape[0], d, manifold.ambient_dim))
    idx = np.arange(d)
    frame[:, idx, 2 * idx] = -np.sin(angle)
    frame[:, idx, 2 * idx + 1] = np.cos(angle)
    return frame


def tangent_projection(manifold: Manifold, x: ManifoldPoint) -> np.ndarray:
    """Orthogonal projector of ``R^m`` onto ``T_x M``."""
    validate_point(manifold, x)
    if manifold.is_periodic:
        frame = tangent_frame(manifold, x.intrinsic_array())[0]
        return frame.T @ frame
    u = x.ambient_array() / manifold.size
    return np.eye(3) - np.outer(u, u)


def project(manifold: Manifold, intrinsic: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """Tangential part of ambient ``vectors`` at the points ``intrinsic``."""
    v = _as_batch(vectors, manifold.ambient_dim, "vectors")
    if manifold.is_periodic:
        frame = tangent_frame(manifold, intrinsic)
        coeff = np.einsum("ndm,nm->nd", frame, v)
        return np.einsum("nd,ndm->nm", coeff, frame)
    u = embed(manifold, intrinsic) / manifold.size
    return v - np.sum(u * v, axis=1, keepdims=True) * u


def flat_components(manifold: Manifold, intrinsic: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """Coordinates of tangent vectors in the flat frame, shape ``(n, d)``."""
    frame = tangent_frame(manifold, intrinsic)
    v = _as_batch(vectors, manifold.ambient_dim, "vectors")
    return np.einsum("ndm,nm->nd", frame, v)


def from_flat_components(manifold: Manifold, intrinsic: np.ndarray, coeff: np.ndarray) -> np.ndarray:
    frame = tangent_frame(manifold, intrinsic)
    return np.einsum("nd,ndm->nm", _as_batch(coeff, manifold.intrinsic_dim, "coeff"), frame)


# --------------------------------------------------------------------------
# Exponential and logarithm maps
# --------------------------------------------------------------------------


def exp_map(manifold: Manifold, x: ManifoldPoint, v: Sequence[float]) -> ManifoldPoint:
    """Follow the geodesic from ``x`` with initial velocity ``v`` for unit time.

    Raises:
        InputError: If ``v`` is not tangent at ``x``.
    """
    validate_point(manifold, x)
    vec = np.asarray(v, dtype=float).reshape(1, manifold.ambient_dim)
    base = x.intrinsic_array()[None, :]
    residual = np.max(np.abs(project(manifold, base, vec) - vec))
    if residual > TANGENT_TOLERANCE * max(1.0, float(np.linalg.norm(vec))):
        raise InputError(
            f"Vector {tuple(vec[0])} is not tangent at {x.intrinsic} (residual {residual:.2e})",
            {"residual": float(residual)},
        )
    return point(manifold, exp_map_batch(manifold, base, vec)[0])


def exp_map_batch(manifold: Manifold, intrinsic: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """Batched exponential map on intrinsic arrays; ``vectors`` must be tangent."""
    x = _as_batch(intrinsic, manifold.intrinsic_dim, "intrinsic")
    v = _as_batch(vectors, manifold.ambient_dim, "vectors")
    if manifold.is_periodic:
        return wrap(manifold, x + flat_components(manifold, x, v))
    r = manifold.size
    base = embed(manifold, x)
    norm = np.linalg.norm(v, axis=1, keepdims=True)
    safe = np.where(norm > 0, norm, 1.0)
    moved = np.cos(norm / r) * base + r * np.sin(norm / r) * v / safe
    moved = np.where(norm > 0, moved, base)
    return chart(manifold, moved)


def log_map(manifold: Manifold, x: ManifoldPoint, y: ManifoldPoint) -> np.ndarray:
    """Tangent vector at ``x`` of length ``ρ(x, y)`` pointing towards ``y``."""
    validate_point(manifold, x)
    validate_point(manifold, y)
    return log_map_batch(manifold, x.intrinsic_array()[None, :], y.intrinsic_array()[None, :])[0]


def log_map_batch(manifold: Manifold, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Batched logarithm map, ambient tangent vectors of shape ``(n, m)``.

    At cut points (antipodes, half-period gaps) one of the minimising
    geodesics is returned.
    """
    x = _as_batch(x, manifold.intrinsic_dim, "x")
    y = _as_batch(y, manifold.intrinsic_dim, "y")
    if manifold.is_periodic:
        s = manifold.size
        delta = np.mod(y - x + s / 2.0, s) - s / 2.0
        return from_flat_components(manifold, x, delta)
    r = manifold.size
    a, b = embed(manifold, x), embed(manifold, y)
    angle = _sphere_angle(a, b)[:, None]
    u = b - np.sum(a * b, axis=1, keepdims=True) / r**2 * a
    norm = np.linalg.norm(u, axis=1, keepdims=True)
    antipodal = (norm[:, 0] <= 1e-14 * r) & (angle[:, 0] > math.pi / 2)
    if np.any(antipodal):
        u[antipodal] = _any_tangent(a[antipodal], r)
        norm[antipodal] = np.linalg.norm(u[antipodal], axis=1, keepdims=True)
    safe = np.where(norm > 0, norm, 1.0)
    return np.where(norm > 0, r * angle * u / safe, 0.0)


def _any_tangent(a: np.ndarray, r: float) -> np.ndarray:
    axis = np.zeros_like(a)
    axis[:, 0] = 1.0
    near_x = np.abs(a[:, 0]) > 0.9 * r
    axis[near_x] = [0.0, 1.0, 0.0]
    return axis - np.sum(a * axis, axis=1, keepdims=True) / r**2 * a


# --------------------------------------------------------------------------
# Sampling and quadrature
# --------------------------------------------------------------------------


def sample_volume(manifold: Manifold, n: int, seed: SeedLike = None) -> np.ndarray:
    """Draw ``n`` i.i.d. uniform points; returns intrinsic coordinates ``(n, d)``."""
    if n < 1:
        raise InputError(f"Sample size must be at least 1, got {n}", {"n": n})
    rng = as_generator(seed)
    if manifold.is_periodic:
        return wrap(manifold, rng.uniform(0.0, manifold.size, size=(n, manifold.intrinsic_dim)))
    g = rng.standard_normal((n, 3))
    norm = np.linalg.norm(g, axis=1, keepdims=True)
    norm[norm == 0] = 1.0
    return chart(manifold, manifold.size * g / norm)


def default_resolution(manifold: Manifold) -> int:
    if manifold.kind == ManifoldKind.SPHERE:
        return 128
    return {1: 1024, 2: 128, 3: 48, 4: 20, 5: 12}.get(manifold.intrinsic_dim, 8)


def quadrature_grid(manifold: Manifold, resolution: int) -> QuadratureGrid:
    """Product trapezoid grid on flat manifolds, latitude-longitude cells on the sphere.

    On the sphere ``resolution`` latitude bands are used with ``2 * resolution``
    longitudes, nodes at band midpoints and exact spherical cell areas.

    Raises:
        InputError: If ``resolution < 2``.
    """
    if resolution < 2:
        raise InputError(
            f"Grid resolution must be at least 2, got {resolution}",
            {"resolution": resolution},
        )
    if manifold.is_periodic:
        d, s = manifold.intrinsic_dim, manifold.size
        step = s / resolution
        axis = np.arange(resolution) * step
        mesh = np.meshgrid(*([axis] * d), indexing="ij")
        nodes = np.stack([m.reshape(-1) for m in mesh], axis=1)
        weights = np.full(nodes.shape[0], manifold.total_volume / nodes.shape[0])
        return QuadratureGrid(
            manifold=manifold,
            nodes=nodes,
            weights=weights,
            shape=(resolution,) * d,
            mesh=step * math.sqrt(d) / 2.0,
        )
    r = manifold.size
    n_theta, n_phi = resolution, 2 * resolution
    d_theta, d_phi = math.pi / n_theta, 2.0 * math.pi / n_phi
    edges = np.arange(n_theta + 1) * d_theta
    theta = 0.5 * (edges[:-1] + edges[1:])
    band = r**2 * (np.cos(edges[:-1]) - np.cos(edges[1:])) * d_phi
    phi = np.arange(n_phi) * d_phi
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    nodes = np.column_stack((tt.reshape(-1), pp.reshape(-1)))
    weights = np.repeat(band, n_phi)
    weights *= manifold.total_volume / weights.sum()
    return QuadratureGrid(
        manifold=manifold,
        nodes=nodes,
        weights=weights,
        shape=(n_theta, n_phi),
        mesh=r * (d_theta + d_phi) / 2.0,
    )


def reference_grid(manifold: Manifold, resolution: Optional[int] = None) -> QuadratureGrid:
    """Default quadrature grid used for normalisation and bound checks."""
    return quadrature_grid(manifold, resolution or default_resolution(manifold))


def grid_points(grid: QuadratureGrid) -> List[ManifoldPoint]:
    return points(grid.manifold, grid.nodes)


def _as_batch(values: object, width: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0 and width == 1:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1 and width == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim == 1 and arr.shape[0] == width:
        arr = arr.reshape(1, width)
    if arr.ndim != 2 or arr.shape[1] != width:
        raise InputError(
            f"`{name}` must have {width} coordinates per row, got shape {np.shape(values)}",
            {"expected": width},
        )
    return arr
