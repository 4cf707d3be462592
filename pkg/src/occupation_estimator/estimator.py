"""The kernel-smoothed occupation-measure estimator.

``smooth`` turns a path (or a stream of path windows, or any discrete
measure) into grid values of ``p_{T,h}``. Each source point's kernel row is
normalised by its own grid quadrature ``Σ_j K(dist(x_i, y_j)/h) w_j``, which
makes the grid mass exactly one.
"""

import itertools
import logging
import math
from typing import Iterable, Optional, Tuple, Union

import numpy as np

from . import geometry
from .densities import Density
from .diffusion import trapezoid_weights
from .exceptions import BandwidthError, InputError
from .kernels import NormalizedKernel
from .models.estimate import (
    DEFAULT_ESTIMATOR_SETTINGS,
    EstimatorSettings,
    GuardFlags,
    PositivityMargin,
    SmoothedEstimate,
    SmoothingMethod,
)
from .models.manifold import QuadratureGrid
from .models.measure import DiscreteMeasure
from .models.path import DiffusionPath

logger = logging.getLogger(__name__)

Source = Union[DiffusionPath, DiscreteMeasure, Iterable[DiffusionPath]]

_MAX_BLOCK_ENTRIES = 4_000_000


def default_dt(h: float) -> float:
    """Integrator step ``min(1e-3, h²/10)`` for estimation at bandwidth ``h``."""
    return min(1e-3, h * h / 10.0)


def bandwidth_rule(
    horizon: float,
    dimension: int,
    sobolev_order: int,
    constant: float = 1.0,
    empirical: bool = False,
    h_c: Optional[float] = None,
) -> float:
    """``h = c T^{-1/(2ℓ+d-2)}``, clamped to ``h_c``.

    With ``empirical=True`` (nonnegative kernels compared to the occupation
    measure) the rule is ``c T^{-1/2}`` for ``d <= 4`` and ``c T^{-1/(d-2)}``
    for ``d >= 5``.

    Raises:
        InputError: For ``T < 2``, ``c <= 0`` or ``2ℓ + d - 2 <= 0``.
    """
    if horizon < 2:
        raise InputError(f"The bandwidth rule needs T >= 2, got {horizon:g}", {"T": horizon})
    if constant <= 0:
        raise InputError(f"Bandwidth constant must be positive, got {constant:g}")
    if empirical:
        exponent = 0.5 if dimension <= 4 else 1.0 / (dimension - 2)
    else:
        denominator = 2 * sobolev_order + dimension - 2
        if denominator <= 0:
            raise InputError(
                f"2*ell + d - 2 = {denominator} must be positive (ell={sobolev_order}, d={dimension})",
                {"denominator": denominator},
            )
        exponent = 1.0 / denominator
    h = constant * horizon ** (-exponent)
    if h_c is not None:
        h = min(h, h_c)
    return h


def guard_condition(horizon: float, h: float, dimension: int, constant: float = 1.0) -> bool:
    """``T h^d >= c ln T``."""
    return horizon * h**dimension >= constant * math.log(horizon)


def guard_flags(horizon: float, h: float, dimension: int, constant: float = 1.0) -> GuardFlags:
    """Both guards: ``T h^d >= c ln T`` and ``T h^{d-2} >= c ln T``."""
    return GuardFlags(
        main=guard_condition(horizon, h, dimension, constant),
        variance=horizon * h ** (dimension - 2) >= constant * math.log(horizon),
    )


# --------------------------------------------------------------------------
# Kernel sums
# --------------------------------------------------------------------------


def _direct_sum(
    nk: NormalizedKernel, grid: QuadratureGrid, points: np.ndarray, weights: np.ndarray, chunk_size: int
) -> np.ndarray:
    """``Σ_i weights_i K(dist(x_i, y_j)/h) / z_i`` over grid nodes ``y_j``."""
    values = np.zeros(grid.size)
    block = max(1, min(chunk_size, _MAX_BLOCK_ENTRIES // max(1, grid.size * grid.manifold.intrinsic_dim)))
    for start in range(0, points.shape[0], block):
        rows = nk.raw(points[start : start + block], grid.nodes)
        z = rows @ grid.weights
        if np.any(z <= 0):
            raise BandwidthError(
                f"Grid normaliser vanishes at h={nk.h:g}; the grid is too coarse or h too large",
                {"h": nk.h, "mesh": grid.mesh},
            )
        values += (weights[start : start + block] / z) @ rows
    return values


def _node_kernel(nk: NormalizedKernel, grid: QuadratureGrid) -> Tuple[np.ndarray, float]:
    """Kernel centred at the first node of a periodic grid, and its grid integral."""
    row = nk.raw(grid.nodes[:1], grid.nodes)[0]
    z = grid.integrate(row)
    if z <= 0:
        raise BandwidthError(
            f"Grid normaliser is {z:.3e} at h={nk.h:g}; reduce h or refine the grid",
            {"h": nk.h, "normaliser": z},
        )
    return row.reshape(grid.shape), z


def _deposit(grid: QuadratureGrid, points: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Multilinear (cloud-in-cell) deposition of weighted points onto a periodic grid."""
    shape = grid.shape
    res = shape[0]
    step = grid.manifold.size / res
    scaled = np.asarray(points, dtype=float) / step
    base = np.floor(scaled)
    frac = scaled - base
    base = base.astype(np.int64) % res
    mass = np.zeros(int(np.prod(shape)))
    d = len(shape)
    for corner in itertools.product((0, 1), repeat=d):
        offset = np.array(corner)
        index = (base + offset) % res
        share = np.prod(np.where(offset == 1, frac, 1.0 - frac), axis=1)
        flat = np.ravel_multi_index(tuple(index.T), shape)
        mass += np.bincount(flat, weights=weights * share, minlength=mass.shape[0])
    return mass.reshape(shape)


def _binned_sum(
    nk: NormalizedKernel, grid: QuadratureGrid, points: np.ndarray, weights: np.ndarray
) -> np.ndarray:
    kernel, z = _node_kernel(nk, grid)
    mass = _deposit(grid, points, weights)
    return _circular_convolve(mass, kernel).reshape(-1) / z


def _circular_convolve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    axes = tuple(range(a.ndim))
    return np.fft.irfftn(np.fft.rfftn(a, axes=axes) * np.fft.rfftn(b, axes=axes), s=a.shape, axes=axes)


def _use_binned(
    settings: EstimatorSettings, grid: QuadratureGrid, n_points: int
) -> bool:
    if settings.method == SmoothingMethod.BINNED:
        if not grid.is_periodic_product:
            raise InputError("Binned smoothing needs a periodic product grid (circle or torus)")
        return True
    if settings.method == SmoothingMethod.DIRECT or not grid.is_periodic_product:
        return False
    return n_points * grid.size > settings.direct_work_limit


def _kernel_sum(
    nk: NormalizedKernel,
    grid: QuadratureGrid,
    points: np.ndarray,
    weights: np.ndarray,
    settings: EstimatorSettings,
) -> np.ndarray:
    if _use_binned(settings, grid, points.shape[0]):
        return _binned_sum(nk, grid, points, weights)
    return _direct_sum(nk, grid, points, weights, settings.chunk_size)


def certify_positivity(
    values: np.ndarray,
    nk: NormalizedKernel,
    grid: QuadratureGrid,
    margin: PositivityMargin = PositivityMargin.LIPSCHITZ,
) -> bool:
    """Surrogate for ``p_{T,h} >= 0`` everywhere from grid values.

    Nonnegative profiles always pass. For signed profiles the ``lipschitz``
    margin requires ``min values >= 2 Lip(K) h^{-d-1} mesh``, which covers the
    gaps between nodes; ``grid`` only checks the nodes.
    """
    if nk.profile.nonneg:
        return True
    lowest = float(np.min(values))
    if margin == PositivityMargin.GRID:
        return lowest >= 0.0
    return lowest >= nk.lipschitz * grid.mesh


def _finish(
    values: np.ndarray,
    nk: NormalizedKernel,
    grid: QuadratureGrid,
    horizon: Optional[float],
    settings: EstimatorSettings,
) -> SmoothedEstimate:
    ok = certify_positivity(values, nk, grid, settings.margin)
    fallback = geometry.point(grid.manifold, grid.nodes[0])
    if ok:
        mass = np.maximum(values, 0.0) * grid.weights
        measure = DiscreteMeasure.normalized(grid.manifold, grid.nodes, mass)
    else:
        logger.info(
            "Positivity check failed (min %.3e at h=%g); falling back to a Dirac mass",
            float(np.min(values)),
            nk.h,
        )
        measure = DiscreteMeasure.dirac(grid.manifold, grid.nodes[0])
    return SmoothedEstimate(
        grid=grid,
        values=values,
        positivity_ok=ok,
        fallback_point=fallback,
        measure=measure,
        h=nk.h,
        horizon=horizon,
        kernel=nk.profile.spec,
        distance_mode=nk.distance_mode,
    )


def smooth(
    source: Source,
    nk: NormalizedKernel,
    grid: Optional[QuadratureGrid] = None,
    settings: EstimatorSettings = DEFAULT_ESTIMATOR_SETTINGS,
) -> SmoothedEstimate:
    """Estimate ``p_{T,h}`` on ``grid`` from a path, a stream of windows or a measure.

    Args:
        source: A ``DiffusionPath``, an iterable of consecutive path windows
            (``simulate_stream``) or a ``DiscreteMeasure`` (for instance an
            occupation measure).
        nk: The smoothing kernel.
        grid: Evaluation grid; defaults to the reference grid of the manifold.
        settings: Positivity margin and smoothing method.

    Raises:
        InputError: If the source is empty or lives on another manifold.
        BandwidthError: If a grid normaliser vanishes.
    """
    grid = grid or geometry.reference_grid(nk.manifold)
    if grid.manifold != nk.manifold:
        raise InputError("Grid and kernel live on different manifolds")

    if isinstance(source, DiscreteMeasure):
        _check_manifold(source.manifold, nk)
        values = _kernel_sum(nk, grid, source.support, source.weights, settings)
        return _finish(values, nk, grid, None, settings)

    windows = [source] if isinstance(source, DiffusionPath) else source
    accumulated = np.zeros(grid.size)
    total_time = 0.0
    first: Optional[DiffusionPath] = None
    for window in windows:
        _check_manifold(window.manifold, nk)
        first = first or window
        if window.n_points < 2:
            continue
        accumulated += _kernel_sum(
            nk, grid, window.intrinsic, trapezoid_weights(window.times), settings
        )
        total_time += window.horizon
    if first is None:
        raise InputError("Cannot smooth an empty path")
    if total_time == 0.0:
        values = _kernel_sum(nk, grid, first.intrinsic[:1], np.ones(1), settings)
        return _finish(values, nk, grid, None, settings)
    return _finish(accumulated / total_time, nk, grid, total_time, settings)


def _check_manifold(manifold: object, nk: NormalizedKernel) -> None:
    if manifold != nk.manifold:
        raise InputError("Source and kernel live on different manifolds")


def population_smooth(
    p: Density, nk: NormalizedKernel, grid: Optional[QuadratureGrid] = None
) -> np.ndarray:
    """Grid values of ``p_h(x) = ∫ K_h(z, x) p(z) dz`` by quadrature over the grid."""
    grid = grid or geometry.reference_grid(nk.manifold)
    if p.manifold != nk.manifold:
        raise InputError("Density and kernel live on different manifolds")
    weights = p.evaluate(grid.nodes) * grid.weights
    if grid.is_periodic_product:
        kernel, z = _node_kernel(nk, grid)
        return _circular_convolve(weights.reshape(grid.shape), kernel).reshape(-1) / z
    return _direct_sum(nk, grid, grid.nodes, weights, DEFAULT_ESTIMATOR_SETTINGS.chunk_size)
