"""Fourier analysis of grid functions on the circle and flat torus.

The Laplace–Beltrami eigenfunctions of a flat torus of side ``s`` are the
plane waves ``exp(2πi k·x / s) / sqrt(vol)`` with eigenvalues
``λ_k = (2π/s)² |k|²``. Grid values on the periodic quadrature grid are
expanded in that basis with the discrete Fourier transform; modes at the
Nyquist frequency are aliased and never used.
"""

import logging
import math
import warnings
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from . import geometry
from .densities import Density
from .estimator import population_smooth
from .exceptions import InputError, NumericalWarning
from .kernels import KernelProfile, NormalizedKernel, make_profile
from .models.estimate import BiasDecayResult, DistanceMode, ModeContribution
from .models.manifold import Manifold, ManifoldPoint, QuadratureGrid
from .specs import KernelSpec

logger = logging.getLogger(__name__)

ZERO_MEAN_TOLERANCE = 1e-8
NYQUIST_ENERGY_TOLERANCE = 1e-20
DEFAULT_BIAS_BANDWIDTHS = (0.2, 0.1, 0.05, 0.025)

GridFunction = Union[np.ndarray, Density]
IntrinsicFunction = Callable[[np.ndarray], np.ndarray]


class FourierBasis:
    """Discrete Fourier basis of a periodic quadrature grid.

    ``coefficients`` are taken in the ``L²``-orthonormal basis, so Parseval
    reads ``∫ f² = Σ |c_k|²`` on grid-resolved functions.
    """

    def __init__(self, manifold: Manifold, resolution: Optional[int] = None) -> None:
        if not manifold.is_periodic:
            raise InputError(
                "Fourier analysis is only available on the circle and the flat torus",
                {"manifold": manifold.spec},
            )
        self.manifold = manifold
        self.grid = geometry.reference_grid(manifold, resolution)
        self.resolution = self.grid.shape[0]
        axis = np.fft.fftfreq(self.resolution, d=1.0 / self.resolution).round().astype(np.int64)
        self._axes = np.meshgrid(*([axis] * manifold.intrinsic_dim), indexing="ij")
        squared = sum(a.astype(float) ** 2 for a in self._axes)
        self.eigenvalues = (2.0 * math.pi / manifold.size) ** 2 * squared
        if self.resolution % 2 == 0:
            nyquist = self.resolution // 2
            self.aliased = np.any(np.stack([np.abs(a) == nyquist for a in self._axes]), axis=0)
        else:
            self.aliased = np.zeros(self.grid.shape, dtype=bool)

    @classmethod
    def for_grid(cls, grid: QuadratureGrid) -> "FourierBasis":
        if not grid.is_periodic_product:
            raise InputError("Fourier analysis needs a periodic product grid")
        return cls(grid.manifold, grid.shape[0])

    @property
    def frequencies(self) -> np.ndarray:
        """Integer frequency vectors, shape ``grid.shape + (d,)``."""
        return np.stack(self._axes, axis=-1)

    @property
    def k_max(self) -> int:
        return (self.resolution - 1) // 2

    @property
    def spectral_gap(self) -> float:
        return float((2.0 * math.pi / self.manifold.size) ** 2)

    def values(self, f: GridFunction) -> np.ndarray:
        """Grid values of ``f``, flattened in node order."""
        if isinstance(f, Density):
            if f.manifold != self.manifold:
                raise InputError("Density lives on another manifold")
            return f.evaluate(self.grid.nodes)
        arr = np.asarray(f, dtype=float).reshape(-1)
        if arr.shape[0] != self.grid.size:
            raise InputError(
                f"Expected {self.grid.size} grid values, got {arr.shape[0]}",
                {"expected": self.grid.size, "got": arr.shape[0]},
            )
        return arr

    def coefficients(self, f: GridFunction) -> np.ndarray:
        """Complex coefficients ``c_k``; aliased modes are zeroed."""
        values = self.values(f).reshape(self.grid.shape)
        coeff = np.fft.fftn(values) * (math.sqrt(self.manifold.total_volume) / self.grid.size)
        lost = float(np.sum(np.abs(coeff[self.aliased]) ** 2))
        if lost > NYQUIST_ENERGY_TOLERANCE * max(1.0, float(np.sum(np.abs(coeff) ** 2))):
            message = f"Dropping Nyquist modes carrying energy {lost:.3e}; refine the grid"
            logger.warning(message)
            warnings.warn(message, NumericalWarning, stacklevel=2)
        coeff[self.aliased] = 0.0
        return coeff

    def synthesize(self, coeff: np.ndarray) -> np.ndarray:
        """Grid values of ``Σ c_k e_k``, real part, in node order."""
        c = np.asarray(coeff).reshape(self.grid.shape)
        values = np.fft.ifftn(c) * (self.grid.size / math.sqrt(self.manifold.total_volume))
        return np.real(values).reshape(-1)

    def poisson_solve(self, f: GridFunction) -> np.ndarray:
        """Zero-mean solution ``u`` of ``-Δu = f - mean(f)`` on the grid."""
        coeff = self.coefficients(f)
        solution = np.zeros_like(coeff)
        positive = self.eigenvalues > 0
        solution[positive] = coeff[positive] / self.eigenvalues[positive]
        return self.synthesize(solution)

    def breakdown(self, f: GridFunction, top: Optional[int] = None) -> List[ModeContribution]:
        """Per-mode terms of ``|(-Δ)^{-1/2} f|²``, largest first."""
        coeff = self.coefficients(f)
        energy = np.abs(coeff) ** 2
        positive = (self.eigenvalues > 0) & (energy > 0)
        freqs = self.frequencies[positive]
        lam = self.eigenvalues[positive]
        share = energy[positive] / lam
        order = np.argsort(-share, kind="stable")
        if top is not None:
            order = order[:top]
        return [
            ModeContribution(
                k=tuple(int(v) for v in freqs[i]),
                eigenvalue=float(lam[i]),
                energy=float(energy[positive][i]),
                contribution=float(share[i]),
            )
            for i in order
        ]


def _basis(grid: QuadratureGrid, basis: Optional[FourierBasis]) -> FourierBasis:
    if basis is not None:
        return basis
    return FourierBasis.for_grid(grid)


def neg_sobolev_half(
    f: GridFunction, grid: QuadratureGrid, basis: Optional[FourierBasis] = None
) -> float:
    """``|(-Δ)^{-1/2} f|_{L²} = (Σ_{k≠0} |c_k|² / λ_k)^{1/2}`` for zero-mean ``f``.

    Raises:
        InputError: If ``∫ f`` is not zero within tolerance or the grid is not periodic.
    """
    fb = _basis(grid, basis)
    values = fb.values(f)
    mean = grid.integrate(values)
    scale = max(1.0, grid.integrate(np.abs(values)))
    if abs(mean) > ZERO_MEAN_TOLERANCE * scale:
        raise InputError(
            f"Negative Sobolev norm needs a zero-mean function, got ∫f = {mean:.3e}",
            {"integral": mean},
        )
    coeff = fb.coefficients(values)
    positive = fb.eigenvalues > 0
    return math.sqrt(float(np.sum(np.abs(coeff[positive]) ** 2 / fb.eigenvalues[positive])))


def peyre_bound(
    p1: GridFunction,
    p2: GridFunction,
    p_min: float,
    grid: QuadratureGrid,
    basis: Optional[FourierBasis] = None,
) -> float:
    """Upper bound ``(4 / p_min) |(-Δ)^{-1/2}(p1 - p2)|²`` on ``W2²(p1, p2)``.

    Raises:
        InputError: If ``p_min <= 0`` or the difference does not have zero mean.
    """
    if p_min <= 0:
        raise InputError(f"p_min must be positive, got {p_min!r}", {"p_min": p_min})
    fb = _basis(grid, basis)
    first, second = fb.values(p1), fb.values(p2)
    if float(np.min(first)) < p_min * (1.0 - 1e-9):
        logger.warning(
            "p1 drops to %.4g below p_min=%.4g on the grid; the bound is not guaranteed",
            float(np.min(first)),
            p_min,
        )
    norm = neg_sobolev_half(first - second, grid, fb)
    return 4.0 / p_min * norm * norm


# --------------------------------------------------------------------------
# Laplacian as a sum of squared projected derivatives
# --------------------------------------------------------------------------


def _directional(
    manifold: Manifold, f: IntrinsicFunction, base: np.ndarray, alpha: int, step: float
) -> np.ndarray:
    """Central difference of ``f`` along the geodesic with velocity ``P(y) e_α``."""
    direction = np.zeros((base.shape[0], manifold.ambient_dim))
    direction[:, alpha] = 1.0
    v = geometry.project(manifold, base, direction)
    forward = geometry.exp_map_batch(manifold, base, step * v)
    backward = geometry.exp_map_batch(manifold, base, -step * v)
    return (np.asarray(f(forward), dtype=float) - np.asarray(f(backward), dtype=float)) / (2.0 * step)


def _squared_projection_sum(manifold: Manifold, f: IntrinsicFunction, x: np.ndarray, step: float) -> float:
    total = 0.0
    for alpha in range(manifold.ambient_dim):

        def inner(y: np.ndarray, alpha: int = alpha) -> np.ndarray:
            return _directional(manifold, f, y, alpha, step)

        total += float(_directional(manifold, inner, x, alpha, step)[0])
    return total


def laplacian_identity_check(
    manifold: Manifold,
    f: IntrinsicFunction,
    x: ManifoldPoint,
    laplacian: IntrinsicFunction,
    step: float = 1e-3,
) -> float:
    """``|Σ_α P_α(P_α f)(x) - Δf(x)|`` with ``P_α f = <P e_α, ∇f>``.

    ``f`` and ``laplacian`` take intrinsic ``(n, d)`` arrays. Each ``P_α`` is
    a central difference along the geodesic through the point with velocity
    ``P e_α``; the nested differences at ``step`` and ``step / 2`` are
    combined by Richardson extrapolation.
    """
    geometry.validate_point(manifold, x)
    base = x.intrinsic_array()[None, :]
    coarse = _squared_projection_sum(manifold, f, base, step)
    fine = _squared_projection_sum(manifold, f, base, step / 2.0)
    estimate = (4.0 * fine - coarse) / 3.0
    exact = float(np.asarray(laplacian(base), dtype=float).reshape(-1)[0])
    residual = abs(estimate - exact)
    logger.debug("Laplacian identity at %s: %.6e vs %.6e", x.intrinsic, estimate, exact)
    return residual


# --------------------------------------------------------------------------
# Bias decay
# --------------------------------------------------------------------------


def _bias_resolution(manifold: Manifold) -> int:
    return 16384 if manifold.intrinsic_dim == 1 else geometry.default_resolution(manifold)


def bias_decay_check(
    p: Density,
    kernel: Union[str, KernelSpec, KernelProfile] = "poly:r=4",
    bandwidths: Sequence[float] = DEFAULT_BIAS_BANDWIDTHS,
    distance_mode: Union[str, DistanceMode] = DistanceMode.GEODESIC,
    resolution: Optional[int] = None,
    sobolev_order: Optional[int] = None,
) -> BiasDecayResult:
    """Fit the decay of ``|(-Δ)^{-1/2}(p_h - p)|²`` in ``h`` on a log-log scale.

    ``p_h`` is the population smoothing of ``p``. The slope is fitted over
    the bandwidths whose norm is positive; it is ``None`` with fewer than
    two of them. The theoretical slope is ``2ℓ + 2``.
    """
    manifold = p.manifold
    if not manifold.is_periodic:
        raise InputError("The bias decay check runs on the circle and the flat torus only")
    if len(bandwidths) < 2:
        raise InputError("At least two bandwidths are needed", {"bandwidths": len(bandwidths)})
    profile = kernel if isinstance(kernel, KernelProfile) else make_profile(kernel, manifold.intrinsic_dim)
    grid = geometry.reference_grid(manifold, resolution or _bias_resolution(manifold))
    basis = FourierBasis.for_grid(grid)
    target = p.evaluate(grid.nodes)
    ell = p.sobolev_order if sobolev_order is None else sobolev_order

    norms: List[float] = []
    for h in bandwidths:
        nk = NormalizedKernel(manifold, profile, h, distance_mode)
        diff = population_smooth(p, nk, grid) - target
        diff -= grid.integrate(diff) / manifold.total_volume
        norm = neg_sobolev_half(diff, grid, basis)
        norms.append(norm * norm)
        logger.debug("Bias at h=%g: |(-Δ)^(-1/2)(p_h - p)|² = %.4e", h, norm * norm)

    slope, stderr = _fit(bandwidths, norms)
    if slope is not None:
        logger.info("Bias decay slope %.3f ± %.3f (theory %d)", slope, stderr or 0.0, 2 * ell + 2)
    return BiasDecayResult(
        bandwidths=tuple(float(h) for h in bandwidths),
        norms_squared=tuple(norms),
        slope=slope,
        slope_stderr=stderr,
        theoretical_slope=float(2 * ell + 2),
    )


def _fit(bandwidths: Sequence[float], norms: Sequence[float]) -> Tuple[Optional[float], Optional[float]]:
    usable = [(h, n) for h, n in zip(bandwidths, norms) if n > 0 and math.isfinite(n)]
    if len(usable) < 2:
        return None, None
    fit = stats.linregress(np.log([h for h, _ in usable]), np.log([n for _, n in usable]))
    stderr = float(fit.stderr) if len(usable) > 2 else None
    return float(fit.slope), stderr
