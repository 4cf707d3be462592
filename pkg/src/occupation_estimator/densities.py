"""Target densities, bump families and path-space KL quadrature.

Densities are expressed with respect to the volume measure of the manifold,
so the uniform density equals ``1 / vol(M)``. Gradients are ambient tangent
vectors of shape ``(n, m)``.
"""

import logging
import math
from abc import ABC, abstractmethod
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from . import geometry
from .exceptions import InputError
from .models.manifold import Manifold, ManifoldPoint, QuadratureGrid
from .specs import DensityFamily, DensitySpec, TrigTerm, parse_density

logger = logging.getLogger(__name__)

# inner plateau and outer edge of the mother bump, in units of ε
_PLATEAU = 1.0 / 6.0
_STEP_END = 1.0 / 3.0
_SUPPORT_END = 1.0 / 2.0
_RING_PEAK = 1.0 / (((_SUPPORT_END - _STEP_END) / 2.0) ** 2)


class Density(ABC):
    """A smooth positive density on a model manifold.

    Attributes:
        manifold: The manifold the density lives on.
        spec: Provenance string (``"trig:a1=0.5"``).
        p_min: Lower bound of the density.
        p_max: Upper bound of the density.
        c1_norm: Bound on ``sup |p| + sup |∇p|``.
        sobolev_order: Smoothness order ``ℓ`` used by the bandwidth rule.
    """

    def __init__(
        self,
        manifold: Manifold,
        spec: str,
        p_min: float,
        p_max: float,
        c1_norm: float,
        sobolev_order: int = 2,
    ) -> None:
        if p_min <= 0:
            raise InputError(f"Density {spec!r} is not strictly positive (p_min={p_min:g})")
        self.manifold = manifold
        self.spec = spec
        self.p_min = float(p_min)
        self.p_max = float(p_max)
        self.c1_norm = float(c1_norm)
        self.sobolev_order = sobolev_order

    @abstractmethod
    def evaluate(self, intrinsic: np.ndarray) -> np.ndarray:
        """Density values at ``(n, d)`` intrinsic points."""

    @abstractmethod
    def gradient(self, intrinsic: np.ndarray) -> np.ndarray:
        """Riemannian gradient ``∇p`` as ambient tangent vectors ``(n, m)``."""

    def grad_log(self, intrinsic: np.ndarray) -> np.ndarray:
        return self.gradient(intrinsic) / self.evaluate(intrinsic)[:, None]

    def __call__(self, x: ManifoldPoint) -> float:
        geometry.validate_point(self.manifold, x)
        return float(self.evaluate(x.intrinsic_array()[None, :])[0])

    def grad_log_at(self, x: ManifoldPoint) -> np.ndarray:
        geometry.validate_point(self.manifold, x)
        return self.grad_log(x.intrinsic_array()[None, :])[0]

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.manifold.spec!r}, {self.spec!r})"


class UniformDensity(Density):
    def __init__(self, manifold: Manifold, sobolev_order: int = 2) -> None:
        level = 1.0 / manifold.total_volume
        super().__init__(manifold, "uniform", level, level, level, sobolev_order)

    def evaluate(self, intrinsic: np.ndarray) -> np.ndarray:
        x = np.asarray(intrinsic, dtype=float).reshape(-1, self.manifold.intrinsic_dim)
        return np.full(x.shape[0], self.p_min)

    def gradient(self, intrinsic: np.ndarray) -> np.ndarray:
        x = np.asarray(intrinsic, dtype=float).reshape(-1, self.manifold.intrinsic_dim)
        return np.zeros((x.shape[0], self.manifold.ambient_dim))


class TrigDensity(Density):
    """``(1 + Σ a_k cos(2π <k, x> / s)) / vol`` on a circle or flat torus."""

    def __init__(self, manifold: Manifold, terms: Sequence[TrigTerm], sobolev_order: int = 2) -> None:
        if not manifold.is_periodic:
            raise InputError(
                f"Trig densities need a circle or torus, got {manifold.spec}",
                {"manifold": manifold.spec},
            )
        d = manifold.intrinsic_dim
        for term in terms:
            if len(term.k) != d:
                raise InputError(f"Mode {term.k} does not have {d} components")
            if not any(term.k):
                raise InputError("Trig modes must be nonzero; the constant term is fixed to 1")
        total = sum(abs(term.a) for term in terms)
        if total >= 1.0:
            raise InputError(
                f"Trig amplitudes must satisfy Σ|a_k| < 1 for positivity; got {total:g}",
                {"sum_abs": total},
            )
        vol = manifold.total_volume
        self.frequencies = np.array([term.k for term in terms], dtype=float).reshape(-1, d)
        self.amplitudes = np.array([term.a for term in terms], dtype=float)
        self.wavevectors = 2.0 * math.pi * self.frequencies / manifold.size
        slope = float(np.sum(np.abs(self.amplitudes) * np.linalg.norm(self.wavevectors, axis=1)))
        text = DensitySpec(family=DensityFamily.TRIG, terms=tuple(terms)).text
        super().__init__(
            manifold,
            text,
            (1.0 - total) / vol,
            (1.0 + total) / vol,
            (1.0 + total + slope) / vol,
            sobolev_order,
        )

    def _phase(self, intrinsic: np.ndarray) -> np.ndarray:
        x = np.asarray(intrinsic, dtype=float).reshape(-1, self.manifold.intrinsic_dim)
        return x @ self.wavevectors.T

    def evaluate(self, intrinsic: np.ndarray) -> np.ndarray:
        phase = self._phase(intrinsic)
        return (1.0 + np.cos(phase) @ self.amplitudes) / self.manifold.total_volume

    def gradient(self, intrinsic: np.ndarray) -> np.ndarray:
        x = np.asarray(intrinsic, dtype=float).reshape(-1, self.manifold.intrinsic_dim)
        flat = -(np.sin(self._phase(x)) * self.amplitudes) @ self.wavevectors
        return geometry.from_flat_components(self.manifold, x, flat / self.manifold.total_volume)


class SpherePolyDensity(Density):
    """``c (1 + β z / r)`` on the sphere with ``c = 1 / (4π r²)``."""

    def __init__(self, manifold: Manifold, beta: float, sobolev_order: int = 2) -> None:
        if manifold.is_periodic:
            raise InputError(f"sphere_poly needs the sphere, got {manifold.spec}")
        if abs(beta) >= 1.0:
            raise InputError(f"sphere_poly requires |beta| < 1, got {beta:g}", {"beta": beta})
        self.beta = float(beta)
        self.normalizer = 1.0 / manifold.total_volume
        c = self.normalizer
        super().__init__(
            manifold,
            f"sphere_poly:beta={beta:g}",
            c * (1.0 - abs(beta)),
            c * (1.0 + abs(beta)),
            c * (1.0 + abs(beta) + abs(beta) / manifold.size),
            sobolev_order,
        )

    def evaluate(self, intrinsic: np.ndarray) -> np.ndarray:
        z = geometry.embed(self.manifold, intrinsic)[:, 2]
        return self.normalizer * (1.0 + self.beta * z / self.manifold.size)

    def gradient(self, intrinsic: np.ndarray) -> np.ndarray:
        x = np.asarray(intrinsic, dtype=float).reshape(-1, 2)
        pole = np.tile([0.0, 0.0, 1.0], (x.shape[0], 1))
        scale = self.normalizer * self.beta / self.manifold.size
        return scale * geometry.project(self.manifold, x, pole)


def make_density(manifold: Manifold, spec: Union[str, DensitySpec]) -> Density:
    """Instantiate a density from a spec string or a parsed ``DensitySpec``.

    Raises:
        InputError: For malformed specs, specs that do not fit the manifold,
            and non-positive parameter choices (``Σ|a_k| >= 1``).
    """
    parsed = parse_density(spec, manifold.intrinsic_dim) if isinstance(spec, str) else spec
    if parsed.family == DensityFamily.UNIFORM:
        return UniformDensity(manifold, parsed.sobolev_order)
    if parsed.family == DensityFamily.TRIG:
        return TrigDensity(manifold, parsed.terms, parsed.sobolev_order)
    return SpherePolyDensity(manifold, parsed.beta, parsed.sobolev_order)


def rejection_sample(
    density: Density, n: int, seed: geometry.SeedLike = None
) -> Tuple[np.ndarray, float]:
    """Rejection sampling against the uniform law with envelope ``p_max``.

    Returns:
        The ``(n, d)`` samples and the observed acceptance rate.
    """
    if n < 1:
        raise InputError(f"Sample size must be at least 1, got {n}", {"n": n})
    rng = geometry.as_generator(seed)
    accepted = []
    have = proposed = 0
    while have < n:
        batch = max(64, int(1.2 * (n - have) * density.p_max / density.p_min))
        candidates = geometry.sample_volume(density.manifold, batch, rng)
        u = rng.uniform(0.0, density.p_max, size=batch)
        keep = candidates[u < density.evaluate(candidates)]
        accepted.append(keep)
        have += keep.shape[0]
        proposed += batch
    samples = np.concatenate(accepted, axis=0)[:n]
    rate = have / proposed
    logger.debug("Rejection sampling %s: acceptance %.3f", density.spec, rate)
    return samples, rate


def sample_mu(density: Density, n: int, seed: geometry.SeedLike = None) -> np.ndarray:
    """Draw ``n`` i.i.d. points from ``μ = p dvol`` as intrinsic coordinates."""
    return rejection_sample(density, n, seed)[0]


# --------------------------------------------------------------------------
# Bumps
# --------------------------------------------------------------------------


def _smooth_zero(u: np.ndarray) -> np.ndarray:
    safe = np.where(u > 0, u, 1.0)
    return np.where(u > 0, np.exp(-1.0 / safe), 0.0)


def _smooth_zero_prime(u: np.ndarray) -> np.ndarray:
    safe = np.where(u > 0, u, 1.0)
    return np.where(u > 0, np.exp(-1.0 / safe) / safe**2, 0.0)


def mother_step(t: np.ndarray) -> np.ndarray:
    """C^∞ step equal to 1 on ``t <= 1/6`` and 0 on ``t >= 1/3``."""
    u = (np.asarray(t, dtype=float) - _PLATEAU) / (_STEP_END - _PLATEAU)
    a, b = _smooth_zero(1.0 - u), _smooth_zero(u)
    return a / (a + b)


def mother_step_prime(t: np.ndarray) -> np.ndarray:
    width = _STEP_END - _PLATEAU
    u = (np.asarray(t, dtype=float) - _PLATEAU) / width
    a, b = _smooth_zero(1.0 - u), _smooth_zero(u)
    da, db = -_smooth_zero_prime(1.0 - u), _smooth_zero_prime(u)
    return (da * b - a * db) / (a + b) ** 2 / width


def mother_ring(t: np.ndarray) -> np.ndarray:
    """C^∞ bump on the annulus ``1/3 < t < 1/2`` with peak value 1."""
    t = np.asarray(t, dtype=float)
    g = (t - _STEP_END) * (_SUPPORT_END - t)
    safe = np.where(g > 0, g, 1.0)
    return np.where(g > 0, np.exp(_RING_PEAK - 1.0 / safe), 0.0)


def mother_ring_prime(t: np.ndarray) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    g = (t - _STEP_END) * (_SUPPORT_END - t)
    dg = _STEP_END + _SUPPORT_END - 2.0 * t
    safe = np.where(g > 0, g, 1.0)
    return np.where(g > 0, np.exp(_RING_PEAK - 1.0 / safe) * dg / safe**2, 0.0)


class BumpDensity(Density):
    """Member ``p_τ = (1 + v/(2κ) Σ τ_j φ_j) / vol`` of a bump family."""

    def __init__(self, family: "BumpFamily", tau: np.ndarray) -> None:
        self.family = family
        self.tau = tau
        self.coefficient = family.amplitude / (2.0 * family.kappa)
        vol = family.manifold.total_volume
        swing = self.coefficient * family.kappa
        signs = "".join("+" if t > 0 else "-" for t in tau)
        super().__init__(
            family.manifold,
            f"bumps:eps={family.epsilon:g},v={family.amplitude:g},tau={signs}",
            (1.0 - swing) / vol,
            (1.0 + swing) / vol,
            (1.0 + swing + self.coefficient * family.kappa / family.epsilon) / vol,
            family.sobolev_order,
        )

    def evaluate(self, intrinsic: np.ndarray) -> np.ndarray:
        values = self.family.bumps(intrinsic) @ self.tau
        return (1.0 + self.coefficient * values) / self.manifold.total_volume

    def gradient(self, intrinsic: np.ndarray) -> np.ndarray:
        grads = self.family.bump_gradients(intrinsic)
        return self.coefficient * np.einsum("jnm,j->nm", grads, self.tau) / self.manifold.total_volume


class BumpFamily(BaseModel):
    """Bumps ``φ_j`` at centres pairwise ``>= 2ε`` apart and their hypercube of densities.

    Each bump is ``C_j (S(ρ/ε) - A_j B(ρ/ε))`` where ``S`` is a smooth step and
    ``B`` a smooth ring; ``A_j`` makes the grid integral vanish and ``C_j``
    sets the grid integral of ``φ_j²`` to ``ε^d``. Supports have radius ``ε/2``.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    manifold: Manifold
    centers: np.ndarray
    epsilon: float
    amplitude: float
    sobolev_order: int
    grid: QuadratureGrid
    ring_weight: np.ndarray
    scale: np.ndarray
    kappa: float = Field(default=1.0, gt=0)

    @property
    def size(self) -> int:
        return int(self.centers.shape[0])

    def center_points(self) -> Tuple[ManifoldPoint, ...]:
        return tuple(geometry.points(self.manifold, self.centers))

    def _radius(self, intrinsic: np.ndarray) -> np.ndarray:
        x = np.asarray(intrinsic, dtype=float).reshape(-1, self.manifold.intrinsic_dim)
        return geometry.pairwise_distances(self.manifold, x, self.centers) / self.epsilon

    def bumps(self, intrinsic: np.ndarray) -> np.ndarray:
        """Values ``φ_j(x)``, shape ``(n, J)``."""
        t = self._radius(intrinsic)
        return self.scale * (mother_step(t) - self.ring_weight * mother_ring(t))

    def bump_gradients(self, intrinsic: np.ndarray) -> np.ndarray:
        """Gradients ``∇φ_j(x)``, shape ``(J, n, m)``."""
        x = np.asarray(intrinsic, dtype=float).reshape(-1, self.manifold.intrinsic_dim)
        t = self._radius(x)
        radial = self.scale * (mother_step_prime(t) - self.ring_weight * mother_ring_prime(t))
        out = np.zeros((self.size, x.shape[0], self.manifold.ambient_dim))
        for j in range(self.size):
            active = radial[:, j] != 0.0
            if not np.any(active):
                continue
            target = np.repeat(self.centers[j : j + 1], int(active.sum()), axis=0)
            towards = geometry.log_map_batch(self.manifold, x[active], target)
            rho = t[active, j : j + 1] * self.epsilon
            # ∇_x ρ(x, c) = -log_x(c) / ρ
            out[j, active] = -radial[active, j : j + 1] / self.epsilon * towards / rho
        return out

    def member(self, tau: Sequence[int]) -> BumpDensity:
        signs = np.asarray(tau, dtype=float)
        if signs.shape != (self.size,) or not np.all(np.isin(signs, (-1.0, 1.0))):
            raise InputError(f"tau must be a vector of {self.size} signs ±1", {"tau": list(tau)})
        return BumpDensity(self, signs)


def _bump_centers(
    manifold: Manifold, epsilon: float, grid: QuadratureGrid, rng: Optional[np.random.Generator]
) -> np.ndarray:
    if manifold.is_periodic:
        per_axis = int(math.floor(manifold.size / (2.0 * epsilon) + 1e-9))
        if per_axis < 1:
            return np.zeros((0, manifold.intrinsic_dim))
        axis = np.arange(per_axis) * manifold.size / per_axis
        mesh = np.meshgrid(*([axis] * manifold.intrinsic_dim), indexing="ij")
        candidates = np.stack([m.reshape(-1) for m in mesh], axis=1)
        if rng is not None:
            candidates = geometry.wrap(
                manifold, candidates + rng.uniform(0.0, manifold.size, manifold.intrinsic_dim)
            )
    else:
        candidates = grid.nodes
        if rng is not None:
            candidates = candidates[rng.permutation(candidates.shape[0])]
    chosen = []
    threshold = 2.0 * epsilon * (1.0 - 1e-9)
    for row in candidates:
        if chosen:
            dist = geometry.pairwise_distances(manifold, row[None, :], np.array(chosen))[0]
            if np.min(dist) < threshold:
                continue
        chosen.append(row)
    return np.array(chosen)


def make_bump_family(
    manifold: Manifold,
    epsilon: float,
    sobolev_order: int,
    amplitude: float,
    seed: geometry.SeedLike = None,
    grid: Optional[QuadratureGrid] = None,
) -> BumpFamily:
    """Build the bump family used by the minimax diagnostic.

    Centres come from a greedy sweep; on flat manifolds the candidates are the
    coarsest regular lattice with spacing at least ``2ε``, randomly translated
    when a seed is given.

    Raises:
        InputError: If ``amplitude`` is outside ``[0, ε^ℓ]`` or fewer than two
            centres fit.
    """
    if epsilon <= 0:
        raise InputError(f"epsilon must be positive, got {epsilon:g}")
    if not 0.0 <= amplitude <= epsilon**sobolev_order:
        raise InputError(
            f"Amplitude must lie in [0, eps^ell] = [0, {epsilon**sobolev_order:g}], got {amplitude:g}",
            {"amplitude": amplitude},
        )
    if grid is None:
        resolution = geometry.default_resolution(manifold)
        if manifold.is_periodic and manifold.intrinsic_dim <= 2:
            resolution = max(resolution, int(math.ceil(16.0 * manifold.size / epsilon)))
        grid = geometry.quadrature_grid(manifold, resolution)
    rng = None if seed is None else geometry.as_generator(seed)
    centers = _bump_centers(manifold, epsilon, grid, rng)
    if centers.shape[0] < 2:
        raise InputError(
            f"epsilon={epsilon:g} is too large to place two bumps on {manifold.spec}",
            {"epsilon": epsilon, "centers": int(centers.shape[0])},
        )

    t = geometry.pairwise_distances(manifold, grid.nodes, centers) / epsilon
    step, ring = mother_step(t), mother_ring(t)
    w = grid.weights[:, None]
    ring_weight = np.sum(step * w, axis=0) / np.sum(ring * w, axis=0)
    raw = step - ring_weight * ring
    target = epsilon**manifold.intrinsic_dim
    scale = np.sqrt(target / np.sum(raw**2 * w, axis=0))

    # κ from the radial profile sampled finely
    radial = np.linspace(0.0, _SUPPORT_END, 20001)
    sup = np.max(np.abs(mother_step(radial)[:, None] - ring_weight * mother_ring(radial)[:, None]), axis=0)
    lip = np.max(
        np.abs(mother_step_prime(radial)[:, None] - ring_weight * mother_ring_prime(radial)[:, None]),
        axis=0,
    )
    kappa = float(max(np.max(scale * sup), np.max(scale * lip)))
    logger.info(
        "Bump family on %s: eps=%g, J=%d, kappa=%.4g", manifold.spec, epsilon, centers.shape[0], kappa
    )
    return BumpFamily(
        manifold=manifold,
        centers=centers,
        epsilon=float(epsilon),
        amplitude=float(amplitude),
        sobolev_order=sobolev_order,
        grid=grid,
        ring_weight=ring_weight,
        scale=scale,
        kappa=kappa,
    )


# --------------------------------------------------------------------------
# Path-space KL
# --------------------------------------------------------------------------


def kl_quadrature(
    p: Density,
    q: Density,
    horizon: float,
    weight_mode: str = "p",
    grid: Optional[QuadratureGrid] = None,
) -> float:
    """``T/4 ∫ |∇ln p - ∇ln q|² w dvol`` with ``w = p`` or ``w = p²``.

    Raises:
        InputError: On a manifold mismatch or an unknown weight mode.
    """
    if p.manifold != q.manifold:
        raise InputError(
            f"Densities live on different manifolds: {p.manifold.spec} vs {q.manifold.spec}"
        )
    if weight_mode not in ("p", "p_squared"):
        raise InputError(f"weight_mode must be 'p' or 'p_squared', got {weight_mode!r}")
    grid = grid or geometry.reference_grid(p.manifold)
    diff = p.grad_log(grid.nodes) - q.grad_log(grid.nodes)
    values = p.evaluate(grid.nodes)
    weight = values if weight_mode == "p" else values**2
    return horizon / 4.0 * grid.integrate(np.sum(diff**2, axis=1) * weight)
