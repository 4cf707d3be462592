"""Simulation of ``A_pq`` diffusions on model manifolds.

The generator is ``A f = q Δf + <q ∇ln(pq), ∇f>``; ``q ≡ 1`` gives the
Langevin diffusion ``Δ + <∇ln p, ∇·>``. Each step of the integrator

    X <- exp_X( sqrt(2 q(X) dt) P_X ξ + (q ∇ln p + ∇q)(X) dt ),   ξ ~ N(0, I_m),

is a tangent Euler-Maruyama step in Itô form followed by the exact geodesic.
Replicas are integrated together; replica ``r`` draws its normals from its
own stream so a batch reproduces the single-replica paths bit for bit.
"""

import logging
import math
import warnings
from enum import Enum
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from . import geometry
from .densities import Density, UniformDensity, make_density, sample_mu
from .exceptions import InputError, NumericalWarning, SimulationError
from .models.manifold import Manifold
from .models.measure import DiscreteMeasure
from .models.path import DiffusionPath
from .specs import GeneratorKind, parse_generator

logger = logging.getLogger(__name__)

NOISE_BLOCK = 1024
MAX_REFINEMENTS = 10
DEFAULT_MAX_POINTS = 20_000_000


class GeneratorSpec(BaseModel):
    """Target density ``p`` and diffusivity ``q`` of an ``A_pq`` generator.

    ``kappa_min`` and ``kappa_max`` bound ``Γ(f, f) / |∇f|² = q`` on the
    reference grid. ``ultracontractivity`` is an opaque constant carried for
    reports and never computed.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    kind: GeneratorKind
    density: Density
    q: Optional[Density] = None
    kappa_min: float = Field(default=1.0, gt=0)
    kappa_max: float = Field(default=1.0, gt=0)
    ultracontractivity: Optional[float] = None

    @model_validator(mode="after")
    def validate_q(self) -> "GeneratorSpec":
        if self.kind == GeneratorKind.APQ and self.q is None:
            raise ValueError("an Apq generator needs a diffusivity q")
        if self.q is not None and self.q.manifold != self.density.manifold:
            raise ValueError("p and q must live on the same manifold")
        return self

    @classmethod
    def langevin(cls, density: Density) -> "GeneratorSpec":
        return cls(kind=GeneratorKind.LANGEVIN, density=density)

    @classmethod
    def apq(cls, density: Density, q: Density) -> "GeneratorSpec":
        grid = geometry.reference_grid(density.manifold)
        values = q.evaluate(grid.nodes) * q.manifold.total_volume
        if np.min(values) <= 0:
            raise InputError(f"Diffusivity q={q.spec!r} is not positive on the reference grid")
        return cls(
            kind=GeneratorKind.APQ,
            density=density,
            q=q,
            kappa_min=float(np.min(values)),
            kappa_max=float(np.max(values)),
        )

    @property
    def manifold(self) -> Manifold:
        return self.density.manifold

    @property
    def spec(self) -> str:
        if self.q is None:
            return "langevin"
        return f"apq:{self.q.spec}"

    def diffusivity(self, intrinsic: np.ndarray) -> np.ndarray:
        if self.q is None:
            return np.ones(np.asarray(intrinsic).reshape(-1, self.manifold.intrinsic_dim).shape[0])
        return self.q.evaluate(intrinsic) * self.manifold.total_volume

    def drift(self, intrinsic: np.ndarray) -> np.ndarray:
        """Itô drift ``q ∇ln p + ∇q`` as ambient tangent vectors."""
        grad_log_p = self.density.grad_log(intrinsic)
        if self.q is None:
            return grad_log_p
        q = self.diffusivity(intrinsic)
        return q[:, None] * grad_log_p + self.q.gradient(intrinsic) * self.manifold.total_volume


def make_generator(manifold: Manifold, density: Union[str, Density], spec: str = "langevin") -> GeneratorSpec:
    """Build a generator from ``"langevin"`` or ``"apq:<q density spec>"``."""
    p = make_density(manifold, density) if isinstance(density, str) else density
    parsed = parse_generator(spec, manifold.intrinsic_dim)
    if parsed.kind == GeneratorKind.LANGEVIN:
        return GeneratorSpec.langevin(p)
    assert parsed.q is not None
    return GeneratorSpec.apq(p, make_density(manifold, parsed.q))


class InitialMode(str, Enum):
    POINT = "point"
    INVARIANT = "invariant"
    UNIFORM = "uniform"


class SdeConfig(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    generator: GeneratorSpec
    horizon: float = Field(..., gt=0, description="Time horizon T")
    dt: float = Field(..., gt=0, description="Integrator step size")
    initial: InitialMode = Field(default=InitialMode.INVARIANT)
    initial_point: Optional[Tuple[float, ...]] = Field(
        default=None, description="Intrinsic start for initial=point"
    )
    seed: Optional[int] = None
    record_every: int = Field(default=1, ge=1, description="Steps between recorded points")
    max_points: int = Field(
        default=DEFAULT_MAX_POINTS, ge=2, description="Recorded points allowed in memory"
    )

    @model_validator(mode="after")
    def validate_schedule(self) -> "SdeConfig":
        if self.dt > self.horizon:
            raise ValueError(f"dt={self.dt:g} exceeds the horizon T={self.horizon:g}")
        if self.initial == InitialMode.POINT:
            if self.initial_point is None:
                raise ValueError("initial=point requires initial_point")
            if len(self.initial_point) != self.generator.manifold.intrinsic_dim:
                raise ValueError("initial_point does not match the manifold dimension")
        return self

    @property
    def manifold(self) -> Manifold:
        return self.generator.manifold

    @property
    def n_steps(self) -> int:
        # tolerate T/dt landing a hair above an integer
        return max(1, int(math.ceil(self.horizon / self.dt - 1e-9)))

    @property
    def n_recorded(self) -> int:
        return self.n_steps // self.record_every + (1 if self.n_steps % self.record_every else 0) + 1


class _ReplicaStreams:
    """Per-replica noise buffers; normals are consumed in blocks of ``NOISE_BLOCK`` steps."""

    def __init__(self, seeds: Sequence[Optional[int]], width: int) -> None:
        self.width = width
        self.main: List[np.random.Generator] = []
        self.refine: List[np.random.Generator] = []
        self.initial: List[np.random.Generator] = []
        for seed in seeds:
            children = np.random.SeedSequence(seed).spawn(3)
            self.main.append(np.random.default_rng(children[0]))
            self.refine.append(np.random.default_rng(children[1]))
            self.initial.append(np.random.default_rng(children[2]))
        self._buffer = np.empty((len(seeds), 0, width))
        self._cursor = 0

    def next(self) -> np.ndarray:
        if self._cursor >= self._buffer.shape[1]:
            self._buffer = np.stack(
                [rng.standard_normal((NOISE_BLOCK, self.width)) for rng in self.main]
            )
            self._cursor = 0
        out = self._buffer[:, self._cursor, :]
        self._cursor += 1
        return out


def _initial_positions(cfg: SdeConfig, streams: _ReplicaStreams) -> np.ndarray:
    manifold = cfg.manifold
    rows = []
    for rng in streams.initial:
        if cfg.initial == InitialMode.POINT:
            assert cfg.initial_point is not None
            rows.append(geometry.wrap(manifold, np.asarray(cfg.initial_point, dtype=float)[None, :])[0])
        elif cfg.initial == InitialMode.INVARIANT:
            rows.append(sample_mu(cfg.generator.density, 1, rng)[0])
        else:
            rows.append(geometry.sample_volume(manifold, 1, rng)[0])
    return np.array(rows)


def _refined_step(
    cfg: SdeConfig,
    x: np.ndarray,
    increment: np.ndarray,
    dt: float,
    rng: np.random.Generator,
    depth: int,
) -> np.ndarray:
    """Advance one replica by ``dt`` given its Brownian increment, halving on rejection."""
    manifold = cfg.manifold
    point = x[None, :]
    q = cfg.generator.diffusivity(point)[0]
    noise = math.sqrt(2.0 * q) * geometry.project(manifold, point, increment[None, :])
    step = noise + cfg.generator.drift(point) * dt
    if np.linalg.norm(step) < manifold.injectivity_radius:
        return geometry.exp_map_batch(manifold, point, step)[0]
    if depth >= MAX_REFINEMENTS:
        raise SimulationError(
            f"Step rejected after {MAX_REFINEMENTS} refinements at dt={dt:.3e}; "
            "reduce dt",
            {"dt": dt, "position": x.tolist()},
        )
    # Brownian bridge split of the increment
    bridge = rng.standard_normal(increment.shape) * math.sqrt(dt) / 2.0
    first, second = increment / 2.0 + bridge, increment / 2.0 - bridge
    middle = _refined_step(cfg, x, first, dt / 2.0, rng, depth + 1)
    return _refined_step(cfg, middle, second, dt / 2.0, rng, depth + 1)


def _integrate(
    cfg: SdeConfig, seeds: Sequence[Optional[int]], chunk_steps: Optional[int]
) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """Yield ``(times, positions)`` chunks; ``positions`` has shape ``(R, n, d)``.

    Consecutive chunks share their boundary point.
    """
    manifold = cfg.manifold
    generator = cfg.generator
    streams = _ReplicaStreams(seeds, manifold.ambient_dim)
    x = _initial_positions(cfg, streams)
    n_steps, every = cfg.n_steps, cfg.record_every
    langevin_uniform = generator.q is None and isinstance(generator.density, UniformDensity)

    capacity = cfg.n_recorded if chunk_steps is None else min(cfg.n_recorded, chunk_steps + 1)
    times = np.empty(capacity)
    recorded = np.empty((x.shape[0], capacity, manifold.intrinsic_dim))
    times[0], recorded[:, 0] = 0.0, x
    filled = 1
    for step_index in range(1, n_steps + 1):
        t_prev = (step_index - 1) * cfg.dt
        t_next = cfg.horizon if step_index == n_steps else step_index * cfg.dt
        dt = t_next - t_prev
        increment = streams.next() * math.sqrt(dt)
        noise = geometry.project(manifold, x, increment)
        if langevin_uniform:
            step = math.sqrt(2.0) * noise
        else:
            q = generator.diffusivity(x)
            step = np.sqrt(2.0 * q)[:, None] * noise + generator.drift(x) * dt
        rejected = np.linalg.norm(step, axis=1) >= manifold.injectivity_radius
        moved = geometry.exp_map_batch(manifold, x, step)
        for r in np.flatnonzero(rejected):
            logger.debug("Step %d rejected for replica %d; refining", step_index, r)
            moved[r] = _refined_step(cfg, x[r], increment[r], dt, streams.refine[r], 1)
        x = moved
        if step_index % every == 0 or step_index == n_steps:
            if filled == capacity:
                yield times[:filled].copy(), recorded[:, :filled].copy()
                times[0], recorded[:, 0] = times[filled - 1], recorded[:, filled - 1]
                filled = 1
            times[filled], recorded[:, filled] = t_next, x
            filled += 1
    yield times[:filled].copy(), recorded[:, :filled].copy()


def _make_path(cfg: SdeConfig, times: np.ndarray, positions: np.ndarray, seed: Optional[int]) -> DiffusionPath:
    return DiffusionPath(
        manifold=cfg.manifold,
        times=times,
        intrinsic=positions,
        dt=cfg.dt,
        record_every=cfg.record_every,
        seed=seed,
        generator=cfg.generator.spec,
        density=cfg.generator.density.spec,
    )


def _check_budget(cfg: SdeConfig) -> None:
    if cfg.n_recorded > cfg.max_points:
        raise InputError(
            f"{cfg.n_recorded} recorded points exceed the budget of {cfg.max_points}; "
            "increase record_every or use simulate_stream",
            {"n_recorded": cfg.n_recorded},
        )


def simulate_replicas(cfg: SdeConfig, seeds: Sequence[Optional[int]]) -> List[DiffusionPath]:
    """Simulate one path per seed, integrating all replicas together."""
    if not seeds:
        return []
    _check_budget(cfg)
    logger.info(
        "Simulating %d replica(s) on %s: %d steps, dt=%g",
        len(seeds),
        cfg.manifold.spec,
        cfg.n_steps,
        cfg.dt,
    )
    times, positions = next(_integrate(cfg, seeds, None))
    return [_make_path(cfg, times, positions[r], seed) for r, seed in enumerate(seeds)]


def simulate(cfg: SdeConfig) -> DiffusionPath:
    """Simulate a path of the diffusion; deterministic given ``cfg.seed``.

    Raises:
        SimulationError: If a step keeps reaching the injectivity radius.
        InputError: If the recorded path would exceed ``cfg.max_points``.
    """
    return simulate_replicas(cfg, [cfg.seed])[0]


def simulate_stream(cfg: SdeConfig, chunk_steps: int = 100_000) -> Iterator[DiffusionPath]:
    """Yield consecutive windows of a single path without materialising it.

    Each window starts at the last point of the previous one, so the windows
    together carry the same trapezoid time weights as the full path.
    """
    if chunk_steps < 1:
        raise InputError(f"chunk_steps must be positive, got {chunk_steps}")
    for times, positions in _integrate(cfg, [cfg.seed], chunk_steps):
        yield _make_path(cfg, times, positions[0], cfg.seed)


# --------------------------------------------------------------------------
# Occupation measures and Girsanov ratios
# --------------------------------------------------------------------------


def trapezoid_weights(times: np.ndarray) -> np.ndarray:
    """Unnormalised trapezoid time weights; they sum to ``t_N - t_0``."""
    t = np.asarray(times, dtype=float)
    weights = np.zeros_like(t)
    if t.shape[0] == 1:
        return weights
    gaps = np.diff(t)
    weights[:-1] += gaps / 2.0
    weights[1:] += gaps / 2.0
    return weights


def occupation_measure(path: DiffusionPath) -> DiscreteMeasure:
    """Time-averaged occupation measure of ``path`` with trapezoid weights."""
    if path.n_points == 1:
        return DiscreteMeasure.dirac(path.manifold, path.intrinsic[0])
    weights = trapezoid_weights(path.times) / path.horizon
    return DiscreteMeasure(manifold=path.manifold, support=path.intrinsic, weights=weights / weights.sum())


def _girsanov_terms(path: DiffusionPath, p: Density, q: Density) -> Tuple[np.ndarray, np.ndarray]:
    if p.manifold != path.manifold or q.manifold != path.manifold:
        raise InputError("Path and densities live on different manifolds")
    if path.n_points < 2:
        return np.zeros(0), np.zeros(0)
    if path.density != p.spec:
        logger.debug("Path was simulated under %r, ratio computed for %r", path.density, p.spec)
    x = path.intrinsic[:-1]
    dt = np.diff(path.times)
    diff = p.grad_log(x) - q.grad_log(x)
    compensator = 0.25 * np.sum(diff**2, axis=1) * dt
    return diff, compensator


def girsanov_log_ratio(
    path: DiffusionPath, p: Density, q: Density, tolerance: float = 1e-8
) -> float:
    """Discretised ``log dP_p / dP_q`` along a Langevin path simulated under ``p``.

    The Brownian increment is reconstructed as ``dB = (Δ - ∇ln p dt) / √2``
    with ``Δ = log_{X_i}(X_{i+1})``, and

        log ratio = Σ <∇ln p - ∇ln q, dB> / √2 + 1/4 Σ |∇ln p - ∇ln q|² dt.

    Raises:
        InputError: If the path is thinned (``record_every > 1``).
    """
    if path.record_every != 1:
        raise InputError(
            "Girsanov ratios need every integrator step (record_every == 1)",
            {"record_every": path.record_every},
        )
    diff, compensator = _girsanov_terms(path, p, q)
    if diff.shape[0] == 0:
        return 0.0
    x, y = path.intrinsic[:-1], path.intrinsic[1:]
    dt = np.diff(path.times)
    delta = geometry.log_map_batch(path.manifold, x, y)
    residual = float(np.max(np.abs(geometry.project(path.manifold, x, delta) - delta)))
    if residual > tolerance:
        message = f"Path increments leave the tangent space (residual {residual:.2e})"
        logger.warning(message)
        warnings.warn(message, NumericalWarning, stacklevel=2)
    d_brownian = (delta - p.grad_log(x) * dt[:, None]) / math.sqrt(2.0)
    martingale = np.sum(diff * d_brownian, axis=1) / math.sqrt(2.0)
    return float(np.sum(martingale) + np.sum(compensator))


def girsanov_compensator(path: DiffusionPath, p: Density, q: Density) -> float:
    """Compensator ``1/4 Σ |∇ln p - ∇ln q|² dt`` alone.

    It has the same expectation as ``girsanov_log_ratio`` (the martingale
    part has mean zero) and a much smaller variance.
    """
    _, compensator = _girsanov_terms(path, p, q)
    return float(np.sum(compensator))
