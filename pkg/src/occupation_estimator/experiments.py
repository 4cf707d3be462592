"""Rate experiments, Girsanov cross-checks and minimax diagnostics.

All randomness flows from a master seed through ``derive_seed``: the seed
of a replica depends on ``(master, T index, replica index, role)`` only, so
results do not depend on the order in which workers finish.
"""

import csv
import hashlib
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import stats

from . import geometry
from .densities import BumpFamily, Density, kl_quadrature, make_bump_family, make_density
from .diffusion import (
    GeneratorSpec,
    InitialMode,
    SdeConfig,
    girsanov_compensator,
    girsanov_log_ratio,
    make_generator,
    occupation_measure,
    simulate,
    simulate_replicas,
    simulate_stream,
)
from .estimator import bandwidth_rule, default_dt, guard_flags, smooth
from .exceptions import ConstructionError, InputError
from .kernels import KernelProfile, NormalizedKernel, detect_critical_bandwidth, make_profile
from .models.estimate import EstimatorSettings
from .models.experiment import (
    EstimatorMode,
    ExperimentConfig,
    GirsanovEstimator,
    KLCheckConfig,
    KLReport,
    MinimaxConfig,
    MinimaxReport,
    MinimaxRow,
    RateReport,
    RateRow,
)
from .models.manifold import Manifold, QuadratureGrid
from .models.measure import DiscreteMeasure
from .specs import parse_manifold
from .transport import risk_w2, w1_exact

logger = logging.getLogger(__name__)

MIN_SLOPE_POINTS = 4
MIN_RELIABLE_REPLICAS = 8
DEFAULT_OCCUPATION_DT = 1e-3
STREAM_CHUNK_STEPS = 100_000

PRESETS: Dict[str, Dict[str, object]] = {
    "circle-occupation": {
        "manifold": "circle:c=1",
        "density": "trig:a1=0.5",
        "t_grid": (64.0, 128.0, 256.0, 512.0, 1024.0, 2048.0, 4096.0),
        "replicas": 16,
        "estimator_mode": "occupation",
        "protocol": {"solver": "exact", "n_ref": 1000, "n_est": 1000},
    },
    "torus5-occupation": {
        "manifold": "torus:d=5,s=1",
        "density": "trig:a1=0.5",
        "t_grid": (256.0, 512.0, 1024.0, 2048.0),
        "replicas": 8,
        "dt": 1e-3,
        "estimator_mode": "occupation",
        "protocol": {"solver": "entropic", "n_ref": 2000, "n_est": 2000},
    },
    "torus5-smoothed": {
        "manifold": "torus:d=5,s=1",
        "density": "trig:a1=0.5",
        "t_grid": (256.0, 512.0, 1024.0, 2048.0),
        "replicas": 8,
        "dt": 1e-3,
        "estimator_mode": "smoothed",
        "kernel": "poly:r=4",
        "sobolev_order": 2,
        "margin": "grid",
        "clamp_critical_bandwidth": False,
        "protocol": {"solver": "entropic", "n_ref": 2000, "n_est": 2000},
    },
}


def preset(name: str, **overrides: object) -> ExperimentConfig:
    """Named experiment configuration, optionally with field overrides.

    Raises:
        InputError: For an unknown preset name.
    """
    if name not in PRESETS:
        raise InputError(
            f"Unknown preset {name!r}; choose from {', '.join(sorted(PRESETS))}",
            {"preset": name},
        )
    return ExperimentConfig(**{**PRESETS[name], **overrides})


def derive_seed(master: int, t_index: int, replica: int, role: str) -> int:
    """63-bit seed from a blake2b hash of ``(master, t_index, replica, role)``."""
    digest = hashlib.blake2b(
        f"{master}:{t_index}:{replica}:{role}".encode("utf-8"), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big") & (2**63 - 1)


def theoretical_slope(
    dimension: int,
    mode: EstimatorMode = EstimatorMode.OCCUPATION,
    sobolev_order: int = 2,
    empirical_bandwidth: bool = False,
) -> float:
    """Exponent of ``T`` in the expected ``W2²`` risk.

    Occupation measures decay like ``T^-1`` up to ``d = 4`` (with a log
    factor at ``d = 4``) and like ``T^{-2/(d-2)}`` beyond; the smoothed
    estimator at ``h ~ T^{-1/(2ℓ+d-2)}`` decays like ``T^{-(2ℓ+2)/(2ℓ+d-2)}``.
    """
    if mode == EstimatorMode.SMOOTHED and not empirical_bandwidth:
        return -(2.0 * sobolev_order + 2.0) / (2.0 * sobolev_order + dimension - 2.0)
    if dimension <= 4:
        return -1.0
    return -2.0 / (dimension - 2.0)


def fit_slope(horizons: Sequence[float], values: Sequence[float]) -> Tuple[float, float]:
    """Least-squares slope of ``log value`` against ``log T`` and its standard error.

    Values sharing a horizon are averaged first.

    Raises:
        InputError: With fewer than four distinct horizons or non-positive values.
    """
    if len(horizons) != len(values):
        raise InputError("horizons and values must have the same length")
    grouped: Dict[float, List[float]] = {}
    for t, v in zip(horizons, values):
        grouped.setdefault(float(t), []).append(float(v))
    if len(grouped) < MIN_SLOPE_POINTS:
        raise InputError(
            f"A slope fit needs at least {MIN_SLOPE_POINTS} distinct horizons, got {len(grouped)}",
            {"horizons": sorted(grouped)},
        )
    ts = sorted(grouped)
    means = [float(np.mean(grouped[t])) for t in ts]
    if any(m <= 0 or not math.isfinite(m) for m in means):
        raise InputError("Slope fits need positive finite values", {"means": means})
    fit = stats.linregress(np.log(ts), np.log(means))
    return float(fit.slope), float(fit.stderr)


def mean_by_horizon(rows: Sequence[RateRow]) -> Dict[float, float]:
    """Mean ``W2²`` per horizon over the rows that succeeded."""
    grouped: Dict[float, List[float]] = {}
    for row in rows:
        if row.error is None and row.w2 is not None:
            grouped.setdefault(row.T, []).append(row.w2)
    return {t: float(np.mean(v)) for t, v in sorted(grouped.items())}


# --------------------------------------------------------------------------
# Rate experiments
# --------------------------------------------------------------------------


class _RateContext(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    cfg: ExperimentConfig
    manifold: Manifold
    density: Density
    generator: GeneratorSpec
    profile: Optional[KernelProfile]
    grid: Optional[QuadratureGrid]
    h_c: Optional[float]
    settings: EstimatorSettings


def _rate_context(cfg: ExperimentConfig) -> _RateContext:
    if cfg.initial not in {m.value for m in InitialMode}:
        raise InputError(
            f"Unknown initial mode {cfg.initial!r}; expected point, invariant or uniform",
            {"initial": cfg.initial},
        )
    manifold = parse_manifold(cfg.manifold)
    density = make_density(manifold, cfg.density)
    generator = make_generator(manifold, density, cfg.generator)
    profile: Optional[KernelProfile] = None
    grid: Optional[QuadratureGrid] = None
    h_c: Optional[float] = None
    if cfg.estimator_mode == EstimatorMode.SMOOTHED:
        profile = make_profile(cfg.kernel, manifold.intrinsic_dim)
        grid = geometry.reference_grid(manifold, cfg.grid_resolution)
        if not profile.nonneg and cfg.clamp_critical_bandwidth:
            try:
                h_c = detect_critical_bandwidth(manifold, profile, cfg.distance_mode)
            except ConstructionError:
                logger.warning("No critical bandwidth found for %s; h is not clamped", profile.spec)
    settings = EstimatorSettings(margin=cfg.margin, method=cfg.smoothing_method)
    return _RateContext(
        cfg=cfg,
        manifold=manifold,
        density=density,
        generator=generator,
        profile=profile,
        grid=grid,
        h_c=h_c,
        settings=settings,
    )


def _sde_config(ctx: _RateContext, horizon: float, dt: float, seed: int) -> SdeConfig:
    cfg = ctx.cfg
    return SdeConfig(
        generator=ctx.generator,
        horizon=horizon,
        dt=dt,
        initial=InitialMode(cfg.initial),
        initial_point=cfg.initial_point,
        seed=seed,
        record_every=cfg.record_every,
    )


def _rate_row(ctx: _RateContext, t_index: int, horizon: float, replica: int) -> RateRow:
    cfg = ctx.cfg
    seed = derive_seed(cfg.master_seed, t_index, replica, "path")
    row = RateRow(T=horizon, t_index=t_index, replica=replica, seed=seed)
    start = time.perf_counter()
    try:
        w2_seed = derive_seed(cfg.master_seed, t_index, replica, "w2")
        if cfg.estimator_mode == EstimatorMode.OCCUPATION:
            dt = cfg.dt or DEFAULT_OCCUPATION_DT
            path = simulate(_sde_config(ctx, horizon, dt, seed))
            w2 = risk_w2(occupation_measure(path), ctx.density, cfg.protocol, w2_seed)
            updates: Dict[str, object] = {"w2": w2}
        else:
            assert ctx.profile is not None and ctx.grid is not None
            d = ctx.manifold.intrinsic_dim
            h = bandwidth_rule(
                horizon,
                d,
                cfg.sobolev_order,
                cfg.bandwidth_constant,
                cfg.empirical_bandwidth,
                ctx.h_c,
            )
            nk = NormalizedKernel(ctx.manifold, ctx.profile, h, cfg.distance_mode)
            dt = cfg.dt or default_dt(h)
            stream = simulate_stream(_sde_config(ctx, horizon, dt, seed), STREAM_CHUNK_STEPS)
            estimate = smooth(stream, nk, ctx.grid, ctx.settings)
            guards = guard_flags(horizon, h, d, cfg.guard_constant)
            updates = {
                "h": h,
                "positivity_ok": estimate.positivity_ok,
                "guard_main": guards.main,
                "guard_variance": guards.variance,
                "w2": risk_w2(estimate, ctx.density, cfg.protocol, w2_seed),
            }
        row = row.model_copy(update=updates)
        logger.debug("T=%g replica %d: W2²=%.4e", horizon, replica, row.w2)
    except Exception as exc:  # pylint: disable=broad-except
        logger.error("T=%g replica %d failed: %s", horizon, replica, exc)
        row = row.model_copy(update={"error": f"{type(exc).__name__}: {exc}"})
    return row.model_copy(update={"wall_time": time.perf_counter() - start})


def estimated_steps(cfg: ExperimentConfig) -> int:
    """Integrator steps over all horizons and replicas (occupation dt or the default)."""
    dt = cfg.dt or DEFAULT_OCCUPATION_DT
    return int(sum(math.ceil(t / dt) for t in cfg.t_grid) * cfg.replicas)


def run_rate_experiment(cfg: ExperimentConfig) -> RateReport:
    """Simulate, estimate and score every ``(T, replica)`` pair, then fit the slope.

    Replica failures are recorded on their rows. Rows come back in
    ``(T index, replica)`` order whatever the worker count.
    """
    ctx = _rate_context(cfg)
    theory = theoretical_slope(
        ctx.manifold.intrinsic_dim, cfg.estimator_mode, cfg.sobolev_order, cfg.empirical_bandwidth
    )
    logger.info(
        "Rate experiment on %s (%s): %d horizons x %d replicas, about %d integrator steps",
        ctx.manifold.spec,
        cfg.estimator_mode.value,
        len(cfg.t_grid),
        cfg.replicas,
        estimated_steps(cfg),
    )
    tasks = [(i, t, r) for i, t in enumerate(cfg.t_grid) for r in range(cfg.replicas)]
    with ThreadPoolExecutor(max_workers=cfg.workers) as executor:
        rows = list(executor.map(lambda task: _rate_row(ctx, *task), tasks))

    means = mean_by_horizon(rows)
    slope: Optional[float] = None
    stderr: Optional[float] = None
    try:
        slope, stderr = fit_slope(list(means), list(means.values()))
        logger.info("Fitted slope %.3f ± %.3f (theory %.3f)", slope, stderr, theory)
    except InputError as exc:
        logger.warning("No slope fitted: %s", exc.message)
    reliable = slope is not None and cfg.replicas >= MIN_RELIABLE_REPLICAS
    if cfg.replicas < MIN_RELIABLE_REPLICAS:
        logger.warning(
            "%d replicas per horizon; slope fits need at least %d to be reliable",
            cfg.replicas,
            MIN_RELIABLE_REPLICAS,
        )
    report = RateReport(
        config=cfg,
        rows=rows,
        mean_w2={f"{t:g}": v for t, v in means.items()},
        slope=slope,
        slope_stderr=stderr,
        theoretical_slope=theory,
        fit_reliable=reliable,
    )
    if cfg.output:
        write_rate_report(report, cfg.output)
    return report


# --------------------------------------------------------------------------
# Reports on disk
# --------------------------------------------------------------------------


def write_rows_csv(rows: Sequence[BaseModel], path: Union[str, Path]) -> Path:
    """One CSV line per row model, columns in field order."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        target.write_text("", encoding="utf-8")
        return target
    fieldnames = list(type(rows[0]).model_fields)
    with target.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: "" if v is None else v for k, v in row.model_dump(mode="json").items()})
    return target


def write_json(report: BaseModel, path: Union[str, Path]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return target


def write_rate_report(report: RateReport, output: Union[str, Path]) -> Tuple[Path, Path]:
    """Rows as CSV at ``output`` and the report summary as JSON alongside."""
    csv_path = write_rows_csv(report.rows, output)
    json_path = write_json(report, Path(output).with_suffix(".json"))
    logger.info("Wrote %s and %s", csv_path, json_path)
    return csv_path, json_path


# --------------------------------------------------------------------------
# Girsanov cross-check
# --------------------------------------------------------------------------


def _z_score(mean: float, stderr: float, reference: float) -> float:
    gap = mean - reference
    if stderr > 0:
        return gap / stderr
    return 0.0 if abs(gap) <= 1e-12 else math.copysign(math.inf, gap)


def run_kl_check(cfg: KLCheckConfig) -> KLReport:
    """Monte Carlo path-space KL against both quadrature weightings.

    Paths are Langevin paths for ``p`` started at ``μ_p``. A weighting
    matches when the adjudicating estimator is within ``z_threshold``
    standard errors of it; ``matching_mode`` is set only when exactly one
    weighting matches.

    Raises:
        InputError: Off the circle and tori of dimension at most two.
    """
    manifold = parse_manifold(cfg.manifold)
    if not manifold.is_periodic or manifold.intrinsic_dim > 2:
        raise InputError(
            f"The KL check runs on the circle and tori of dimension <= 2, got {manifold.spec}",
            {"manifold": manifold.spec},
        )
    p = make_density(manifold, cfg.p)
    q = make_density(manifold, cfg.q)
    sde = SdeConfig(
        generator=GeneratorSpec.langevin(p),
        horizon=cfg.horizon,
        dt=cfg.dt,
        initial=InitialMode.INVARIANT,
    )
    seeds = [derive_seed(cfg.master_seed, 0, r, "kl") for r in range(cfg.replicas)]
    batches = [seeds[i : i + cfg.batch_size] for i in range(0, len(seeds), cfg.batch_size)]
    logger.info(
        "KL check on %s: %d paths, T=%g, dt=%g, %d batch(es)",
        manifold.spec,
        cfg.replicas,
        cfg.horizon,
        cfg.dt,
        len(batches),
    )

    def run_batch(batch: List[int]) -> List[Tuple[float, float]]:
        paths = simulate_replicas(sde, batch)
        return [(girsanov_log_ratio(path, p, q), girsanov_compensator(path, p, q)) for path in paths]

    with ThreadPoolExecutor(max_workers=cfg.workers) as executor:
        results = [pair for chunk in executor.map(run_batch, batches) for pair in chunk]

    ratios = np.array([r for r, _ in results])
    compensators = np.array([c for _, c in results])
    n = len(results)
    ratio_se = float(np.std(ratios, ddof=1) / math.sqrt(n))
    comp_se = float(np.std(compensators, ddof=1) / math.sqrt(n))
    if cfg.adjudicate_with == GirsanovEstimator.LOG_RATIO:
        mean, se = float(ratios.mean()), ratio_se
    else:
        mean, se = float(compensators.mean()), comp_se

    quad_p = kl_quadrature(p, q, cfg.horizon, "p")
    quad_p2 = kl_quadrature(p, q, cfg.horizon, "p_squared")
    z_p, z_p2 = _z_score(mean, se, quad_p), _z_score(mean, se, quad_p2)
    matches = [mode for mode, z in (("p", z_p), ("p_squared", z_p2)) if abs(z) < cfg.z_threshold]
    matching = matches[0] if len(matches) == 1 else None
    logger.info(
        "KL Monte Carlo %.5f ± %.5f; quadrature p=%.5f (z=%.2f), p²=%.5f (z=%.2f); match: %s",
        mean,
        se,
        quad_p,
        z_p,
        quad_p2,
        z_p2,
        matching,
    )
    return KLReport(
        config=cfg,
        log_ratio_mean=float(ratios.mean()),
        log_ratio_stderr=ratio_se,
        compensator_mean=float(compensators.mean()),
        compensator_stderr=comp_se,
        quadrature_p=quad_p,
        quadrature_p_squared=quad_p2,
        z_p=z_p,
        z_p_squared=z_p2,
        matching_mode=matching,
    )


# --------------------------------------------------------------------------
# Minimax diagnostic
# --------------------------------------------------------------------------


def _bump_w1(family: BumpFamily, j: int) -> float:
    """``W1`` between the positive and negative parts of ``φ_j``, times their mass."""
    grid = family.grid
    manifold = family.manifold
    t = geometry.pairwise_distances(manifold, grid.nodes, family.centers[j : j + 1])[:, 0] / family.epsilon
    local = t <= 0.5
    mass = family.bumps(grid.nodes[local])[:, j] * grid.weights[local]
    positive, negative = np.maximum(mass, 0.0), np.maximum(-mass, 0.0)
    total = 0.5 * (positive.sum() + negative.sum())
    if total <= 0:
        return 0.0
    nodes = grid.nodes[local]
    plus = DiscreteMeasure.normalized(manifold, nodes[positive > 0], positive[positive > 0])
    minus = DiscreteMeasure.normalized(manifold, nodes[negative > 0], negative[negative > 0])
    return total * w1_exact(plus, minus).cost


def w1_separation(family: BumpFamily, tau: np.ndarray, other: np.ndarray) -> float:
    """``W1(p_τ, p_τ')`` from the exact bump-by-bump transport of the difference.

    ``p_τ - p_τ'`` is a sum of zero-mass terms ``±(v/κ) φ_j / vol`` over the
    flipped coordinates, with pairwise disjoint supports; the separation is
    the sum of their transport costs.
    """
    flipped = np.flatnonzero(np.asarray(tau) != np.asarray(other))
    if flipped.size == 0:
        return 0.0
    factor = family.amplitude / family.kappa / family.manifold.total_volume
    return float(factor * sum(_bump_w1(family, int(j)) for j in flipped))


def _log_fit(rows: Sequence[MinimaxRow], value: str) -> Tuple[Optional[float], Optional[float]]:
    """Exponents of ``v`` and ``ε`` in ``log(value / d_H) = a log v + b log ε + c``."""
    usable = [r for r in rows if r.hamming > 0 and getattr(r, value) > 0]
    if len(usable) < 3:
        return None, None
    design = np.column_stack(
        [np.log([r.amplitude for r in usable]), np.log([r.epsilon for r in usable]), np.ones(len(usable))]
    )
    target = np.log([getattr(r, value) / r.hamming for r in usable])
    coeff, _, rank, _ = np.linalg.lstsq(design, target, rcond=None)
    if rank < 3:
        # a single ε cannot separate the two exponents
        coeff, _, _, _ = np.linalg.lstsq(design[:, [0, 2]], target, rcond=None)
        return float(coeff[0]), None
    return float(coeff[0]), float(coeff[1])


def run_minimax_diagnostic(cfg: MinimaxConfig) -> MinimaxReport:
    """Separation and path-space KL of bump-family pairs across ``ε`` and ``v``.

    For each ``ε`` one family of centres is built; amplitudes are fractions
    of ``ε^ℓ``. Each pair of sign vectors is drawn from the master seed.

    Raises:
        InputError: Off the circle and tori of dimension at most two.
    """
    manifold = parse_manifold(cfg.manifold)
    if not manifold.is_periodic or manifold.intrinsic_dim > 2:
        raise InputError(
            f"The minimax diagnostic runs on tori of dimension 1 or 2, got {manifold.spec}",
            {"manifold": manifold.spec},
        )
    d = manifold.intrinsic_dim
    rows: List[MinimaxRow] = []
    for e_index, eps in enumerate(cfg.epsilons):
        base = make_bump_family(
            manifold,
            eps,
            cfg.sobolev_order,
            eps**cfg.sobolev_order,
            seed=derive_seed(cfg.master_seed, e_index, 0, "centers"),
        )
        for fraction in cfg.amplitude_fractions:
            family = base.model_copy(update={"amplitude": fraction * eps**cfg.sobolev_order})
            for k in range(cfg.pairs):
                rng = geometry.as_generator(derive_seed(cfg.master_seed, e_index, k, "tau"))
                tau = rng.choice((-1.0, 1.0), size=family.size)
                other = np.where(rng.random(family.size) < 0.5, -tau, tau)
                hamming = int(np.sum(tau != other))
                first, second = family.member(tau), family.member(other)
                rows.append(
                    MinimaxRow(
                        epsilon=eps,
                        amplitude=family.amplitude,
                        kappa=family.kappa,
                        centers=family.size,
                        hamming=hamming,
                        w1=w1_separation(family, tau, other),
                        lower_bound_form=family.amplitude * eps ** (d + 1) / family.kappa**2 * hamming,
                        kl_p=kl_quadrature(first, second, cfg.horizon, "p", family.grid),
                        kl_p_squared=kl_quadrature(first, second, cfg.horizon, "p_squared", family.grid),
                    )
                )
        logger.info("Minimax rows for eps=%g done (%d centres)", eps, base.size)

    w1_v, _ = _log_fit(rows, "w1")
    kl_v, kl_eps = _log_fit(rows, "kl_p")
    return MinimaxReport(
        config=cfg,
        rows=rows,
        w1_amplitude_exponent=w1_v,
        kl_amplitude_exponent=kl_v,
        kl_epsilon_exponent=kl_eps,
        theoretical_kl_epsilon_exponent=float(d - 2),
    )
