"""Wasserstein distances between discrete measures on a manifold.

Costs are squared geodesic distances unless stated otherwise. Exact solves
use the network simplex of ``ot.emd``; large instances use the log-domain
Sinkhorn iterations of ``ot.sinkhorn``; their cost is the sharp transport
cost of the entropic plan, debiased by the two self-transport costs.
"""

import logging
import warnings
from typing import Optional, Tuple, Union

import numpy as np
import ot

from . import densities as dens
from . import geometry
from .exceptions import InputError, NumericalWarning, SolverSizeError
from .models.estimate import SmoothedEstimate
from .models.experiment import DEFAULT_W2_PROTOCOL, W2Protocol
from .models.measure import DiscreteMeasure, SolverKind, TransportResult

logger = logging.getLogger(__name__)

EXACT_BUDGET = 4_000_000


def cost_matrix(a: DiscreteMeasure, b: DiscreteMeasure, mode: str = "geodesic", power: int = 2) -> np.ndarray:
    """``dist(x_i, y_j)^power`` between the supports of ``a`` and ``b``."""
    if a.manifold != b.manifold:
        raise InputError(
            f"Measures live on different manifolds: {a.manifold.spec} vs {b.manifold.spec}"
        )
    if mode not in ("geodesic", "ambient"):
        raise InputError(f"Unknown cost mode {mode!r}; expected 'geodesic' or 'ambient'")
    return geometry.pairwise_distances(a.manifold, a.support, b.support, mode) ** power


def _active(measure: DiscreteMeasure) -> Tuple[np.ndarray, np.ndarray]:
    keep = measure.weights > 0
    return measure.support[keep], measure.weights[keep]


def _exact(a: DiscreteMeasure, b: DiscreteMeasure, mode: str, power: int) -> TransportResult:
    size = a.size * b.size
    if size > EXACT_BUDGET:
        raise SolverSizeError(
            f"Exact transport of {a.size} x {b.size} atoms exceeds the budget of "
            f"{EXACT_BUDGET} cost entries; use w2_entropic instead",
            {"size": size, "budget": EXACT_BUDGET},
        )
    cost = cost_matrix(a, b, mode, power)
    plan, log = ot.emd(a.weights, b.weights, cost, numItermax=1_000_000, log=True)
    residual = float(
        max(
            np.max(np.abs(plan.sum(axis=1) - a.weights)),
            np.max(np.abs(plan.sum(axis=0) - b.weights)),
        )
    )
    converged = log.get("warning") is None
    if not converged:
        logger.warning("Network simplex reported: %s", log.get("warning"))
    return TransportResult(
        cost=max(0.0, float(np.sum(plan * cost))),
        solver=SolverKind.EXACT,
        plan=plan,
        marginal_residual=residual,
        converged=converged,
    )


def w2_exact(a: DiscreteMeasure, b: DiscreteMeasure, cost_mode: str = "geodesic") -> TransportResult:
    """Exact ``W2²`` by network simplex.

    Raises:
        SolverSizeError: If ``|a| * |b|`` exceeds the dense cost budget.
        InputError: On a manifold mismatch.
    """
    return _exact(a, b, cost_mode, 2)


def w1_exact(a: DiscreteMeasure, b: DiscreteMeasure, cost_mode: str = "geodesic") -> TransportResult:
    """Exact ``W1`` (linear cost) by the same solver; ``cost`` holds ``W1``."""
    return _exact(a, b, cost_mode, 1)


def _sinkhorn_cost(
    x: Tuple[np.ndarray, np.ndarray],
    y: Tuple[np.ndarray, np.ndarray],
    manifold: object,
    epsilon: float,
    max_iter: int,
    tol: float,
) -> Tuple[float, float, int]:
    """Sharp cost ``<P_ε, C>`` of the entropic plan, marginal residual, iterations."""
    cost = geometry.pairwise_distances(manifold, x[0], y[0]) ** 2  # type: ignore[arg-type]
    plan, log = ot.sinkhorn(
        x[1], y[1], cost, epsilon, method="sinkhorn_log", numItermax=max_iter, stopThr=tol, log=True, warn=False
    )
    residual = float(
        max(np.max(np.abs(plan.sum(axis=1) - x[1])), np.max(np.abs(plan.sum(axis=0) - y[1])))
    )
    iterations = int(log.get("niter", 10 * len(log.get("err", []))))
    return float(np.sum(plan * cost)), residual, iterations


def w2_entropic(
    a: DiscreteMeasure,
    b: DiscreteMeasure,
    epsilon: Optional[float] = None,
    max_iter: int = 2000,
    tol: float = 1e-9,
) -> TransportResult:
    """Debiased sharp entropic estimate ``C_ε(a, b) - ½ C_ε(a, a) - ½ C_ε(b, b)``.

    ``C_ε(a, b) = <P_ε, D²>`` is the squared-distance cost of the entropic
    plan ``P_ε``, without the entropy term of the regularised objective, so
    this is not the Sinkhorn divergence. The result is clamped at zero.
    Non-convergence is flagged on the result and warned about, not raised.
    """
    if a.manifold != b.manifold:
        raise InputError(
            f"Measures live on different manifolds: {a.manifold.spec} vs {b.manifold.spec}"
        )
    eps = epsilon if epsilon is not None else 0.01 * a.manifold.diameter**2
    if eps <= 0:
        raise InputError(f"epsilon must be positive, got {eps!r}")
    xa, xb = _active(a), _active(b)
    cross, r_ab, n_ab = _sinkhorn_cost(xa, xb, a.manifold, eps, max_iter, tol)
    self_a, r_a, _ = _sinkhorn_cost(xa, xa, a.manifold, eps, max_iter, tol)
    self_b, r_b, _ = _sinkhorn_cost(xb, xb, a.manifold, eps, max_iter, tol)
    residual = max(r_ab, r_a, r_b)
    converged = residual <= max(tol, 1e-6)
    if not converged:
        message = f"Sinkhorn did not converge in {max_iter} iterations (residual {residual:.2e})"
        logger.warning(message)
        warnings.warn(message, NumericalWarning, stacklevel=2)
    return TransportResult(
        cost=max(0.0, cross - 0.5 * self_a - 0.5 * self_b),
        solver=SolverKind.ENTROPIC,
        epsilon=eps,
        marginal_residual=residual,
        converged=converged,
        iterations=n_ab,
    )


def _resample(
    estimate: Union[SmoothedEstimate, DiscreteMeasure], n: int, jitter: bool, rng: np.random.Generator
) -> np.ndarray:
    measure = estimate.measure if isinstance(estimate, SmoothedEstimate) else estimate
    index = rng.choice(measure.size, size=n, p=measure.weights / measure.weights.sum())
    picked = measure.support[index]
    grid = estimate.grid if isinstance(estimate, SmoothedEstimate) else None
    if jitter and grid is not None and grid.is_periodic_product and measure.size > 1:
        step = grid.manifold.size / grid.shape[0]
        picked = geometry.wrap(grid.manifold, picked + rng.uniform(-step / 2, step / 2, picked.shape))
    return picked


def risk_w2(
    estimate: Union[SmoothedEstimate, DiscreteMeasure],
    mu: dens.Density,
    protocol: W2Protocol = DEFAULT_W2_PROTOCOL,
    seed: geometry.SeedLike = None,
) -> float:
    """Mean ``W2²`` between resamples of ``estimate`` and samples of ``mu``.

    This is a biased estimate of ``W2²(estimate, μ)``; the bias depends on
    the protocol only, so log-log slopes in ``T`` are preserved.
    """
    manifold = estimate.grid.manifold if isinstance(estimate, SmoothedEstimate) else estimate.manifold
    if manifold != mu.manifold:
        raise InputError("Estimate and target density live on different manifolds")
    rng = geometry.as_generator(seed)
    total = 0.0
    for _ in range(protocol.repeats):
        est = DiscreteMeasure.uniform(manifold, _resample(estimate, protocol.n_est, protocol.jitter, rng))
        ref = DiscreteMeasure.uniform(manifold, dens.sample_mu(mu, protocol.n_ref, rng))
        if protocol.solver == SolverKind.EXACT:
            result = w2_exact(est, ref)
        else:
            result = w2_entropic(est, ref, protocol.epsilon, protocol.max_iter, protocol.tol)
        total += result.cost
    return total / protocol.repeats
