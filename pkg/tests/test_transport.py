"""Tests for exact and entropic Wasserstein distances."""

import itertools
from unittest.mock import patch

import numpy as np
import pytest

from occupation_estimator.densities import make_density
from occupation_estimator.exceptions import InputError, NumericalWarning, SolverSizeError
from occupation_estimator.geometry import quadrature_grid
from occupation_estimator.kernels import NormalizedKernel, make_profile
from occupation_estimator.estimator import smooth
from occupation_estimator.models.experiment import W2Protocol
from occupation_estimator.models.manifold import Manifold
from occupation_estimator.models.measure import DiscreteMeasure, SolverKind
from occupation_estimator.transport import cost_matrix, risk_w2, w1_exact, w2_entropic, w2_exact

CIRCLE = Manifold.circle(1.0)
TORUS2 = Manifold.torus(2, 1.0)


def _lattice(shift: float = 0.0, n: int = 10) -> DiscreteMeasure:
    return DiscreteMeasure.uniform(CIRCLE, (np.arange(n) / n + shift)[:, None] % 1.0)


# ---------------------------------------------------------------------------
# Exact solver
# ---------------------------------------------------------------------------


class TestExact:
    def test_two_diracs(self) -> None:
        a = DiscreteMeasure.dirac(CIRCLE, [0.1])
        b = DiscreteMeasure.dirac(CIRCLE, [0.3])
        assert w2_exact(a, b).cost == pytest.approx(0.04)
        assert w1_exact(a, b).cost == pytest.approx(0.2)

    def test_distance_wraps_around(self) -> None:
        a = DiscreteMeasure.dirac(CIRCLE, [0.05])
        b = DiscreteMeasure.dirac(CIRCLE, [0.95])
        assert w2_exact(a, b).cost == pytest.approx(0.01)

    def test_shifted_lattice(self) -> None:
        result = w2_exact(_lattice(), _lattice(0.03))
        assert result.cost == pytest.approx(0.0009)
        assert result.solver == SolverKind.EXACT
        assert result.converged
        assert result.marginal_residual < 1e-12
        assert result.plan is not None and result.plan.shape == (10, 10)

    def test_identical_measures(self) -> None:
        assert w2_exact(_lattice(), _lattice()).cost == pytest.approx(0.0, abs=1e-15)

    def test_ambient_cost(self) -> None:
        a = DiscreteMeasure.dirac(CIRCLE, [0.0])
        b = DiscreteMeasure.dirac(CIRCLE, [0.5])
        assert w2_exact(a, b, "ambient").cost == pytest.approx((1.0 / np.pi) ** 2)

    def test_torus_cost_matrix(self) -> None:
        a = DiscreteMeasure.dirac(TORUS2, [0.1, 0.1])
        b = DiscreteMeasure.dirac(TORUS2, [0.9, 0.4])
        assert cost_matrix(a, b)[0, 0] == pytest.approx(0.04 + 0.09)

    def test_manifold_mismatch(self) -> None:
        with pytest.raises(InputError, match="different manifolds"):
            w2_exact(_lattice(), DiscreteMeasure.dirac(TORUS2, [0.1, 0.1]))

    def test_unknown_cost_mode(self) -> None:
        with pytest.raises(InputError, match="Unknown cost mode"):
            cost_matrix(_lattice(), _lattice(), mode="chordal")

    @pytest.mark.parametrize("manifold,n", [(CIRCLE, 4), (TORUS2, 3), (TORUS2, 4)])
    def test_uniform_instances_match_best_permutation(self, manifold: Manifold, n: int) -> None:
        rng = np.random.default_rng(12)
        for _ in range(5):
            a = DiscreteMeasure.uniform(manifold, rng.uniform(0.0, 1.0, (n, manifold.intrinsic_dim)))
            b = DiscreteMeasure.uniform(manifold, rng.uniform(0.0, 1.0, (n, manifold.intrinsic_dim)))
            cost = cost_matrix(a, b)
            best = min(
                np.mean(cost[np.arange(n), list(perm)]) for perm in itertools.permutations(range(n))
            )
            assert w2_exact(a, b).cost == pytest.approx(best, abs=1e-9)

    def test_w2_dominates_w1(self) -> None:
        rng = np.random.default_rng(13)
        for _ in range(10):
            a = DiscreteMeasure.normalized(TORUS2, rng.uniform(0.0, 1.0, (15, 2)), rng.uniform(0.1, 1.0, 15))
            b = DiscreteMeasure.normalized(TORUS2, rng.uniform(0.0, 1.0, (12, 2)), rng.uniform(0.1, 1.0, 12))
            assert np.sqrt(w2_exact(a, b).cost) >= w1_exact(a, b).cost - 1e-12

    def test_triangle_inequality(self) -> None:
        rng = np.random.default_rng(14)
        for _ in range(10):
            a, b, c = (
                DiscreteMeasure.normalized(CIRCLE, rng.uniform(0.0, 1.0, (n, 1)), rng.uniform(0.1, 1.0, n))
                for n in (8, 11, 6)
            )
            ab, bc, ac = (np.sqrt(w2_exact(x, y).cost) for x, y in ((a, b), (b, c), (a, c)))
            assert ac <= ab + bc + 1e-9

    def test_size_budget(self) -> None:
        with patch("occupation_estimator.transport.EXACT_BUDGET", 50):
            with pytest.raises(SolverSizeError) as exc_info:
                w2_exact(_lattice(), _lattice(0.01))
        assert exc_info.value.details["size"] == 100
        assert "w2_entropic" in str(exc_info.value)


# ---------------------------------------------------------------------------
# Entropic solver
# ---------------------------------------------------------------------------


class TestEntropic:
    def test_debiased_self_distance_is_zero(self) -> None:
        result = w2_entropic(_lattice(), _lattice(), epsilon=1e-3)
        assert result.cost == pytest.approx(0.0, abs=1e-12)
        assert result.solver == SolverKind.ENTROPIC

    def test_matches_exact_for_small_epsilon(self) -> None:
        result = w2_entropic(_lattice(), _lattice(0.03), epsilon=1e-4)
        assert result.cost == pytest.approx(0.0009, abs=1e-6)
        assert result.converged
        assert result.epsilon == 1e-4

    def test_default_epsilon(self) -> None:
        result = w2_entropic(_lattice(), _lattice(0.03))
        assert result.epsilon == pytest.approx(0.01 * CIRCLE.diameter**2)

    def test_zero_weight_atoms_are_dropped(self) -> None:
        a = DiscreteMeasure(manifold=CIRCLE, support=[[0.1], [0.6]], weights=[1.0, 0.0])
        b = DiscreteMeasure.dirac(CIRCLE, [0.3])
        assert w2_entropic(a, b, epsilon=1e-3).cost == pytest.approx(0.04)

    def test_non_convergence_warns(self) -> None:
        rng = np.random.default_rng(0)
        a = DiscreteMeasure.uniform(CIRCLE, rng.uniform(0.0, 1.0, (30, 1)))
        b = DiscreteMeasure.uniform(CIRCLE, rng.uniform(0.0, 1.0, (30, 1)))
        with pytest.warns(NumericalWarning, match="did not converge"):
            result = w2_entropic(a, b, epsilon=1e-3, max_iter=1)
        assert not result.converged

    def test_debiases_cross_cost_by_self_costs(self) -> None:
        costs = [(0.5, 0.0, 10), (0.1, 0.0, 10), (0.2, 0.0, 10)]
        with patch("occupation_estimator.transport._sinkhorn_cost", side_effect=costs) as sinkhorn:
            result = w2_entropic(_lattice(), _lattice(0.2), epsilon=1e-2)
        assert sinkhorn.call_count == 3
        assert result.cost == pytest.approx(0.5 - 0.05 - 0.1)
        assert result.iterations == 10

    def test_agrees_with_exact_on_translated_clusters(self) -> None:
        rng = np.random.default_rng(15)
        for _ in range(5):
            cluster = rng.uniform(0.0, 0.2, (50, 2))
            shift = np.array([rng.uniform(0.25, 0.3), rng.uniform(0.0, 0.1)])
            a = DiscreteMeasure.uniform(TORUS2, cluster)
            b = DiscreteMeasure.uniform(TORUS2, cluster + shift)
            exact = w2_exact(a, b).cost
            assert exact == pytest.approx(float(shift @ shift), rel=1e-9)
            entropic = w2_entropic(a, b, max_iter=10_000)
            assert entropic.epsilon == pytest.approx(0.01 * TORUS2.diameter**2)
            assert entropic.cost == pytest.approx(exact, rel=0.05)

    def test_rejects_non_positive_epsilon(self) -> None:
        with pytest.raises(InputError, match="epsilon must be positive"):
            w2_entropic(_lattice(), _lattice(), epsilon=0.0)


# ---------------------------------------------------------------------------
# Sampled risk
# ---------------------------------------------------------------------------


class TestRiskW2:
    def setup_method(self) -> None:
        self.uniform = make_density(CIRCLE, "uniform")

    def test_dirac_against_uniform(self) -> None:
        protocol = W2Protocol(n_ref=800, n_est=50)
        risk = risk_w2(DiscreteMeasure.dirac(CIRCLE, [0.2]), self.uniform, protocol, seed=1)
        # ∫ d(x, 0)² dx = 1/12 on the unit circle
        assert risk == pytest.approx(1.0 / 12.0, rel=0.1)

    def test_reproducible(self) -> None:
        protocol = W2Protocol(n_ref=100, n_est=100)
        measure = _lattice()
        assert risk_w2(measure, self.uniform, protocol, seed=3) == risk_w2(measure, self.uniform, protocol, seed=3)

    def test_entropic_protocol(self) -> None:
        protocol = W2Protocol(n_ref=100, n_est=100, solver="entropic", epsilon=1e-3, repeats=2)
        risk = risk_w2(_lattice(n=100), self.uniform, protocol, seed=4)
        assert 0.0 <= risk < 0.01

    def test_smoothed_estimate_resampling(self) -> None:
        grid = quadrature_grid(CIRCLE, 128)
        nk = NormalizedKernel(CIRCLE, make_profile("triangular", 1), 0.5, "geodesic")
        estimate = smooth(_lattice(n=128), nk, grid)
        risk = risk_w2(estimate, self.uniform, W2Protocol(n_ref=200, n_est=200), seed=5)
        assert risk < 0.01

    def test_manifold_mismatch(self) -> None:
        with pytest.raises(InputError, match="different manifolds"):
            risk_w2(_lattice(), make_density(TORUS2, "uniform"))
