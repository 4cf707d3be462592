"""Tests for densities, sampling, bump families and KL quadrature."""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from occupation_estimator.densities import (
    SpherePolyDensity,
    TrigDensity,
    UniformDensity,
    kl_quadrature,
    make_bump_family,
    make_density,
    mother_ring,
    mother_step,
    rejection_sample,
    sample_mu,
)
from occupation_estimator.exceptions import InputError
from occupation_estimator.geometry import point, quadrature_grid
from occupation_estimator.models.manifold import Manifold

CIRCLE = Manifold.circle(1.0)
SPHERE = Manifold.sphere(1.0)
TORUS2 = Manifold.torus(2, 1.0)


def _finite_difference_gradient(density, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    d = x.shape[1]
    out = np.zeros_like(x)
    for i in range(d):
        e = np.zeros(d)
        e[i] = step
        out[:, i] = (density.evaluate(x + e) - density.evaluate(x - e)) / (2 * step)
    return out


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------


class TestMakeDensity:
    def test_uniform_level(self) -> None:
        p = make_density(Manifold.circle(2.0), "uniform")
        assert isinstance(p, UniformDensity)
        assert p(point(Manifold.circle(2.0), 0.3)) == pytest.approx(0.5)

    def test_trig_bounds(self) -> None:
        p = make_density(CIRCLE, "trig:a1=0.3")
        assert isinstance(p, TrigDensity)
        assert p.p_min == pytest.approx(0.7)
        assert p.p_max == pytest.approx(1.3)
        assert p.spec == "trig:a1=0.3"

    def test_trig_rejects_large_amplitudes(self) -> None:
        with pytest.raises(InputError, match="Σ\\|a_k\\| < 1"):
            make_density(CIRCLE, "trig:a1=1.2")

    def test_trig_rejects_sphere(self) -> None:
        with pytest.raises(InputError, match="circle or torus"):
            make_density(SPHERE, "trig:a1=0.2")

    def test_sphere_poly_rejects_torus(self) -> None:
        with pytest.raises(InputError, match="needs the sphere"):
            make_density(TORUS2, "sphere_poly:beta=0.5")

    def test_sphere_poly_rejects_large_beta(self) -> None:
        with pytest.raises(InputError, match="\\|beta\\| < 1"):
            make_density(SPHERE, "sphere_poly:beta=1.0")

    def test_evaluation_checks_manifold(self) -> None:
        p = make_density(TORUS2, "uniform")
        with pytest.raises(InputError):
            p(point(CIRCLE, 0.2))

    @pytest.mark.parametrize(
        "manifold, text",
        [
            (CIRCLE, "trig:a1=0.5"),
            (TORUS2, "trig:a(1,2)=0.3,a2=0.2"),
            (SPHERE, "sphere_poly:beta=0.5"),
            (SPHERE, "uniform"),
        ],
    )
    def test_integrates_to_one(self, manifold: Manifold, text: str) -> None:
        grid = quadrature_grid(manifold, 64)
        p = make_density(manifold, text)
        assert grid.integrate(p.evaluate(grid.nodes)) == pytest.approx(1.0, abs=1e-4)

    def test_values_within_bounds(self) -> None:
        grid = quadrature_grid(TORUS2, 32)
        p = make_density(TORUS2, "trig:a(1,1)=0.4,a1=0.3")
        values = p.evaluate(grid.nodes)
        assert values.min() >= p.p_min - 1e-12
        assert values.max() <= p.p_max + 1e-12


# ---------------------------------------------------------------------------
# Gradients
# ---------------------------------------------------------------------------


class TestGradients:
    def test_trig_gradient_matches_finite_differences(self) -> None:
        p = make_density(TORUS2, "trig:a(1,2)=0.3,a1=0.2")
        x = np.random.default_rng(0).uniform(0.0, 1.0, size=(10, 2))
        fd = _finite_difference_gradient(p, x)
        grad = p.gradient(x)
        # flat frame components: (−sin, cos) pairs scaled to unit length
        angle = 2.0 * math.pi * x
        comp = np.stack(
            [
                -np.sin(angle[:, 0]) * grad[:, 0] + np.cos(angle[:, 0]) * grad[:, 1],
                -np.sin(angle[:, 1]) * grad[:, 2] + np.cos(angle[:, 1]) * grad[:, 3],
            ],
            axis=1,
        )
        assert np.allclose(comp, fd, atol=1e-6)

    def test_sphere_poly_gradient_is_tangent(self) -> None:
        p = SpherePolyDensity(SPHERE, 0.5)
        x = np.array([[0.7, 1.1], [2.0, 4.0]])
        grad = p.gradient(x)
        normals = np.column_stack(
            (np.sin(x[:, 0]) * np.cos(x[:, 1]), np.sin(x[:, 0]) * np.sin(x[:, 1]), np.cos(x[:, 0]))
        )
        assert np.allclose(np.sum(grad * normals, axis=1), 0.0, atol=1e-14)
        # |∇z| = sin θ on the unit sphere
        expected = p.normalizer * 0.5 * np.sin(x[:, 0])
        assert np.allclose(np.linalg.norm(grad, axis=1), expected)

    def test_uniform_gradient_vanishes(self) -> None:
        p = make_density(TORUS2, "uniform")
        assert np.all(p.grad_log(np.zeros((3, 2))) == 0.0)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


class TestSampling:
    def test_rejection_acceptance_rate(self) -> None:
        p = make_density(CIRCLE, "trig:a1=0.5")
        samples, rate = rejection_sample(p, 5000, seed=1)
        assert samples.shape == (5000, 1)
        assert rate == pytest.approx(1.0 / 1.5, abs=0.03)

    def test_sample_mean_of_cosine(self) -> None:
        p = make_density(CIRCLE, "trig:a1=0.5")
        x = sample_mu(p, 40000, seed=2)
        # E[cos 2πX] = a / 2
        assert float(np.mean(np.cos(2 * math.pi * x[:, 0]))) == pytest.approx(0.25, abs=0.015)

    def test_sample_is_reproducible(self) -> None:
        p = make_density(SPHERE, "sphere_poly:beta=0.5")
        assert np.array_equal(sample_mu(p, 50, seed=3), sample_mu(p, 50, seed=3))

    def test_rejects_empty_sample(self) -> None:
        with pytest.raises(InputError, match="at least 1"):
            sample_mu(make_density(CIRCLE, "uniform"), 0)


# ---------------------------------------------------------------------------
# Bump families
# ---------------------------------------------------------------------------


class TestBumpFamily:
    def setup_method(self) -> None:
        self.family = make_bump_family(CIRCLE, 0.1, 2, amplitude=0.01)

    def test_mother_profiles(self) -> None:
        assert mother_step(np.array([0.0, 0.1]))[0] == pytest.approx(1.0)
        assert mother_step(np.array([0.4]))[0] == 0.0
        assert mother_ring(np.array([5.0 / 12.0]))[0] == pytest.approx(1.0)
        assert mother_ring(np.array([0.2, 0.6])).tolist() == [0.0, 0.0]

    def test_centres_are_separated(self) -> None:
        assert self.family.size == 5
        gaps = np.diff(np.sort(self.family.centers[:, 0]))
        assert np.all(gaps >= 0.2 - 1e-9)

    def test_bumps_have_zero_mean_and_unit_energy(self) -> None:
        grid = self.family.grid
        phi = self.family.bumps(grid.nodes)
        assert np.allclose(grid.weights @ phi, 0.0, atol=1e-12)
        assert np.allclose(grid.weights @ phi**2, 0.1)

    def test_supports_are_disjoint(self) -> None:
        phi = self.family.bumps(self.family.grid.nodes)
        overlap = (phi != 0.0).sum(axis=1)
        assert overlap.max() <= 1

    def test_members_are_densities(self) -> None:
        grid = self.family.grid
        tau = [1, -1, 1, 1, -1]
        member = self.family.member(tau)
        values = member.evaluate(grid.nodes)
        assert grid.integrate(values) == pytest.approx(1.0, abs=1e-12)
        assert values.min() >= member.p_min - 1e-12
        assert member.p_min > 0

    def test_amplitude_copy_keeps_the_geometry(self) -> None:
        smaller = self.family.model_copy(update={"amplitude": 0.005})
        assert smaller.amplitude == 0.005
        assert smaller.centers is self.family.centers
        assert smaller.kappa == self.family.kappa
        with pytest.raises(ValidationError):
            self.family.amplitude = 0.0  # type: ignore[misc]

    def test_member_gradient_matches_finite_differences(self) -> None:
        member = self.family.member([1, -1, 1, -1, 1])
        x = np.linspace(0.01, 0.99, 37)[:, None]
        fd = _finite_difference_gradient(member, x, step=1e-7)
        grad = member.gradient(x)
        angle = 2 * math.pi * x[:, 0]
        comp = -np.sin(angle) * grad[:, 0] + np.cos(angle) * grad[:, 1]
        assert np.allclose(comp, fd[:, 0], atol=1e-4)

    def test_member_rejects_bad_tau(self) -> None:
        with pytest.raises(InputError, match="signs"):
            self.family.member([1, 0, 1, 1, 1])
        with pytest.raises(InputError, match="signs"):
            self.family.member([1, 1])

    def test_amplitude_bound(self) -> None:
        with pytest.raises(InputError, match="Amplitude must lie"):
            make_bump_family(CIRCLE, 0.1, 2, amplitude=0.02)

    def test_epsilon_too_large(self) -> None:
        with pytest.raises(InputError, match="too large to place two bumps"):
            make_bump_family(CIRCLE, 0.6, 2, amplitude=0.0)

    def test_seeded_translation_keeps_lattice(self) -> None:
        family = make_bump_family(TORUS2, 0.25, 2, amplitude=0.01, seed=4)
        assert family.size == 4


# ---------------------------------------------------------------------------
# Path-space KL
# ---------------------------------------------------------------------------


class TestKLQuadrature:
    def setup_method(self) -> None:
        self.p = make_density(CIRCLE, "trig:a1=0.3")
        self.q = make_density(CIRCLE, "uniform")

    def test_p_weighting(self) -> None:
        assert kl_quadrature(self.p, self.q, 1.0, "p") == pytest.approx(0.45460, abs=1e-4)

    def test_p_squared_weighting(self) -> None:
        assert kl_quadrature(self.p, self.q, 1.0, "p_squared") == pytest.approx(0.44413, abs=1e-4)

    def test_linear_in_horizon(self) -> None:
        one = kl_quadrature(self.p, self.q, 1.0)
        assert kl_quadrature(self.p, self.q, 10.0) == pytest.approx(10.0 * one)

    def test_vanishes_for_identical_densities(self) -> None:
        assert kl_quadrature(self.p, self.p, 5.0) == 0.0

    def test_manifold_mismatch(self) -> None:
        with pytest.raises(InputError, match="different manifolds"):
            kl_quadrature(self.p, make_density(TORUS2, "uniform"), 1.0)

    def test_unknown_weight_mode(self) -> None:
        with pytest.raises(InputError, match="weight_mode"):
            kl_quadrature(self.p, self.q, 1.0, "q")
