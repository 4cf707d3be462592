"""Tests for manifold geometry: embeddings, distances, maps and grids."""

import math

import numpy as np
import pytest

from occupation_estimator.exceptions import InputError
from occupation_estimator.geometry import (
    ambient_distance,
    chart,
    default_resolution,
    embed,
    exp_map,
    exp_map_batch,
    geodesic_distance,
    log_map,
    log_map_batch,
    pairwise_distances,
    point,
    point_from_ambient,
    project,
    quadrature_grid,
    reference_grid,
    sample_volume,
    tangent_projection,
    validate_point,
    wrap,
)
from occupation_estimator.models.manifold import Manifold, ManifoldPoint

CIRCLE = Manifold.circle(1.0)
SPHERE = Manifold.sphere(1.0)
TORUS2 = Manifold.torus(2, 1.0)


# ---------------------------------------------------------------------------
# Points and embeddings
# ---------------------------------------------------------------------------


class TestPoints:
    def test_circle_point_is_wrapped(self) -> None:
        p = point(CIRCLE, 1.25)
        assert p.intrinsic[0] == pytest.approx(0.25)
        assert np.linalg.norm(p.ambient_array()) == pytest.approx(1.0 / (2.0 * math.pi))

    def test_embed_chart_inverse_on_torus(self) -> None:
        rng = np.random.default_rng(0)
        x = rng.uniform(0.0, 1.0, size=(50, 2))
        assert np.allclose(chart(TORUS2, embed(TORUS2, x)), x, atol=1e-12)

    def test_embed_chart_inverse_on_sphere(self) -> None:
        x = np.array([[0.3, 1.0], [2.0, 5.5], [math.pi / 2, 0.1]])
        assert np.allclose(chart(SPHERE, embed(SPHERE, x)), x, atol=1e-12)

    def test_sphere_embedding_has_radius(self) -> None:
        sphere = Manifold.sphere(2.0)
        y = embed(sphere, np.array([[1.0, 2.0]]))
        assert np.linalg.norm(y) == pytest.approx(2.0)

    def test_wrap_negative_coordinates(self) -> None:
        out = wrap(TORUS2, np.array([[-0.25, 1.5]]))
        assert np.allclose(out, [[0.75, 0.5]])

    def test_point_from_ambient(self) -> None:
        p = point_from_ambient(SPHERE, [0.0, 0.0, 1.0])
        assert p.intrinsic[0] == pytest.approx(0.0)

    def test_point_from_ambient_off_manifold(self) -> None:
        with pytest.raises(InputError, match="does not lie on"):
            point_from_ambient(SPHERE, [0.0, 0.0, 2.0])

    def test_validate_point_wrong_manifold(self) -> None:
        with pytest.raises(InputError, match="does not belong"):
            validate_point(TORUS2, point(CIRCLE, 0.1))

    def test_validate_point_inconsistent_ambient(self) -> None:
        bogus = ManifoldPoint(intrinsic=(0.1,), ambient=(1.0, 0.0))
        with pytest.raises(InputError, match="do not match the embedding"):
            validate_point(CIRCLE, bogus)

    def test_bad_batch_shape(self) -> None:
        with pytest.raises(InputError, match="coordinates per row"):
            embed(TORUS2, np.zeros((3, 3)))


# ---------------------------------------------------------------------------
# Distances
# ---------------------------------------------------------------------------


class TestDistances:
    def test_circle_geodesic_wraps(self) -> None:
        assert geodesic_distance(CIRCLE, point(CIRCLE, 0.05), point(CIRCLE, 0.95)) == pytest.approx(0.1)

    def test_circle_ambient_is_chord(self) -> None:
        d = ambient_distance(CIRCLE, point(CIRCLE, 0.0), point(CIRCLE, 0.5))
        assert d == pytest.approx(1.0 / math.pi)

    def test_sphere_quarter_arc(self) -> None:
        north = point(SPHERE, [0.0, 0.0])
        equator = point(SPHERE, [math.pi / 2, 0.0])
        assert geodesic_distance(SPHERE, north, equator) == pytest.approx(math.pi / 2)
        assert ambient_distance(SPHERE, north, equator) == pytest.approx(math.sqrt(2.0))

    def test_pairwise_matches_single(self) -> None:
        x = sample_volume(SPHERE, 6, seed=1)
        y = sample_volume(SPHERE, 4, seed=2)
        matrix = pairwise_distances(SPHERE, x, y)
        assert matrix.shape == (6, 4)
        for i in range(6):
            for j in range(4):
                expected = geodesic_distance(SPHERE, point(SPHERE, x[i]), point(SPHERE, y[j]))
                assert matrix[i, j] == pytest.approx(expected, abs=1e-10)

    @pytest.mark.parametrize("manifold", [CIRCLE, TORUS2, SPHERE])
    def test_ambient_never_exceeds_geodesic(self, manifold: Manifold) -> None:
        x = sample_volume(manifold, 20, seed=3)
        geo = pairwise_distances(manifold, x, x, mode="geodesic")
        amb = pairwise_distances(manifold, x, x, mode="ambient")
        assert np.all(amb <= geo + 1e-12)
        assert np.all(geo <= math.pi / 2 * amb + 1e-12)

    @pytest.mark.parametrize("manifold", [CIRCLE, TORUS2, SPHERE, Manifold.torus(5, 1.0)])
    def test_geodesic_triangle_inequality(self, manifold: Manifold) -> None:
        x = sample_volume(manifold, 40, seed=6)
        d = pairwise_distances(manifold, x, x)
        # d[i, k] <= d[i, j] + d[j, k] for every triple
        assert np.all(d[:, None, :] <= d[:, :, None] + d[None, :, :] + 1e-12)

    def test_torus_diameter_bounds_distances(self) -> None:
        x = sample_volume(TORUS2, 30, seed=4)
        assert np.max(pairwise_distances(TORUS2, x, x)) <= TORUS2.diameter + 1e-12


# ---------------------------------------------------------------------------
# Tangent spaces and exponential maps
# ---------------------------------------------------------------------------


class TestMaps:
    def test_projection_is_idempotent(self) -> None:
        x = point(SPHERE, [1.0, 2.0])
        proj = tangent_projection(SPHERE, x)
        assert np.allclose(proj @ proj, proj)
        assert np.allclose(proj @ x.ambient_array(), 0.0)

    def test_exp_rejects_normal_vector(self) -> None:
        x = point(SPHERE, [1.0, 2.0])
        with pytest.raises(InputError, match="not tangent"):
            exp_map(SPHERE, x, x.ambient_array())

    def test_exp_of_zero_is_identity(self) -> None:
        x = point(TORUS2, [0.2, 0.7])
        moved = exp_map(TORUS2, x, np.zeros(4))
        assert np.allclose(moved.intrinsic, x.intrinsic)

    def test_circle_exp_moves_by_arc_length(self) -> None:
        x = point(CIRCLE, 0.9)
        v = project(CIRCLE, x.intrinsic_array()[None, :], np.array([[0.0, 1.0]]))
        v = 0.2 * v / np.linalg.norm(v)
        moved = exp_map(CIRCLE, x, v[0])
        assert moved.intrinsic[0] == pytest.approx(0.1)

    @pytest.mark.parametrize("manifold", [CIRCLE, TORUS2, SPHERE])
    def test_exp_inverts_log(self, manifold: Manifold) -> None:
        x = sample_volume(manifold, 25, seed=5)
        y = sample_volume(manifold, 25, seed=6)
        v = log_map_batch(manifold, x, y)
        back = exp_map_batch(manifold, x, v)
        gap = pairwise_distances(manifold, back, y).diagonal()
        assert np.max(gap) < 1e-9

    def test_log_length_is_distance(self) -> None:
        x, y = point(SPHERE, [0.4, 0.3]), point(SPHERE, [2.0, 4.0])
        assert np.linalg.norm(log_map(SPHERE, x, y)) == pytest.approx(geodesic_distance(SPHERE, x, y))

    def test_log_at_antipode_is_tangent(self) -> None:
        north, south = point(SPHERE, [0.0, 0.0]), point(SPHERE, [math.pi, 0.0])
        v = log_map(SPHERE, north, south)
        assert np.linalg.norm(v) == pytest.approx(math.pi)
        assert abs(float(np.dot(v, north.ambient_array()))) < 1e-12


# ---------------------------------------------------------------------------
# Sampling and quadrature
# ---------------------------------------------------------------------------


class TestGrids:
    def test_sample_volume_is_reproducible(self) -> None:
        assert np.array_equal(sample_volume(TORUS2, 10, seed=9), sample_volume(TORUS2, 10, seed=9))

    def test_sample_volume_rejects_empty(self) -> None:
        with pytest.raises(InputError, match="at least 1"):
            sample_volume(CIRCLE, 0)

    def test_sphere_samples_are_uniform_in_cos_theta(self) -> None:
        x = sample_volume(SPHERE, 20000, seed=11)
        assert float(np.mean(np.cos(x[:, 0]))) == pytest.approx(0.0, abs=0.03)

    @pytest.mark.parametrize("manifold", [CIRCLE, TORUS2, SPHERE, Manifold.sphere(2.0)])
    def test_weights_sum_to_volume(self, manifold: Manifold) -> None:
        grid = quadrature_grid(manifold, 16)
        assert grid.weights.sum() == pytest.approx(manifold.total_volume)

    def test_sphere_quadrature_integrates_cos_squared(self) -> None:
        grid = quadrature_grid(SPHERE, 128)
        value = grid.integrate(np.cos(grid.nodes[:, 0]) ** 2)
        assert value == pytest.approx(4.0 * math.pi / 3.0, rel=1e-3)

    def test_torus_grid_layout(self) -> None:
        grid = quadrature_grid(TORUS2, 8)
        assert grid.shape == (8, 8)
        assert grid.nodes.shape == (64, 2)
        assert grid.resolution == 8

    def test_resolution_too_small(self) -> None:
        with pytest.raises(InputError, match="at least 2"):
            quadrature_grid(CIRCLE, 1)

    def test_reference_grid_defaults(self) -> None:
        assert default_resolution(CIRCLE) == 1024
        assert default_resolution(Manifold.torus(5)) == 12
        assert reference_grid(TORUS2).shape == (128, 128)
