"""Tests for spec-string parsing."""

import pytest

from occupation_estimator.exceptions import InputError
from occupation_estimator.models.manifold import Manifold, ManifoldKind
from occupation_estimator.specs import (
    DensityFamily,
    GeneratorKind,
    KernelFamily,
    parse_density,
    parse_generator,
    parse_kernel,
    parse_manifold,
)

# ---------------------------------------------------------------------------
# Manifolds
# ---------------------------------------------------------------------------


class TestParseManifold:
    def test_circle(self) -> None:
        m = parse_manifold("circle:c=2")
        assert m.kind == ManifoldKind.CIRCLE
        assert m.size == 2.0
        assert m.total_volume == pytest.approx(2.0)

    def test_circle_default_circumference(self) -> None:
        assert parse_manifold("circle") == Manifold.circle(1.0)

    def test_sphere(self) -> None:
        m = parse_manifold("sphere:r=1")
        assert m.intrinsic_dim == 2
        assert m.ambient_dim == 3

    def test_torus(self) -> None:
        m = parse_manifold("torus:d=5,s=1")
        assert m.dimension == 5
        assert m.ambient_dim == 10
        assert m.spec == "torus:d=5,s=1"

    def test_spec_round_trip(self) -> None:
        for text in ("circle:c=1", "sphere:r=2", "torus:d=3,s=0.5"):
            assert parse_manifold(text).spec == text

    def test_case_and_whitespace_are_ignored(self) -> None:
        assert parse_manifold("  Torus:d=2,s=1 ") == Manifold.torus(2)

    def test_zero_dimension_rejected(self) -> None:
        with pytest.raises(InputError, match="Invalid manifold spec"):
            parse_manifold("torus:d=0")

    def test_unknown_family(self) -> None:
        with pytest.raises(InputError, match="Unknown manifold"):
            parse_manifold("klein:s=1")

    def test_unknown_key(self) -> None:
        with pytest.raises(InputError, match="Unknown keys"):
            parse_manifold("circle:r=1")

    def test_missing_value(self) -> None:
        with pytest.raises(InputError, match="expected key=value"):
            parse_manifold("circle:c=")

    def test_non_numeric_value(self) -> None:
        with pytest.raises(InputError, match="Invalid number"):
            parse_manifold("circle:c=abc")


# ---------------------------------------------------------------------------
# Densities
# ---------------------------------------------------------------------------


class TestParseDensity:
    def test_uniform(self) -> None:
        spec = parse_density("uniform")
        assert spec.family == DensityFamily.UNIFORM
        assert spec.terms == ()
        assert spec.text == "uniform"

    def test_single_mode(self) -> None:
        spec = parse_density("trig:a1=0.5", dimension=2)
        assert spec.family == DensityFamily.TRIG
        assert len(spec.terms) == 1
        assert spec.terms[0].k == (1, 0)
        assert spec.terms[0].a == 0.5

    def test_amplitude_tuple(self) -> None:
        spec = parse_density("trig:a=(0.3,0.1)")
        assert [t.k for t in spec.terms] == [(1,), (2,)]
        assert [t.a for t in spec.terms] == [0.3, 0.1]

    def test_explicit_mode_vector(self) -> None:
        spec = parse_density("trig:a(1,2)=0.2", dimension=2)
        assert spec.terms[0].k == (1, 2)
        assert spec.text == "trig:a(1,2)=0.2"

    def test_mode_vector_dimension_mismatch(self) -> None:
        with pytest.raises(InputError, match="does not have 3 components"):
            parse_density("trig:a(1,2)=0.2", dimension=3)

    def test_sobolev_order(self) -> None:
        assert parse_density("trig:a1=0.2,ell=3").sobolev_order == 3
        assert parse_density("uniform").sobolev_order == 2

    def test_sphere_poly(self) -> None:
        spec = parse_density("sphere_poly:beta=0.5", dimension=2)
        assert spec.family == DensityFamily.SPHERE_POLY
        assert spec.beta == 0.5

    def test_trig_without_modes(self) -> None:
        with pytest.raises(InputError, match="has no modes"):
            parse_density("trig")

    def test_unknown_trig_key(self) -> None:
        with pytest.raises(InputError, match="Unknown trig key"):
            parse_density("trig:b1=0.2")

    def test_unbalanced_parentheses(self) -> None:
        with pytest.raises(InputError, match="unbalanced"):
            parse_density("trig:a=(0.3,0.1")

    def test_unknown_family(self) -> None:
        with pytest.raises(InputError, match="Unknown density"):
            parse_density("gaussian:sigma=1")


# ---------------------------------------------------------------------------
# Kernels and generators
# ---------------------------------------------------------------------------


class TestParseKernel:
    @pytest.mark.parametrize(
        "text, family, order",
        [
            ("triangular", KernelFamily.TRIANGULAR, 2),
            ("epanechnikov", KernelFamily.EPANECHNIKOV, 2),
            ("poly:r=4", KernelFamily.POLY, 4),
            ("poly:r=6", KernelFamily.POLY, 6),
        ],
    )
    def test_known_kernels(self, text: str, family: KernelFamily, order: int) -> None:
        spec = parse_kernel(text)
        assert spec.family == family
        assert spec.order == order
        assert spec.text == text

    @pytest.mark.parametrize("text", ["poly:r=3", "poly:r=0", "poly:r=10"])
    def test_invalid_orders(self, text: str) -> None:
        with pytest.raises(InputError, match="Kernel order must be even"):
            parse_kernel(text)

    def test_unknown_kernel(self) -> None:
        with pytest.raises(InputError, match="Unknown kernel"):
            parse_kernel("gaussian")


class TestParseGenerator:
    def test_langevin(self) -> None:
        gen = parse_generator("langevin")
        assert gen.kind == GeneratorKind.LANGEVIN
        assert gen.q is None

    def test_apq_with_density(self) -> None:
        gen = parse_generator("apq:trig:a1=0.2", dimension=2)
        assert gen.kind == GeneratorKind.APQ
        assert gen.q is not None
        assert gen.q.terms[0].k == (1, 0)

    def test_apq_defaults_to_uniform(self) -> None:
        gen = parse_generator("apq")
        assert gen.q is not None
        assert gen.q.family == DensityFamily.UNIFORM

    def test_unknown_generator(self) -> None:
        with pytest.raises(InputError, match="Unknown generator"):
            parse_generator("brownian")
