"""Parsers for the spec strings used in config files and on the command line.

Each spec has the form ``family`` or ``family:key=value,key=value``::

    circle:c=1          sphere:r=1          torus:d=5,s=1
    uniform             trig:a1=0.5         trig:a=(0.3,0.1)
    sphere_poly:beta=0.5
    triangular          epanechnikov        poly:r=4
    langevin            apq:trig:a1=0.2

Values in parentheses may contain commas.
"""

import re
from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

from .exceptions import InputError
from .models.manifold import Manifold

_FAMILY_RE = re.compile(r"^\s*([a-z_]+)\s*(?::(.*))?$")
_A_KEY_RE = re.compile(r"^a(\d+)$")
_TUPLE_RE = re.compile(r"^\(\s*([^()]*)\s*\)$")


class TrigTerm(BaseModel):
    """One cosine mode ``a * cos(2π <k, x> / s)``."""

    model_config = ConfigDict(frozen=True)

    k: Tuple[int, ...]
    a: float


class DensityFamily(str, Enum):
    UNIFORM = "uniform"
    TRIG = "trig"
    SPHERE_POLY = "sphere_poly"


class DensitySpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    family: DensityFamily
    terms: Tuple[TrigTerm, ...] = ()
    beta: float = 0.0
    sobolev_order: int = Field(default=2, ge=0)

    @property
    def text(self) -> str:
        if self.family == DensityFamily.UNIFORM:
            return "uniform"
        if self.family == DensityFamily.SPHERE_POLY:
            return f"sphere_poly:beta={self.beta:g}"
        parts = []
        for term in self.terms:
            if all(kk == 0 for kk in term.k[1:]):
                parts.append(f"a{term.k[0]}={term.a:g}")
            else:
                parts.append(f"a{term.k}={term.a:g}".replace(" ", ""))
        return "trig:" + ",".join(parts)


class KernelFamily(str, Enum):
    TRIANGULAR = "triangular"
    EPANECHNIKOV = "epanechnikov"
    POLY = "poly"


class KernelSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    family: KernelFamily
    order: int = Field(default=2, ge=0, le=8)

    @property
    def text(self) -> str:
        if self.family == KernelFamily.POLY:
            return f"poly:r={self.order}"
        return self.family.value


class GeneratorKind(str, Enum):
    LANGEVIN = "langevin"
    APQ = "apq"


class GeneratorText(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: GeneratorKind
    q: Optional[DensitySpec] = None


def _split_top_level(body: str) -> List[str]:
    """Split on commas that are not inside parentheses."""
    parts: List[str] = []
    depth = 0
    current = ""
    for char in body:
        if char == "(":
            depth += 1
        elif char == ")":
            depth -= 1
            if depth < 0:
                raise ValueError("unbalanced parentheses")
        if char == "," and depth == 0:
            parts.append(current)
            current = ""
        else:
            current += char
    if depth != 0:
        raise ValueError("unbalanced parentheses")
    if current.strip():
        parts.append(current)
    return [part.strip() for part in parts]


def _parse_family(text: str, kind: str) -> Tuple[str, Dict[str, str]]:
    match = _FAMILY_RE.match(text.strip().lower())
    if not match:
        raise InputError(f"Invalid {kind} spec: {text!r}", {"spec": text})
    family, body = match.groups()
    params: Dict[str, str] = {}
    if body:
        try:
            items = _split_top_level(body)
        except ValueError as exc:
            raise InputError(f"Invalid {kind} spec {text!r}: {exc}", {"spec": text})
        for item in items:
            key, sep, value = item.partition("=")
            if not sep or not key.strip() or not value.strip():
                raise InputError(
                    f"Invalid {kind} spec {text!r}: expected key=value, got {item!r}",
                    {"spec": text},
                )
            params[key.strip()] = value.strip()
    return family, params


def _number(value: str, spec: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise InputError(f"Invalid number {value!r} in spec {spec!r}", {"spec": spec})


def _int_tuple(value: str, spec: str) -> Tuple[int, ...]:
    match = _TUPLE_RE.match(value)
    if not match:
        raise InputError(f"Expected a tuple in spec {spec!r}, got {value!r}", {"spec": spec})
    try:
        return tuple(int(item) for item in match.group(1).split(",") if item.strip())
    except ValueError:
        raise InputError(f"Expected integers in {value!r} of spec {spec!r}", {"spec": spec})


def _float_tuple(value: str, spec: str) -> Tuple[float, ...]:
    match = _TUPLE_RE.match(value)
    if not match:
        return (_number(value, spec),)
    return tuple(_number(item, spec) for item in match.group(1).split(",") if item.strip())


def parse_manifold(text: str) -> Manifold:
    """Parse ``circle:c=1``, ``sphere:r=1`` or ``torus:d=5,s=1``."""
    family, params = _parse_family(text, "manifold")
    try:
        if family == "circle":
            _expect_keys(params, {"c"}, text)
            return Manifold.circle(_number(params.get("c", "1"), text))
        if family == "sphere":
            _expect_keys(params, {"r"}, text)
            return Manifold.sphere(_number(params.get("r", "1"), text))
        if family == "torus":
            _expect_keys(params, {"d", "s"}, text)
            dimension = int(_number(params.get("d", "2"), text))
            return Manifold.torus(dimension, _number(params.get("s", "1"), text))
    except ValueError as exc:
        raise InputError(f"Invalid manifold spec {text!r}: {exc}", {"spec": text})
    raise InputError(
        f"Unknown manifold {family!r} in {text!r}; expected circle, sphere or torus",
        {"spec": text},
    )


def parse_density(text: str, dimension: int = 1) -> DensitySpec:
    """Parse a density spec; trig modes ``aj`` oscillate along the first axis."""
    family, params = _parse_family(text, "density")
    ell = int(_number(params.pop("ell", "2"), text))
    if family == "uniform":
        _expect_keys(params, set(), text)
        return DensitySpec(family=DensityFamily.UNIFORM, sobolev_order=ell)
    if family == "sphere_poly":
        _expect_keys(params, {"beta"}, text)
        beta = _number(params.get("beta", "0"), text)
        return DensitySpec(family=DensityFamily.SPHERE_POLY, beta=beta, sobolev_order=ell)
    if family == "trig":
        terms: List[TrigTerm] = []
        for key, value in params.items():
            if key == "a":
                for j, amplitude in enumerate(_float_tuple(value, text), start=1):
                    terms.append(TrigTerm(k=_axis_mode(j, dimension), a=amplitude))
                continue
            match = _A_KEY_RE.match(key)
            if match:
                frequency = int(match.group(1))
                terms.append(TrigTerm(k=_axis_mode(frequency, dimension), a=_number(value, text)))
                continue
            if key.startswith("a(") and key.endswith(")"):
                k = _int_tuple(key[1:], text)
                if len(k) != dimension:
                    raise InputError(
                        f"Mode {k} in {text!r} does not have {dimension} components",
                        {"spec": text},
                    )
                terms.append(TrigTerm(k=k, a=_number(value, text)))
                continue
            raise InputError(f"Unknown trig key {key!r} in {text!r}", {"spec": text})
        if not terms:
            raise InputError(f"Trig spec {text!r} has no modes", {"spec": text})
        return DensitySpec(family=DensityFamily.TRIG, terms=tuple(terms), sobolev_order=ell)
    raise InputError(
        f"Unknown density {family!r} in {text!r}; expected uniform, trig or sphere_poly",
        {"spec": text},
    )


def parse_kernel(text: str) -> KernelSpec:
    """Parse ``triangular``, ``epanechnikov`` or ``poly:r=<even order>``."""
    family, params = _parse_family(text, "kernel")
    if family == "triangular":
        _expect_keys(params, set(), text)
        return KernelSpec(family=KernelFamily.TRIANGULAR, order=2)
    if family in ("epanechnikov", "epanechnikov_like"):
        _expect_keys(params, set(), text)
        return KernelSpec(family=KernelFamily.EPANECHNIKOV, order=2)
    if family == "poly":
        _expect_keys(params, {"r"}, text)
        order = int(_number(params.get("r", "2"), text))
        if order < 2 or order > 8 or order % 2:
            raise InputError(
                f"Kernel order must be even and in [2, 8]; got {order} in {text!r}",
                {"spec": text},
            )
        return KernelSpec(family=KernelFamily.POLY, order=order)
    raise InputError(
        f"Unknown kernel {family!r} in {text!r}; expected triangular, epanechnikov or poly",
        {"spec": text},
    )


def parse_generator(text: str, dimension: int = 1) -> GeneratorText:
    """Parse ``langevin`` or ``apq:<q density spec>``."""
    cleaned = text.strip().lower()
    if cleaned == "langevin":
        return GeneratorText(kind=GeneratorKind.LANGEVIN)
    if cleaned.startswith("apq"):
        _, _, q_text = cleaned.partition(":")
        q = parse_density(q_text or "uniform", dimension)
        return GeneratorText(kind=GeneratorKind.APQ, q=q)
    raise InputError(
        f"Unknown generator {text!r}; expected 'langevin' or 'apq:<q spec>'",
        {"spec": text},
    )


def _axis_mode(frequency: int, dimension: int) -> Tuple[int, ...]:
    return (frequency,) + (0,) * (dimension - 1)


def _expect_keys(params: Dict[str, str], allowed: set, text: str) -> None:
    unknown = set(params) - allowed
    if unknown:
        raise InputError(
            f"Unknown keys {sorted(unknown)} in spec {text!r}; allowed: {sorted(allowed)}",
            {"spec": text},
        )
