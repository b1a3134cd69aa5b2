"""Vector domain, argument maps, operator and bound specs, function models"""

import logging
import math
from collections import namedtuple
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .util import LOGGER_NAME, VERDICTS, oscillate, to_fraction

logger = logging.getLogger(LOGGER_NAME)


class EvaluationError(ValueError):
    def __init__(self, point, message: str = "non-finite function value"):
        super().__init__(f"{message} at {point.to_lists()}")
        self.point = point


class VectorElement(namedtuple("VectorElement", ["coords"])):
    """element of R^d with exact rational coordinates"""

    def __new__(cls, coords: Iterable):
        coords = tuple(to_fraction(c) for c in coords)
        if not coords:
            raise ValueError("VectorElement needs at least one coordinate")

        return super().__new__(cls, coords)

    @classmethod
    def zero(cls, dim: int) -> "VectorElement":
        return cls([0] * dim)

    @property
    def dim(self) -> int:
        return len(self.coords)

    @property
    def norm(self) -> float:
        return math.hypot(*self.floats())

    def floats(self) -> List[float]:
        return [float(c) for c in self.coords]

    def add(self, other: "VectorElement") -> "VectorElement":
        check_dims(self, other)
        return VectorElement(a + b for a, b in zip(self.coords, other.coords))

    def sub(self, other: "VectorElement") -> "VectorElement":
        check_dims(self, other)
        return VectorElement(a - b for a, b in zip(self.coords, other.coords))

    def scale(self, factor) -> "VectorElement":
        factor = to_fraction(factor)
        return VectorElement(factor * c for c in self.coords)

    def is_zero(self) -> bool:
        return all(c == 0 for c in self.coords)


def check_dims(u: VectorElement, v: VectorElement):
    if u.dim != v.dim:
        raise ValueError(f"Slot dimensions differ: {u.dim} != {v.dim}")


def vector(*coords) -> VectorElement:
    """vector(1, 2) or vector([1, 2])"""
    if len(coords) == 1 and isinstance(coords[0], (list, tuple, np.ndarray)):
        coords = coords[0]

    return VectorElement(coords)


class PairPoint(namedtuple("PairPoint", ["first", "second"])):
    def __new__(cls, first: VectorElement, second: VectorElement):
        if not isinstance(first, VectorElement):
            first = vector(first)
        if not isinstance(second, VectorElement):
            second = vector(second)
        check_dims(first, second)

        return super().__new__(cls, first, second)

    @property
    def dim(self) -> int:
        return self.first.dim

    def floats(self) -> List[float]:
        return self.first.floats() + self.second.floats()

    def to_lists(self) -> List[List[float]]:
        return [self.first.floats(), self.second.floats()]


def pair(first, second) -> PairPoint:
    """pair(2, 3), pair([1, 0], [0, 1]) or pair(VectorElement, VectorElement)"""
    if isinstance(first, (int, float, Fraction)):
        first = [first]
    if isinstance(second, (int, float, Fraction)):
        second = [second]

    return PairPoint(first, second)


class ArgMap(namedtuple("ArgMap", ["a", "b", "c", "d"])):
    """(u, v) -> (a*u + b*v, c*u + d*v) with exact rational entries"""

    def __new__(cls, a, b, c, d):
        return super().__new__(
            cls, to_fraction(a), to_fraction(b), to_fraction(c), to_fraction(d)
        )

    @classmethod
    def identity(cls) -> "ArgMap":
        return cls(1, 0, 0, 1)

    @classmethod
    def diagonal(cls, a, d) -> "ArgMap":
        return cls(a, 0, 0, d)

    @property
    def is_diagonal(self) -> bool:
        return self.b == 0 and self.c == 0

    def apply(self, point: PairPoint) -> PairPoint:
        u, v = point
        if self.is_diagonal:
            return PairPoint(u.scale(self.a), v.scale(self.d))

        return PairPoint(
            u.scale(self.a).add(v.scale(self.b)),
            u.scale(self.c).add(v.scale(self.d)),
        )

    def compose(self, other: "ArgMap") -> "ArgMap":
        """matrix product self·other: apply other first, then self"""
        return ArgMap(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )

    def power(self, n: int) -> "ArgMap":
        if n < 0:
            raise ValueError(f"Map powers must be nonnegative, got {n}")
        if self.is_diagonal:
            return ArgMap.diagonal(self.a**n, self.d**n)
        result, base = ArgMap.identity(), self
        while n:
            if n & 1:
                result = result.compose(base)
            base = base.compose(base)
            n >>= 1

        return result


def apply_map(arg_map: ArgMap, point: PairPoint) -> PairPoint:
    return arg_map.apply(point)


def compose_maps(maps: Sequence[Tuple[ArgMap, int]]) -> ArgMap:
    """exact product M1^k1 · M2^k2 · ... in the given order"""
    result = ArgMap.identity()
    for arg_map, multiplicity in maps:
        result = result.compose(arg_map.power(multiplicity))

    return result


class OperatorTerm(namedtuple("OperatorTerm", ["coef", "map"])):
    def __new__(cls, coef, arg_map: ArgMap):
        coef = to_fraction(coef)
        if coef == 0:
            raise ValueError("Operator coefficients must be nonzero")
        if not isinstance(arg_map, ArgMap):
            arg_map = ArgMap(*arg_map)

        return super().__new__(cls, coef, arg_map)


class OperatorSpec(namedtuple("OperatorSpec", ["terms"])):
    """(Tf)(q) = sum of coef * f(map(q)); with |coef| it is the majorant Λ"""

    def __new__(cls, terms: Iterable):
        terms = tuple(
            t if isinstance(t, OperatorTerm) else OperatorTerm(*t) for t in terms
        )
        if not terms:
            raise ValueError("An operator needs at least one term")

        return super().__new__(cls, terms)

    @property
    def abs_coef_sum(self) -> Fraction:
        return sum(abs(t.coef) for t in self.terms)

    @property
    def is_diagonal(self) -> bool:
        return all(t.map.is_diagonal for t in self.terms)

    def absolute(self) -> "OperatorSpec":
        return OperatorSpec(OperatorTerm(abs(t.coef), t.map) for t in self.terms)

    def canonical(self) -> "OperatorSpec":
        return OperatorSpec(sorted(self.terms, key=lambda t: (tuple(t.map), t.coef)))


class BoundTerm(namedtuple("BoundTerm", ["coef", "exp_first", "exp_second"])):
    def __new__(cls, coef, exp_first, exp_second):
        values = [float(coef), float(exp_first), float(exp_second)]
        if not all(math.isfinite(x) for x in values):
            raise ValueError(f"Bound terms must be finite: {values}")
        if values[0] < 0:
            raise ValueError(f"Bound coefficients must be nonnegative: {values[0]}")
        if values[1] < 0 or values[2] < 0:
            raise ValueError(f"Bound exponents must be nonnegative: {values[1:]}")

        return super().__new__(cls, *values)

    def value(self, norm_first: float, norm_second: float) -> float:
        # 0.0 ** 0.0 == 1.0, so a zero exponent ignores its slot
        return self.coef * norm_first**self.exp_first * norm_second**self.exp_second


class BoundSpec(namedtuple("BoundSpec", ["terms"])):
    """mu(u, v) = sum of coef * |u|^e1 * |v|^e2"""

    def __new__(cls, terms: Iterable = ()):
        terms = tuple(t if isinstance(t, BoundTerm) else BoundTerm(*t) for t in terms)
        return super().__new__(cls, terms)

    def __call__(self, point: PairPoint) -> float:
        if not self.terms:
            return 0.0
        return self.at_norms(point.first.norm, point.second.norm)

    def at_norms(self, norm_first: float, norm_second: float) -> float:
        return math.fsum(t.value(norm_first, norm_second) for t in self.terms)

    def is_zero(self) -> bool:
        return all(t.coef == 0 for t in self.terms)

    def scaled(self, factor: float) -> "BoundSpec":
        return BoundSpec(
            BoundTerm(t.coef * factor, t.exp_first, t.exp_second) for t in self.terms
        )

    def canonical(self) -> "BoundSpec":
        return BoundSpec(
            sorted(self.terms, key=lambda t: (t.exp_first, t.exp_second, t.coef))
        )


class PerturbationSpec(namedtuple("PerturbationSpec", ["envelope", "seed", "eta"])):
    """g(q) = eta * envelope(q) * direction(q), |direction| <= 1"""

    def __new__(cls, envelope: BoundSpec, seed: int, eta: float):
        eta = float(eta)
        if not 0 <= eta <= 1:
            raise ValueError(f"eta must lie in [0, 1], got {eta}")

        return super().__new__(cls, envelope, int(seed), eta)

    def value(self, point: PairPoint, codim: int) -> List[float]:
        return self.value_from_floats(point.first.floats(), point.second.floats(), codim)

    def value_from_floats(
        self, first: List[float], second: List[float], codim: int
    ) -> List[float]:
        """same as value() for the point whose coordinates round to first, second"""
        ceiling = self.eta * self.envelope.at_norms(math.hypot(*first), math.hypot(*second))
        if ceiling == 0:
            return [0.0] * codim
        if not math.isfinite(ceiling):
            raise EvaluationError(PairPoint(first, second), "perturbation envelope overflowed")
        direction = oscillate(self.seed, first + second, codim)
        shrink = 1.0 / math.sqrt(codim)

        return [ceiling * shrink * x for x in direction]


def _to_matrix(matrix) -> Tuple[Tuple[Fraction, ...], ...]:
    rows = tuple(tuple(to_fraction(float(x)) for x in row) for row in np.atleast_2d(matrix))
    if not rows or any(len(r) != len(rows) for r in rows):
        raise ValueError(f"Core matrices must be square, got {np.shape(matrix)}")

    return rows


class FunctionModel(namedtuple("FunctionModel", ["core", "perturbation"])):
    """f(u, v) = (u^T B_k v)_k + g(u, v)"""

    def __new__(cls, core, perturbation: Optional[PerturbationSpec] = None):
        array = np.asarray(core, dtype=float)
        if array.ndim < 3:
            array = array.reshape((1,) + np.atleast_2d(array).shape)
        matrices = tuple(_to_matrix(m) for m in array)
        if len({len(m) for m in matrices}) != 1:
            raise ValueError("All core matrices must share one dimension")

        return super().__new__(cls, matrices, perturbation)

    @property
    def dim(self) -> int:
        return len(self.core[0])

    @property
    def codim(self) -> int:
        return len(self.core)

    def exact_core(self, point: PairPoint) -> Tuple[Fraction, ...]:
        u, v = point.first.coords, point.second.coords
        if len(u) != self.dim:
            raise ValueError(f"Point dimension {len(u)} != model dimension {self.dim}")

        return tuple(
            sum(u[i] * row[j] * v[j] for i, row in enumerate(b) for j in range(len(v)))
            for b in self.core
        )

    def exact(self, point: PairPoint) -> Tuple[Fraction, ...]:
        values = self.exact_core(point)
        if self.perturbation is None:
            return values
        noise = self.perturbation.value(point, self.codim)

        return tuple(x + Fraction(g) for x, g in zip(values, noise))

    def __call__(self, point: PairPoint) -> np.ndarray:
        return np.array([float(x) for x in self.exact(point)])

    def without_perturbation(self) -> "FunctionModel":
        return FunctionModel(self.core_array(), None)

    def core_array(self) -> np.ndarray:
        return np.array([[[float(x) for x in row] for row in b] for b in self.core])


def evaluate_model(model: FunctionModel, point: PairPoint) -> np.ndarray:
    return model(point)


def exact_value(f, point: PairPoint) -> Tuple[Fraction, ...]:
    """values of f at point as exact rationals (floats converted bit-for-bit)"""
    if hasattr(f, "exact"):
        return tuple(f.exact(point))
    raw = np.atleast_1d(np.asarray(f(point), dtype=float))
    if not np.all(np.isfinite(raw)):
        raise EvaluationError(point)

    return tuple(Fraction(float(x)) for x in raw)


def combine(f, weighted_points: Iterable[Tuple[Fraction, PairPoint]]) -> Tuple[Fraction, ...]:
    """exact sum of weight * f(point)"""
    total = None
    for weight, point in weighted_points:
        values = exact_value(f, point)
        if total is None:
            total = [Fraction(0)] * len(values)
        for i, x in enumerate(values):
            total[i] += weight * x

    return tuple(total or ())


def value_norm(values: Sequence) -> float:
    return math.hypot(*(float(x) for x in values))


@dataclass(frozen=True)
class CheckResult:
    name: str
    verdict: str
    worst: float = 0.0
    witness: Optional[List] = None
    metrics: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        assert self.verdict in VERDICTS, f"unexpected verdict {self.verdict}"
        if self.verdict == "FAIL":
            assert self.witness is not None, "every FAIL carries a witness"

    def to_dict(self) -> Dict:
        return {
            "name": self.name,
            "verdict": self.verdict,
            "worst": self.worst,
            "witness": self.witness,
            "metrics": dict(self.metrics),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "CheckResult":
        return cls(**data)
