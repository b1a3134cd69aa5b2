"""
Direct method: T^n f converges to the exact solution K because the majorant
series sum of Lambda^n mu is finite. Everything here is pure except the limit
cache in LimitEvaluator.
"""

import functools
import logging
import math
import threading
from collections import namedtuple
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .feqtypes import (
    BoundSpec,
    CheckResult,
    FunctionModel,
    OperatorSpec,
    PairPoint,
    combine,
    compose_maps,
    exact_value,
    value_norm,
)
from .util import (
    DEFAULT_DEPTH_CAP,
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    DIVERGENCE_STREAK,
    EIGEN_MATCH,
    LOGGER_NAME,
    NOISE_FLOOR,
)

logger = logging.getLogger(LOGGER_NAME)


STOP_REASONS = ("tail-below-tol", "max-iter", "divergence-detected")


class NotContractive(ValueError):
    def __init__(self, factor: float, message: str = ""):
        super().__init__(
            message or f"Majorant series diverges (factor {factor:.10g} >= 1)"
        )
        self.factor = factor
        self.trace = None


class CapacityError(RuntimeError):
    pass


class IterationLimit(RuntimeError):
    def __init__(self, tail_bound: float, max_iter: int):
        super().__init__(
            f"No convergence within {max_iter} iterations (tail bound {tail_bound:.6g})."
            " Loosen --tol or raise --max-iter."
        )
        self.tail_bound = tail_bound
        self.trace = None


EngineConfig = namedtuple(
    "EngineConfig",
    ["tol", "max_iter", "depth_cap"],
    defaults=[DEFAULT_TOL, DEFAULT_MAX_ITER, DEFAULT_DEPTH_CAP],
)


@dataclass
class IterationTrace:
    point: PairPoint
    values: List[List[float]] = field(default_factory=list)
    deltas: List[float] = field(default_factory=list)
    lambda_bounds: List[float] = field(default_factory=list)
    tail_bounds: List[float] = field(default_factory=list)
    stop_reason: str = "tail-below-tol"
    empirical: bool = False

    @property
    def iterations(self) -> int:
        return len(self.values) - 1

    def rows(self) -> List[Tuple[int, float, float, float]]:
        """(n, delta, lambda_bound, tail) per iterate"""
        return [
            (n, self.deltas[n], self.lambda_bounds[n], self.tail_bounds[n])
            for n in range(len(self.deltas))
        ]


def apply_operator(spec: OperatorSpec, f, point: PairPoint) -> np.ndarray:
    return np.array([float(x) for x in _apply_exact(spec, f, point)])


def _apply_exact(spec: OperatorSpec, f, point: PairPoint) -> Tuple[Fraction, ...]:
    return combine(f, ((t.coef, t.map.apply(point)) for t in spec.terms))


def compositions(n: int, k: int) -> Iterator[Tuple[int, ...]]:
    """all k-tuples of nonnegative ints summing to n"""
    if k == 1:
        yield (n,)
        return
    for head in range(n, -1, -1):
        for tail in compositions(n - head, k - 1):
            yield (head,) + tail


def multinomial(n: int, counts: Sequence[int]) -> int:
    result, remaining = 1, n
    for k in counts:
        result *= math.comb(remaining, k)
        remaining -= k

    return result


@functools.lru_cache(maxsize=1024)
def collapsed_terms(spec: OperatorSpec, n: int):
    """T^n as sum over |k| = n of multinomial * prod coef^k * f(prod map^k q);
    valid only for commuting (diagonal) maps"""
    assert spec.is_diagonal, "collapse needs commuting maps"
    terms = []
    for counts in compositions(n, len(spec.terms)):
        weight = Fraction(multinomial(n, counts))
        for term, k in zip(spec.terms, counts):
            weight *= term.coef**k
        composed = compose_maps([(t.map, k) for t, k in zip(spec.terms, counts)])
        terms.append((weight, composed))

    return tuple(terms)


@functools.lru_cache(maxsize=1024)
def _collapsed_scalars(spec: OperatorSpec, n: int):
    """(core factor, rows of (weight, a num, a den, d num, d den)) for T^n"""
    core_factor, rows = Fraction(0), []
    for weight, composed in collapsed_terms(spec, n):
        core_factor += weight * composed.a * composed.d
        a, d = composed.a, composed.d
        rows.append((float(weight), a.numerator, a.denominator, d.numerator, d.denominator))

    return core_factor, tuple(rows)


def _collapsed_model(
    spec: OperatorSpec, model: FunctionModel, point: PairPoint, n: int
) -> Tuple[Fraction, ...]:
    """T^n f for f = core + g: the bilinear core picks up a*d under each diagonal
    map, so only g is summed term by term, in floats"""
    core_factor, rows = _collapsed_scalars(spec, n)
    core = [core_factor * x for x in model.exact_core(point)]
    g = model.perturbation
    if g is None or g.eta == 0:
        return tuple(core)
    # int true division rounds like float(Fraction), so g sees the same bits
    first = [(c.numerator, c.denominator) for c in point.first.coords]
    second = [(c.numerator, c.denominator) for c in point.second.coords]
    parts: List[List[float]] = [[] for _ in core]
    for weight, a_num, a_den, d_num, d_den in rows:
        u = [(num * a_num) / (den * a_den) for num, den in first]
        v = [(num * d_num) / (den * d_den) for num, den in second]
        for part, x in zip(parts, g.value_from_floats(u, v, model.codim)):
            part.append(weight * x)

    return tuple(x + Fraction(math.fsum(part)) for x, part in zip(core, parts))


def _naive(spec: OperatorSpec, leaf: Callable, point: PairPoint, n: int, memo: Dict):
    """(T^n f)(q) = sum coef_i (T^(n-1) f)(M_i q); leaf returns a tuple"""
    key = (n, point)
    if key in memo:
        return memo[key]
    if n == 0:
        result = leaf(point)
    else:
        result = None
        for term in spec.terms:
            inner = _naive(spec, leaf, term.map.apply(point), n - 1, memo)
            scaled = [term.coef * x for x in inner]
            result = scaled if result is None else [a + b for a, b in zip(result, scaled)]
        result = tuple(result)
    memo[key] = result

    return result


def _check_depth(spec: OperatorSpec, n: int, depth_cap: int):
    if n > depth_cap:
        raise CapacityError(
            f"T^{n} of a non-commuting operator needs {len(spec.terms)}^{n} evaluations,"
            f" above the depth cap {depth_cap}. Raise --depth-cap or loosen --tol."
        )


def _power_exact(
    spec: OperatorSpec,
    f,
    point: PairPoint,
    n: int,
    method: str = "auto",
    depth_cap: int = DEFAULT_DEPTH_CAP,
    memo: Optional[Dict] = None,
) -> Tuple[Fraction, ...]:
    if n < 0:
        raise ValueError(f"Operator powers must be nonnegative, got {n}")
    if method not in ("auto", "collapse", "naive"):
        raise ValueError(f"Unknown power method: {method}")
    if method == "collapse" and not spec.is_diagonal:
        raise ValueError("Multinomial collapse needs diagonal (commuting) maps")
    if method == "collapse" or (method == "auto" and spec.is_diagonal):
        if isinstance(f, FunctionModel):
            return _collapsed_model(spec, f, point, n)
        return combine(f, ((w, m.apply(point)) for w, m in collapsed_terms(spec, n)))
    _check_depth(spec, n, depth_cap)

    return _naive(spec, lambda q: exact_value(f, q), point, n, {} if memo is None else memo)


def operator_power(
    spec: OperatorSpec,
    f,
    point: PairPoint,
    n: int,
    method: str = "auto",
    depth_cap: int = DEFAULT_DEPTH_CAP,
) -> np.ndarray:
    values = _power_exact(spec, f, point, n, method, depth_cap)
    return np.array([float(x) for x in values])


def apply_lambda(spec: OperatorSpec, delta: Callable, point: PairPoint) -> float:
    """(Λδ)(q) = sum |coef_i| δ(M_i q); delta is a BoundSpec or any δ >= 0"""
    return math.fsum(float(abs(t.coef)) * float(delta(t.map.apply(point))) for t in spec.terms)


def lambda_power(
    spec: OperatorSpec,
    delta: Callable,
    point: PairPoint,
    n: int,
    depth_cap: int = DEFAULT_DEPTH_CAP,
    memo: Optional[Dict] = None,
) -> float:
    absolute = spec.absolute()
    if absolute.is_diagonal:
        return math.fsum(
            float(w) * float(delta(m.apply(point))) for w, m in collapsed_terms(absolute, n)
        )
    _check_depth(spec, n, depth_cap)
    leaf = lambda q: (Fraction(float(delta(q))),)  # noqa: E731

    return float(_naive(absolute, leaf, point, n, {} if memo is None else memo)[0])


def _term_factor(spec: OperatorSpec, exp_first: float, exp_second: float) -> float:
    return math.fsum(
        float(abs(t.coef)) * abs(float(t.map.a)) ** exp_first * abs(float(t.map.d)) ** exp_second
        for t in spec.terms
    )


@functools.lru_cache(maxsize=256)
def eigenfactor(spec: OperatorSpec, bound: BoundSpec) -> Optional[float]:
    """c with Λ bound = c bound, or None when there is no closed form"""
    if not spec.is_diagonal:
        return None
    factors = [_term_factor(spec, t.exp_first, t.exp_second) for t in bound.terms if t.coef > 0]
    if not factors:
        return 0.0
    c = factors[0]
    if any(abs(x - c) > EIGEN_MATCH * max(1.0, c) for x in factors):
        return None

    rng = np.random.default_rng(0)
    for u, v in rng.uniform(-2, 2, size=(8, 2)):
        q = PairPoint([float(u)], [float(v)])
        expected = c * bound(q)
        assert abs(apply_lambda(spec, bound, q) - expected) <= 1e-9 * max(1.0, expected)

    return c


MuStarSeries = namedtuple("MuStarSeries", ["value", "increments", "ratio", "empirical"])


def mu_star_series(
    spec: OperatorSpec,
    bound: BoundSpec,
    point: PairPoint,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    depth_cap: int = DEFAULT_DEPTH_CAP,
) -> MuStarSeries:
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    mu = bound(point)
    c = eigenfactor(spec, bound)
    if c is not None:
        if c >= 1:
            raise NotContractive(c)
        return MuStarSeries(mu / (1 - c), [mu], c, False)

    increments, memo, streak, ratio = [mu], {}, 0, 0.0
    for n in range(1, max_iter + 1):
        if increments[-1] == 0:
            ratio = 0.0
            break
        nxt = lambda_power(spec, bound, point, n, depth_cap, memo)
        ratio = nxt / increments[-1]
        increments.append(nxt)
        streak = streak + 1 if ratio >= 1 else 0
        if streak >= DIVERGENCE_STREAK:
            raise NotContractive(ratio)
        if ratio < 1 and nxt * ratio / (1 - ratio) < tol:
            break
    else:
        raise IterationLimit(increments[-1], max_iter)
    logger.debug(f"empirical mu* at {point.to_lists()}: {len(increments)} terms, ratio {ratio:.6g}")

    return MuStarSeries(math.fsum(increments), increments, ratio, True)


def mu_star(
    spec: OperatorSpec,
    bound: BoundSpec,
    point: PairPoint,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    depth_cap: int = DEFAULT_DEPTH_CAP,
) -> float:
    return mu_star_series(spec, bound, point, tol, max_iter, depth_cap).value


def mu_star_partial_sums(
    spec: OperatorSpec,
    bound: BoundSpec,
    point: PairPoint,
    n_terms: int,
    depth_cap: int = DEFAULT_DEPTH_CAP,
) -> List[float]:
    """S_N = sum_{n <= N} (Λ^n mu)(q) for N < n_terms, by transporting mu numerically"""
    memo, sums, running = {}, [], []
    for n in range(n_terms):
        running.append(lambda_power(spec, bound, point, n, depth_cap, memo))
        sums.append(math.fsum(running))

    return sums


def transported_rate(
    spec: OperatorSpec,
    bound: BoundSpec,
    point: PairPoint,
    n: int = 8,
    depth_cap: int = DEFAULT_DEPTH_CAP,
) -> Optional[float]:
    """(Λ^(n+1) mu)(q) / (Λ^n mu)(q), measured by transporting mu"""
    memo = {}
    low = lambda_power(spec, bound, point, n, depth_cap, memo)
    if low <= 0:
        return None

    return lambda_power(spec, bound, point, n + 1, depth_cap, memo) / low


def delta_rate(trace: IterationTrace) -> Optional[float]:
    """geometric-mean ratio of successive deltas above the noise floor"""
    scale = max([1.0] + [abs(x) for row in trace.values for x in row])
    usable = [d for d in trace.deltas if d > NOISE_FLOOR * scale]
    if len(usable) < 2:
        return None

    return (usable[-1] / usable[0]) ** (1.0 / (len(usable) - 1))


class _Tails:
    """lambda bound and tail bound per n, closed form or from the empirical series"""

    def __init__(self, c: Optional[float], series: MuStarSeries):
        self.c = c
        self.series = series

    def lam(self, n: int) -> float:
        if self.c is not None:
            return self.c**n * self.series.increments[0]
        incs = self.series.increments
        if n < len(incs):
            return incs[n]

        return incs[-1] * self.series.ratio ** (n - len(incs) + 1)

    def tail(self, n: int) -> float:
        if self.c is not None:
            return self.c**n * self.series.value
        incs, ratio = self.series.increments, self.series.ratio
        beyond = incs[-1] * ratio / (1 - ratio) if ratio < 1 else math.inf
        if n < len(incs):
            return math.fsum(incs[n:]) + beyond

        return beyond * ratio ** (n - len(incs))


def _stop_index(tails: _Tails, tol: float, max_iter: int) -> int:
    for n in range(max_iter + 1):
        if tails.tail(n) < tol:
            return n
    raise IterationLimit(tails.tail(max_iter), max_iter)


def _prepare(spec, bound, point, tol, max_iter, depth_cap):
    c = eigenfactor(spec, bound)
    series = mu_star_series(spec, bound, point, tol, max_iter, depth_cap)
    tails = _Tails(c, series)

    return c, tails, _stop_index(tails, tol, max_iter)


def limit_value(
    spec: OperatorSpec,
    model,
    bound: BoundSpec,
    point: PairPoint,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    depth_cap: int = DEFAULT_DEPTH_CAP,
) -> Tuple[np.ndarray, IterationTrace]:
    c, tails, n_stop = _prepare(spec, bound, point, tol, max_iter, depth_cap)
    trace = IterationTrace(point=point, empirical=c is None)
    memo: Dict = {}
    power = lambda n: _power_exact(spec, model, point, n, "auto", depth_cap, memo)  # noqa: E731

    current, streak = power(0), 0
    trace.values.append([float(x) for x in current])
    for n in range(n_stop + 1):
        following = power(n + 1)
        delta = value_norm([a - b for a, b in zip(current, following)])
        trace.deltas.append(delta)
        trace.lambda_bounds.append(tails.lam(n))
        trace.tail_bounds.append(tails.tail(n))
        if trace.empirical and n > 0 and trace.deltas[n - 1] > NOISE_FLOOR:
            streak = streak + 1 if delta > trace.deltas[n - 1] else 0
            if streak >= DIVERGENCE_STREAK:
                trace.stop_reason = "divergence-detected"
                error = NotContractive(delta / trace.deltas[n - 1])
                error.trace = trace
                raise error
        if n < n_stop:
            trace.values.append([float(x) for x in following])
        current = following
    logger.debug(
        f"limit at {point.to_lists()}: n={n_stop}, tail={trace.tail_bounds[-1]:.3g},"
        f" {'empirical' if trace.empirical else 'closed-form'} tails"
    )

    return np.array(trace.values[n_stop]), trace


def defect(spec: OperatorSpec, model, point: PairPoint) -> float:
    """|f(q) - (Tf)(q)|"""
    own = exact_value(model, point)
    image = _apply_exact(spec, model, point)

    return value_norm([a - b for a, b in zip(own, image)])


class LimitEvaluator:
    """K = lim T^n f, evaluated pointwise with memoized exact-point results"""

    def __init__(
        self,
        spec: OperatorSpec,
        model,
        bound: BoundSpec,
        tol: float = DEFAULT_TOL,
        max_iter: int = DEFAULT_MAX_ITER,
        depth_cap: int = DEFAULT_DEPTH_CAP,
    ):
        if tol <= 0:
            raise ValueError(f"tol must be positive, got {tol}")
        self.spec = spec
        self.model = model
        self.bound = bound
        self.tol = tol
        self.max_iter = max_iter
        self.depth_cap = depth_cap
        self.factor = eigenfactor(spec, bound)
        if self.factor is not None and self.factor >= 1:
            raise NotContractive(self.factor)
        self._cache: Dict[PairPoint, Tuple[np.ndarray, float, int]] = {}
        self._lock = threading.Lock()

    def _compute(self, point: PairPoint) -> Tuple[np.ndarray, float, int]:
        if self.factor is None:
            value, trace = limit_value(
                self.spec, self.model, self.bound, point, self.tol, self.max_iter, self.depth_cap
            )
            return value, trace.tail_bounds[trace.iterations], trace.iterations
        _, tails, n_stop = _prepare(
            self.spec, self.bound, point, self.tol, self.max_iter, self.depth_cap
        )
        values = _power_exact(self.spec, self.model, point, n_stop)

        return np.array([float(x) for x in values]), tails.tail(n_stop), n_stop

    def _entry(self, point: PairPoint) -> Tuple[np.ndarray, float, int]:
        with self._lock:
            hit = self._cache.get(point)
        if hit is not None:
            return hit
        entry = self._compute(point)
        with self._lock:
            # a concurrent duplicate computed the same value; keep the first
            return self._cache.setdefault(point, entry)

    def __call__(self, point: PairPoint) -> np.ndarray:
        return self._entry(point)[0].copy()

    def tail_bound(self, point: PairPoint) -> float:
        return self._entry(point)[1]

    def iterations(self, point: PairPoint) -> int:
        return self._entry(point)[2]

    def fixed_point_residual(self, point: PairPoint) -> float:
        """|K(q) - (TK)(q)|"""
        own = exact_value(self, point)
        image = _apply_exact(self.spec, self, point)

        return value_norm([a - b for a, b in zip(own, image)])

    def __len__(self) -> int:
        return len(self._cache)


def verify_stability(
    spec: OperatorSpec,
    model,
    bound: BoundSpec,
    grid: Sequence[PairPoint],
    tol: float = DEFAULT_TOL,
    evaluator: Optional[LimitEvaluator] = None,
) -> CheckResult:
    """|f - K| <= mu* + tol at every grid point"""
    evaluator = evaluator or LimitEvaluator(spec, model, bound, tol)
    worst, witness, slacks, distances = -math.inf, None, [], []
    for q in grid:
        f_value = exact_value(model, q)
        k_value = exact_value(evaluator, q)
        distance = value_norm([a - b for a, b in zip(f_value, k_value)])
        ceiling = mu_star(spec, bound, q, tol, evaluator.max_iter, evaluator.depth_cap)
        violation = distance - ceiling - tol
        distances.append(distance)
        slacks.append(ceiling - distance)
        if violation > worst:
            worst, witness = violation, q
    failed = worst > 0

    return CheckResult(
        name="stability",
        verdict="FAIL" if failed else "PASS",
        worst=max(worst, 0.0),
        witness=witness.to_lists() if failed else None,
        metrics={
            "points": len(grid),
            "max_distance": max(distances, default=0.0),
            "min_slack": min(slacks, default=0.0),
            "max_slack": max(slacks, default=0.0),
            "max_violation": max(worst, 0.0),
        },
    )


def uniqueness_probe(
    spec: OperatorSpec,
    model_a,
    model_b,
    bound: BoundSpec,
    grid: Sequence[PairPoint],
    tol: float = DEFAULT_TOL,
    tol_b: Optional[float] = None,
    evaluator: Optional[LimitEvaluator] = None,
) -> CheckResult:
    """two admissible f over one core must share the limit; evaluator, when
    given, is the limit of model_a"""
    tol_b = tol if tol_b is None else tol_b
    first = evaluator or LimitEvaluator(spec, model_a, bound, tol)
    second = LimitEvaluator(spec, model_b, bound, tol_b)
    worst, witness, largest = -math.inf, None, 0.0
    for q in grid:
        gap = value_norm([a - b for a, b in zip(exact_value(first, q), exact_value(second, q))])
        allowed = 2 * max(tol, tol_b) + first.tail_bound(q) + second.tail_bound(q)
        largest = max(largest, gap)
        if gap - allowed > worst:
            worst, witness = gap - allowed, q
    failed = worst > 0

    return CheckResult(
        name="uniqueness",
        verdict="FAIL" if failed else "PASS",
        worst=largest,
        witness=witness.to_lists() if failed else None,
        metrics={"points": len(grid), "max_gap": largest},
    )
