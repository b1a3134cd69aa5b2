"""Admissible perturbed models f = core + g, admissibility audits and sample grids"""

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import qmc

from .catalog import fe_residual, rho_inequality_residual
from .engine import defect, eigenfactor
from .feqtypes import (
    BoundSpec,
    CheckResult,
    FunctionModel,
    OperatorSpec,
    PairPoint,
    PerturbationSpec,
    VectorElement,
)
from .util import ADMISSIBILITY_SLACK, LOGGER_NAME

logger = logging.getLogger(LOGGER_NAME)


MARGIN_FLOOR = 2.0**-40


@dataclass
class AdmissibilityReport:
    name: str
    grid_size: int
    max_ratio: float
    zero_violations: int
    seed: Optional[int] = None
    params: Dict[str, float] = field(default_factory=dict)
    witness: Optional[List] = None

    @property
    def verdict(self) -> str:
        passed = self.max_ratio <= 1 + ADMISSIBILITY_SLACK and self.zero_violations == 0
        return "PASS" if passed else "FAIL"

    def as_check(self) -> CheckResult:
        return CheckResult(
            name=self.name,
            verdict=self.verdict,
            worst=self.max_ratio,
            witness=self.witness if self.verdict == "FAIL" else None,
            metrics={
                "grid_size": self.grid_size,
                "max_ratio": self.max_ratio,
                "zero_violations": self.zero_violations,
            },
        )

    def to_dict(self) -> Dict:
        return {
            "name": self.name,
            "verdict": self.verdict,
            "grid_size": self.grid_size,
            "max_ratio": self.max_ratio,
            "zero_violations": self.zero_violations,
            "seed": self.seed,
            "params": dict(self.params),
            "witness": self.witness,
        }


def default_core(dim: int = 1, codim: int = 1) -> np.ndarray:
    """B_k[i][j] = (k+1)/(1+i+j); [[1]] when d = m = 1"""
    if dim < 1 or codim < 1:
        raise ValueError(f"dim and codim must be >= 1, got {dim}, {codim}")
    i, j = np.indices((dim, dim))
    return np.stack([(k + 1) / (1.0 + i + j) for k in range(codim)])


def make_perturbed_model(
    core,
    bound: BoundSpec,
    spec: OperatorSpec,
    eta: float,
    seed: int,
    require_margin: bool = True,
) -> FunctionModel:
    """core + g with |g| <= eta * bound / (1 + s), s = sum |coef|"""
    s = float(spec.abs_coef_sum)
    c = eigenfactor(spec, bound)
    if c is None:
        message = (
            "no closed-form eigenfactor, so |f - Tf| <= (1+c)/(1+s) * bound cannot be"
            " guaranteed; the admissibility audit is the only check"
        )
        if require_margin:
            raise ValueError(message)
        warnings.warn(message)
    elif c > s:
        raise ValueError(
            f"eigenfactor {c:.10g} exceeds sum |coef| = {s:.10g}; a perturbation of"
            f" size bound/(1+s) may break |f - Tf| <= bound"
        )
    envelope = bound.scaled(1 / (1 + s))
    logger.debug(f"perturbed model: eta={eta}, seed={seed}, envelope scale 1/{1 + s}")

    return FunctionModel(core, PerturbationSpec(envelope, seed, eta))


def audit_admissibility(
    model,
    spec: OperatorSpec,
    bound: BoundSpec,
    grid: Sequence[PairPoint],
    seed: Optional[int] = None,
    params: Optional[Dict] = None,
) -> AdmissibilityReport:
    """max defect/bound over the grid; defect must vanish where the bound does"""
    max_ratio, zero_violations, witness, worst_zero = 0.0, 0, None, None
    for q in grid:
        d, m = defect(spec, model, q), bound(q)
        if m > 0:
            if d / m > max_ratio:
                max_ratio, witness = d / m, q
        elif d > 0:
            zero_violations += 1
            worst_zero = worst_zero or q
    report = AdmissibilityReport(
        name="admissibility",
        grid_size=len(grid),
        max_ratio=max_ratio,
        zero_violations=zero_violations,
        seed=seed,
        params=dict(params or {}),
    )
    if report.verdict == "FAIL":
        report.witness = (worst_zero or witness).to_lists()
    logger.info(f"admissibility {report.verdict}: max ratio {max_ratio:.6g} on {len(grid)} points")

    return report


def _quad_audit(name: str, quads: Sequence[Tuple], sides, seed, params) -> AdmissibilityReport:
    max_ratio, zero_violations, witness, worst_zero = 0.0, 0, None, None
    for quad in quads:
        lhs, ceiling = sides(*quad)
        if ceiling > 0:
            if lhs / ceiling > max_ratio:
                max_ratio, witness = lhs / ceiling, quad
        elif lhs > 0:
            zero_violations += 1
            worst_zero = worst_zero or quad
    report = AdmissibilityReport(
        name=name,
        grid_size=len(quads),
        max_ratio=max_ratio,
        zero_violations=zero_violations,
        seed=seed,
        params=dict(params),
    )
    if report.verdict == "FAIL":
        report.witness = [v.floats() for v in (worst_zero or witness)]

    return report


def audit_fe31(model, p: float, quads: Sequence[Tuple], seed: Optional[int] = None):
    """FE(f) <= |x|^p |y|^p |z|^p |w|^p on every quadruple"""

    def sides(x, y, z, w):
        ceiling = (x.norm * y.norm * z.norm * w.norm) ** p
        return fe_residual(model, x, y, z, w), ceiling

    return _quad_audit("fe31", quads, sides, seed, {"p": p})


def audit_fe34(
    model, a: float, rho: float, r: float, quads: Sequence[Tuple], seed: Optional[int] = None
):
    """rho-inequality with the additive |x|^r + |y|^r + |z|^r + |w|^r allowance"""

    def sides(x, y, z, w):
        lhs, rhs = rho_inequality_residual(model, a, rho, x, y, z, w)
        return lhs, rhs + sum(v.norm**r for v in (x, y, z, w))

    return _quad_audit("fe34", quads, sides, seed, {"a": a, "rho": rho, "r": r})


def fe31_margin_search(
    core,
    bound: BoundSpec,
    spec: OperatorSpec,
    p: float,
    quads: Sequence[Tuple],
    seed: int,
    floor: float = MARGIN_FLOOR,
) -> Tuple[float, AdmissibilityReport]:
    """largest eta = 2^-k passing audit_fe31, else eta = 0 (the exact core)"""
    eta = 1.0
    while eta >= floor:
        model = make_perturbed_model(core, bound, spec, eta, seed)
        report = audit_fe31(model, p, quads, seed)
        if report.verdict == "PASS":
            logger.info(f"four-point margin: eta={eta}")
            return eta, report
        eta /= 2
    model = make_perturbed_model(core, bound, spec, 0.0, seed)
    logger.info("four-point margin: no positive eta passed, using eta=0")

    return 0.0, audit_fe31(model, p, quads, seed)


def _pair(row: np.ndarray, dim: int) -> PairPoint:
    return PairPoint([float(x) for x in row[:dim]], [float(x) for x in row[dim:]])


def axis_points(box: float, dim: int) -> List[PairPoint]:
    points = []
    for slot in range(2):
        for i in range(dim):
            for sign in (1, -1):
                row = np.zeros(2 * dim)
                row[slot * dim + i] = sign * box
                points.append(_pair(row, dim))

    return points


def make_grid(count: int, box: float, dim: int = 1) -> List[PairPoint]:
    """count Halton points in [-box, box]^(2d), then the 4d axis points and the origin"""
    if count < 0 or box <= 0:
        raise ValueError(f"need count >= 0 and box > 0, got {count}, {box}")
    points = []
    if count:
        sampler = qmc.Halton(d=2 * dim, scramble=False)
        sampler.fast_forward(1)  # the first Halton point is the corner
        sample = qmc.scale(sampler.random(count), [-box] * (2 * dim), [box] * (2 * dim))
        points = [_pair(row, dim) for row in sample]

    return points + axis_points(box, dim) + [_pair(np.zeros(2 * dim), dim)]


def random_points(count: int, box: float, dim: int, rng: np.random.Generator) -> List[PairPoint]:
    return [_pair(row, dim) for row in rng.uniform(-box, box, size=(count, 2 * dim))]


def random_vectors(
    count: int, width: int, box: float, dim: int, rng: np.random.Generator
) -> List[Tuple[VectorElement, ...]]:
    """count tuples of width vectors, each uniform in [-box, box]^d"""
    sample = rng.uniform(-box, box, size=(count, width, dim))
    return [tuple(VectorElement(float(x) for x in v) for v in row) for row in sample]


def make_quadruples(
    count: int, box: float, dim: int, seed: int, zero_slots: bool = False
) -> List[Tuple[VectorElement, ...]]:
    """seeded quadruples (x, y, z, w); with zero_slots every fifth has one slot zeroed"""
    quads = random_vectors(count, 4, box, dim, np.random.default_rng(seed))
    if zero_slots:
        for k in range(0, count, 5):
            quad = list(quads[k])
            quad[(k // 5) % 4] = VectorElement.zero(dim)
            quads[k] = tuple(quad)

    return quads


def envelope_ratio(model: FunctionModel, grid: Sequence[PairPoint]) -> float:
    """max |g|/envelope over the grid, <= eta for generated models"""
    spec = model.perturbation
    if spec is None:
        return 0.0
    worst = 0.0
    for q in grid:
        ceiling = spec.envelope(q)
        if ceiling > 0:
            g = spec.value(q, model.codim)
            worst = max(worst, math.hypot(*g) / ceiling)

    return worst
