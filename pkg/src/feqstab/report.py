"""Stability reports (JSON + convergence CSV), grid files and bound tables"""

import csv
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from .feqtypes import CheckResult, PairPoint
from .util import FORMAT, LOGGER_NAME, __version__, format_real

logger = logging.getLogger(LOGGER_NAME)


CONVERGENCE_HEADER = ("n", "delta", "lambda_bound", "tail")
BOUND_HEADER = ("param", "eigenfactor", "series_constant", "stated_constant", "discrepancy")


class GridError(ValueError):
    def __init__(self, message: str, row: int, column: Optional[int] = None):
        where = f"row {row}" + (f", column {column}" if column is not None else "")
        super().__init__(f"{where}: {message}")
        self.row = row
        self.column = column


@dataclass
class StabilityReport:
    metadata: Dict = field(default_factory=dict)
    warnings: List[str] = field(default_factory=list)
    status: str = "ok"
    exit_code: int = 0
    eigenfactor: Optional[float] = None
    measured_rate: Optional[float] = None
    transported_rate: Optional[float] = None
    probe: Dict = field(default_factory=dict)
    mu_star_table: List[Dict] = field(default_factory=list)
    admissibility: Optional[Dict] = None
    checks: List[CheckResult] = field(default_factory=list)
    convergence: List[List[float]] = field(default_factory=list)
    stop_reason: Optional[str] = None

    @property
    def verdicts(self) -> Dict[str, str]:
        return {c.name: c.verdict for c in self.checks}

    @property
    def passed(self) -> bool:
        return all(c.verdict != "FAIL" for c in self.checks)

    def check(self, name: str) -> CheckResult:
        for result in self.checks:
            if result.name == name:
                return result
        raise KeyError(name)

    def stamp(self):
        self.metadata["timestamp"] = datetime.now(timezone.utc).isoformat()
        self.metadata["version"] = str(__version__)

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["checks"] = [c.to_dict() for c in self.checks]
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> "StabilityReport":
        data = dict(data)
        data["checks"] = [CheckResult.from_dict(c) for c in data.get("checks", [])]
        return cls(**data)


def _convergence_csv(rows: Sequence[Sequence[float]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CONVERGENCE_HEADER)
    for n, delta, lam, tail in rows:
        writer.writerow([int(n), repr(float(delta)), repr(float(lam)), repr(float(tail))])

    return buffer.getvalue()


def convergence_path(path: Path) -> Path:
    return Path(path).with_suffix(".csv")


def write_report(report: StabilityReport, path) -> Path:
    """JSON at path (sorted keys), convergence CSV beside it"""
    path = Path(path)
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    try:
        path.write_text(text, encoding=FORMAT)
        convergence_path(path).write_text(_convergence_csv(report.convergence), encoding=FORMAT)
    except OSError as error:
        raise OSError(f"cannot write report {path}: {error.strerror or error}") from error
    logger.info(f"wrote {path} and {convergence_path(path).name}")

    return path


def read_report(path) -> StabilityReport:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding=FORMAT))
    except OSError as error:
        raise OSError(f"cannot read report {path}: {error.strerror or error}") from error

    return StabilityReport.from_dict(data)


def read_convergence(path) -> List[List[float]]:
    with open(convergence_path(path), encoding=FORMAT, newline="") as stream:
        reader = csv.reader(stream)
        header = next(reader)
        assert tuple(header) == CONVERGENCE_HEADER, f"unexpected header {header}"
        return [[int(row[0])] + [float(x) for x in row[1:]] for row in reader]


def parse_grid(text: str, dim: Optional[int] = None) -> List[PairPoint]:
    """whitespace rows with 2d numbers each; '#' comments and blank lines skipped"""
    points, width = [], None
    for row, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        values = []
        for column, token in enumerate(line.split(), start=1):
            try:
                value = float(token)
            except ValueError:
                raise GridError(f"not a number: {token!r}", row, column) from None
            if not math.isfinite(value):
                raise GridError(f"non-finite value {token!r}", row, column)
            values.append(value)
        expected = width or (2 * dim if dim else None)
        if len(values) % 2:
            raise GridError(f"odd number of columns ({len(values)})", row)
        if expected is not None and len(values) != expected:
            raise GridError(f"expected {expected} columns, found {len(values)}", row)
        width = len(values)
        half = width // 2
        points.append(PairPoint(values[:half], values[half:]))

    return points


def read_grid(path, dim: Optional[int] = None) -> List[PairPoint]:
    path = Path(path)
    try:
        text = path.read_text(encoding=FORMAT)
    except OSError as error:
        raise OSError(f"cannot read grid {path}: {error.strerror or error}") from error

    return parse_grid(text, dim)


def format_grid(points: Sequence[PairPoint]) -> str:
    return "".join(" ".join(repr(x) for x in q.floats()) + "\n" for q in points)


def write_grid(points: Sequence[PairPoint], path) -> Path:
    path = Path(path)
    try:
        path.write_text(format_grid(points), encoding=FORMAT)
    except OSError as error:
        raise OSError(f"cannot write grid {path}: {error.strerror or error}") from error

    return path


def bound_table(rows: Sequence[Dict]) -> str:
    """CSV with one row per swept parameter value"""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(BOUND_HEADER)
    cell = lambda x: "" if x is None else repr(float(x))  # noqa: E731
    for row in rows:
        writer.writerow(
            [
                format_real(row["param"]),
                cell(row["eigenfactor"]),
                cell(row["series_constant"]),
                cell(row.get("stated_constant")),
                int(bool(row["discrepancy"])),
            ]
        )

    return buffer.getvalue()
