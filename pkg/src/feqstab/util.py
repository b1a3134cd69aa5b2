"""constants and utilities"""

import hashlib
import logging
import math
import struct
from fractions import Fraction
from typing import List, Sequence

from poetry.factory import Factory

POETRY = Factory().create_poetry()

LOGGER_NAME = POETRY.package.name

__app_name__ = POETRY.package.name
__version__ = POETRY.package.version

FORMAT = "utf-8"

DEFAULT_TOL = 1e-10
DEFAULT_GRID_BOX = 2.0
DEFAULT_GRID_COUNT = 100
DEFAULT_MAX_ITER = 200
DEFAULT_ETA = 0.5
DEFAULT_SEED = 1
DEFAULT_DEPTH_CAP = 18  # k**n evaluations for non-commuting maps

DIVERGENCE_STREAK = 5
ADMISSIBILITY_SLACK = 1e-9
TELESCOPE_SLACK = 1e-9
EIGEN_MATCH = 1e-12
RESIDUAL_PER_TOL = 1e4  # 1e-6 at the default tol
NOISE_FLOOR = 1e3 * 2.220446049250313e-16

VERDICTS = ("PASS", "FAIL", "SKIPPED")


logger = logging.getLogger(LOGGER_NAME)


def to_fraction(value) -> Fraction:
    """exact conversion; floats keep every bit of their binary expansion"""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float) and not math.isfinite(value):
        raise ValueError(f"Expected a finite number, got {value}")
    if isinstance(value, str):
        return Fraction(value.strip())

    return Fraction(value)


def format_fraction(value: Fraction, signed: bool = False) -> str:
    text = str(value)
    if signed and value >= 0:
        text = "+" + text

    return text


def format_real(value: float) -> str:
    """shortest text that parses back to the same float"""
    value = float(value)
    if value.is_integer() and abs(value) < 2**53:
        return str(int(value))

    return repr(value)


def oscillate(seed: int, coords: Sequence[float], size: int) -> List[float]:
    """deterministic pseudo-random values in [-1, 1) keyed by seed and the
    bit pattern of coords"""
    data = seed.to_bytes(8, "big", signed=True) + b"".join(
        struct.pack(">d", c) for c in coords
    )
    stream = hashlib.shake_256(data).digest(8 * size)
    out = []
    for i in range(size):
        chunk = int.from_bytes(stream[8 * i : 8 * (i + 1)], "big")
        out.append(2.0 * (chunk / 2**64) - 1.0)

    return out


def sweep_values(start: float, stop: float, step: float) -> List[float]:
    """inclusive arithmetic sweep; empty when start > stop"""
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    if start > stop:
        return []
    count = int(math.floor((stop - start) / step + 1e-9)) + 1

    return [round(start + i * step, 12) for i in range(count)]
