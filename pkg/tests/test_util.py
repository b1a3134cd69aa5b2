import logging
import math
from fractions import Fraction

import pytest

from feqstab.util import (
    LOGGER_NAME,
    __app_name__,
    format_fraction,
    format_real,
    oscillate,
    sweep_values,
    to_fraction,
)

logger = logging.getLogger(LOGGER_NAME)


def test_app_name():
    assert __app_name__ == LOGGER_NAME == "feqstab"


def test_to_fraction():
    assert to_fraction(0.5) == Fraction(1, 2)
    assert to_fraction("2/5") == Fraction(2, 5)
    assert to_fraction(Fraction(3, 7)) == Fraction(3, 7)
    # floats keep every bit
    assert to_fraction(0.1) != Fraction(1, 10)
    with pytest.raises(ValueError):
        to_fraction(math.inf)


def test_format_fraction():
    assert format_fraction(Fraction(-1, 5)) == "-1/5"
    assert format_fraction(Fraction(2), signed=True) == "+2"
    assert format_fraction(Fraction(-2), signed=True) == "-2"


@pytest.mark.parametrize("value", [0.05308416, 1 / 3, 1e-300, 2.5e20, 0.1 + 0.2])
def test_format_real_round_trip(value):
    assert float(format_real(value)) == value


def test_format_real_integers():
    assert format_real(8.0) == "8"
    assert format_real(-3) == "-3"


def test_oscillate():
    values = oscillate(1, [0.5, -1.0], 16)
    assert len(values) == 16
    assert all(-1 <= x < 1 for x in values)
    assert values == oscillate(1, [0.5, -1.0], 16)
    assert values != oscillate(2, [0.5, -1.0], 16)
    assert values != oscillate(1, [0.5, -1.0000000000000002], 16)
    # longer requests extend shorter ones
    assert oscillate(1, [0.5, -1.0], 4) == values[:4]


def test_sweep_values():
    assert sweep_values(3.0, 5.0, 0.5) == [3.0, 3.5, 4.0, 4.5, 5.0]
    assert sweep_values(0.1, 0.3, 0.1) == [0.1, 0.2, 0.3]
    assert sweep_values(2.0, 1.0, 0.5) == []
    with pytest.raises(ValueError):
        sweep_values(1.0, 2.0, 0)
