# This is a place to hold mere utilities for the simulator

import math
from fractions import Fraction
from typing import Sequence, Union

import numpy as np
from scipy import stats

Number = Union[int, float, Fraction]

PS_PER_SECOND = 10**12
FIXED_POINT_FRACTION_BITS = 16


## Some useful functions
def convert_time(val, unit_in, unit_out):
    si = {
        "picosecond": 1e-12,
        "nanosecond": 1e-9,
        "microsecond": 1e-6,
        "millisecond": 1e-3,
        "second": 1.0,
    }
    return val * si[unit_in.lower()] / si[unit_out.lower()]


def to_fraction(value: Number) -> Fraction:
    """Exact rational for a config number. Floats go through their repr so that 0.8 is 4/5."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    return Fraction(repr(float(value)))


def ceil_div(value: int, rate: Fraction) -> int:
    """ceil(value / rate) in integer arithmetic"""
    if rate <= 0:
        raise ValueError("rate must be positive")
    return -((-value * rate.denominator) // rate.numerator)


def cycles_to_ps(cycles: int, freq_hz: Number) -> int:
    """Converts device cycles to global picoseconds, rounding up"""
    if cycles <= 0:
        return 0
    return ceil_div(cycles * PS_PER_SECOND, to_fraction(freq_hz))


def ps_to_cycles(ps: int, freq_hz: Number) -> Fraction:
    """Converts picoseconds to (fractional) device cycles"""
    return Fraction(ps) * to_fraction(freq_hz) / PS_PER_SECOND


def saturating_increment(value: int, maximum: int) -> int:
    return value + 1 if value < maximum else maximum


def saturating_decrement(value: int, minimum: int = 0) -> int:
    return value - 1 if value > minimum else minimum


def to_fixed_point(value: Number, fraction_bits: int = FIXED_POINT_FRACTION_BITS) -> int:
    """Fixed point encoding with rounding toward zero"""
    scaled = to_fraction(value) * (1 << fraction_bits)
    return math.trunc(scaled)


def from_fixed_point(value: int, fraction_bits: int = FIXED_POINT_FRACTION_BITS) -> Fraction:
    return Fraction(value, 1 << fraction_bits)


def keyed_generator(seed: int, *keys: int) -> np.random.Generator:
    """
    A counter-based generator: the same (seed, keys) always yields the same stream,
    independently of how many draws happened elsewhere.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), *[int(k) for k in keys]]))


def coefficient_of_variation(values: Sequence[float]) -> float:
    """
    Population coefficient of variation (standard deviation over mean).
    Parameters
    ----------
    values : Sequence[float]
        samples, typically one per speculative iteration.
    Returns
    -------
    cv : float
        0.0 for fewer than two samples or a zero mean.
    """
    if len(values) < 2:
        return 0.0
    array = np.asarray(values, dtype=float)
    if np.isclose(array.mean(), 0.0):
        return 0.0
    return float(stats.variation(array))
