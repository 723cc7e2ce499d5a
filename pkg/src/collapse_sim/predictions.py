"""Closed-form CSL predictions: interference contrast loss and bulk heating."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .errors import InvalidParameter
from .physics import CODATA_2018, CslParams, PhysicalConstants

__all__ = [
    "InterferometricSetup",
    "HeatingSetup",
    "contrast_bracket",
    "contrast_reduction",
    "heating_power",
    "SERIES_THRESHOLD",
]

SERIES_THRESHOLD = 1e-4
_SQRT_PI_2 = 0.5 * math.sqrt(math.pi)


def _positive(name, value, allow_zero=False):
    ok = value >= 0 if allow_zero else value > 0
    if not (ok and math.isfinite(value)):
        raise InvalidParameter(f"{name} must be {'non-negative' if allow_zero else 'positive'} and finite, got {value!r}")


@dataclass(frozen=True)
class InterferometricSetup:
    mass: float  # kg
    flight_time: float  # s
    separation: float  # m

    def __post_init__(self):
        _positive("mass", self.mass)
        _positive("flight_time", self.flight_time)
        # zero separation is the trivial limit and is accepted
        _positive("separation", self.separation, allow_zero=True)


@dataclass(frozen=True)
class HeatingSetup:
    mass: float  # kg

    def __post_init__(self):
        _positive("mass", self.mass)


def contrast_bracket(separation, rC):
    """``1 - (sqrt(pi)/2) erf(u)/u`` with ``u = separation / (2 rC)``.

    Below ``u = 1e-4`` the four-term Taylor series ``u^2/3 - u^4/10 + u^6/42
    - u^8/216`` replaces the erf form, which loses digits to cancellation.
    """
    u = np.asarray(separation, dtype=float) / (2.0 * rC)
    small = u < SERIES_THRESHOLD
    safe = np.where(small, 1.0, u)
    u2 = u * u
    series = u2 * (1.0 / 3.0 - u2 * (1.0 / 10.0 - u2 * (1.0 / 42.0 - u2 / 216.0)))
    out = np.where(small, series, 1.0 - _SQRT_PI_2 * erf(safe) / safe)
    return out if out.ndim else float(out)


def contrast_reduction(p: CslParams, s: InterferometricSetup, constants: PhysicalConstants = CODATA_2018) -> float:
    """Factor by which CSL reduces the interference contrast, in (0, 1]."""
    rate = p.lam * (s.mass / constants.m0) ** 2
    return math.exp(-rate * s.flight_time * contrast_bracket(s.separation, p.rC))


def heating_power(p: CslParams, s: HeatingSetup, constants: PhysicalConstants = CODATA_2018) -> float:
    """CSL heating power ``(3/4) hbar^2 lam m / (m0^2 rC^2)`` in W."""
    return 0.75 * constants.hbar**2 * p.lam * s.mass / (constants.m0**2 * p.rC**2)
