"""Physical constants, model parameters, presets and noise correlation kernels.

All quantities are SI. Kernels are one-dimensional restrictions of the
isotropic three-dimensional correlation functions and carry units of
s^-1 kg^-2, so that ``mass**2 * kernel(u)`` is a rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.special import digamma, erf, erfc

from .errors import InvalidParameter, UnknownPreset

__all__ = [
    "PhysicalConstants",
    "CODATA_2018",
    "ATOMIC_MASS_UNIT",
    "CslParams",
    "DpParams",
    "NoiseKernel",
    "ParameterPreset",
    "csl_kernel",
    "dp_kernel",
    "zero_kernel",
    "constant_kernel",
    "preset",
    "PRESETS",
]


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float  # J s
    G: float  # m^3 kg^-1 s^-2
    m0: float  # kg, reference nucleon mass

    def __post_init__(self):
        for name in ("hbar", "G", "m0"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise InvalidParameter(f"{name} must be positive and finite, got {value!r}")


# m0 is the proton mass; pass a different PhysicalConstants to use the neutron.
CODATA_2018 = PhysicalConstants(hbar=1.054571817e-34, G=6.67430e-11, m0=1.67262192369e-27)
ATOMIC_MASS_UNIT = 1.66053906660e-27


def _check_positive(name, value):
    if not (isinstance(value, (int, float, np.floating, np.integer)) and math.isfinite(value) and value > 0):
        raise InvalidParameter(f"{name} must be a positive finite number, got {value!r}")


@dataclass(frozen=True)
class CslParams:
    """CSL collapse rate ``lam`` (1/s) and correlation length ``rC`` (m)."""

    lam: float
    rC: float

    def __post_init__(self):
        _check_positive("lambda", self.lam)
        _check_positive("rC", self.rC)


@dataclass(frozen=True)
class DpParams:
    """Diosi-Penrose regularization length ``R0`` (m)."""

    R0: float

    def __post_init__(self):
        _check_positive("R0", self.R0)


ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class NoiseKernel:
    """Even, positive-semidefinite spatial correlation ``D(u)``.

    ``periodic(u, L)`` returns the kernel on a ring of circumference ``L``
    for minimum-image separations ``|u| <= L/2``. It may differ from an
    exact image sum by a constant, which has no dynamical effect (a
    spatially uniform noise component drops out of every collapse term).
    """

    evaluate: Callable[[ArrayLike], ArrayLike]
    value_at_zero: float
    curvature_at_zero: Optional[float]
    label: str
    periodic: Optional[Callable[[np.ndarray, float], np.ndarray]] = field(default=None, repr=False)
    correlation_length: Optional[float] = None

    def __call__(self, u):
        return self.evaluate(u)

    def on_ring(self, u, length):
        u = np.asarray(u, dtype=float)
        if self.periodic is not None:
            return self.periodic(u, length)
        return _generic_image_sum(self.evaluate, u, length)


def _generic_image_sum(evaluate, u, length, n_images=64):
    # Pairwise images with the constant D(kL) removed so slow tails converge.
    out = np.array(evaluate(u), dtype=float)
    for k in range(1, n_images + 1):
        shift = k * length
        out = out + evaluate(u + shift) + evaluate(u - shift) - 2.0 * evaluate(np.float64(shift))
    return out


def csl_kernel(p: CslParams, constants: PhysicalConstants = CODATA_2018) -> NoiseKernel:
    """Gaussian CSL correlation ``(lam/m0^2) exp(-u^2 / (4 rC^2))``."""
    if not isinstance(p, CslParams):
        raise InvalidParameter("csl_kernel expects CslParams")
    amp = p.lam / constants.m0**2
    rC = p.rC

    def evaluate(u):
        u = np.asarray(u, dtype=float)
        return amp * np.exp(-(u * u) / (4.0 * rC * rC))

    def periodic(u, length):
        u = np.asarray(u, dtype=float)
        # images beyond |u| > L/2 + 13 rC are below exp(-42) of the peak
        n_images = int(math.ceil(0.5 + 13.0 * rC / length)) + 1
        out = evaluate(u)
        for k in range(1, n_images + 1):
            out = out + evaluate(u + k * length) + evaluate(u - k * length)
        return out

    return NoiseKernel(
        evaluate=evaluate,
        value_at_zero=amp,
        curvature_at_zero=-amp / (2.0 * rC * rC),
        label=f"CSL(lambda={p.lam:g}, rC={p.rC:g})",
        periodic=periodic,
        correlation_length=rC,
    )


def dp_kernel(p: DpParams, constants: PhysicalConstants = CODATA_2018) -> NoiseKernel:
    """Gaussian-regularized Newtonian correlation ``(G/hbar) erf(|u|/2R0)/|u|``.

    Both mass-density arguments are smeared with a normalized Gaussian of
    width ``R0``; the two smearings combine into the ``2 R0`` inside erf.
    """
    if not isinstance(p, DpParams):
        raise InvalidParameter("dp_kernel expects DpParams")
    amp = constants.G / constants.hbar
    R0 = p.R0
    at_zero = amp / (math.sqrt(math.pi) * R0)

    def evaluate(u):
        u = np.abs(np.asarray(u, dtype=float))
        z = u / (2.0 * R0)
        safe = np.where(u == 0.0, 1.0, u)
        # below z = 1e-4 the two-term series is exact to double precision and avoids erf(z)/u rounding above the peak
        return np.where(z < 1e-4, at_zero * (1.0 - z * z / 3.0), amp * erf(z) / safe)

    def periodic(u, length):
        u = np.abs(np.asarray(u, dtype=float))
        a = u / length
        # Coulomb images in closed form (digamma), Gaussian corrections summed directly.
        out = evaluate(u) + amp * (-digamma(1.0 + a) - digamma(1.0 - a) - 2.0 * np.euler_gamma) / length
        n_images = int(math.ceil(0.5 + 13.0 * R0 / length)) + 1
        for k in range(1, n_images + 1):
            for shifted in (k * length + u, k * length - u):
                out = out - amp * erfc(shifted / (2.0 * R0)) / shifted
        return out

    # erf(z)/z = (2/sqrt(pi)) (1 - z^2/3 + ...), z = u/(2 R0)
    return NoiseKernel(
        evaluate=evaluate,
        value_at_zero=at_zero,
        curvature_at_zero=-at_zero / (6.0 * R0 * R0),
        label=f"DP(R0={p.R0:g})",
        periodic=periodic,
    )


def constant_kernel(value: float) -> NoiseKernel:
    """Fully correlated noise; it has no effect on the dynamics."""
    if not (value >= 0 and math.isfinite(value)):
        raise InvalidParameter(f"constant kernel value must be >= 0, got {value!r}")

    def evaluate(u):
        return np.full(np.shape(u), float(value)) if np.ndim(u) else float(value)

    return NoiseKernel(
        evaluate=evaluate,
        value_at_zero=float(value),
        curvature_at_zero=0.0,
        label=f"constant({value:g})",
        periodic=lambda u, length: np.full(np.shape(u), float(value)),
    )


def zero_kernel() -> NoiseKernel:
    k = constant_kernel(0.0)
    return NoiseKernel(k.evaluate, 0.0, 0.0, "zero", k.periodic)


@dataclass(frozen=True)
class ParameterPreset:
    name: str
    params: Union[CslParams, DpParams]
    provenance: str
    uncertainty_decades: Optional[float] = None

    @property
    def model(self) -> str:
        return "CSL" if isinstance(self.params, CslParams) else "DP"


PRESETS = {
    "GRW": ParameterPreset(
        "GRW", CslParams(1e-16, 1e-7), "Ghirardi, Rimini, Weber (1986)"
    ),
    "Adler-A": ParameterPreset(
        "Adler-A", CslParams(4e-8, 1e-7), "Adler (2007), central value", uncertainty_decades=2.0
    ),
    "Adler-B": ParameterPreset(
        "Adler-B", CslParams(1e-6, 1e-6), "Adler (2007), central value", uncertainty_decades=2.0
    ),
    "DP-Diosi": ParameterPreset(
        "DP-Diosi", DpParams(1e-15), "Diosi (1987), proton radius"
    ),
}


def preset(name: str) -> ParameterPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise UnknownPreset(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
