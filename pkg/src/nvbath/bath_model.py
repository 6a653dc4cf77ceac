"""Thermal polarization and relaxation-rate models for the nitrogen bath.

The bath spins are two-level systems with Zeeman splitting ``T_Ze`` kelvin
(``h nu / k_B``, about 11.5 K at 240 GHz). Cooling below that scale freezes
the bath into its ground state, which quenches the energy-conserving
flip-flop dynamics responsible for decoherence of a probe spin. Two closed
forms capture the temperature dependence:

* decoherence rate ``1/T2 = C * P_down * P_up + Gamma_res`` (per microsecond),
  where ``P_down * P_up`` is the probability factor for a bath pair to
  flip-flop and ``Gamma_res`` is the residual rate from the 13C nuclear bath;
* spin-lattice rate ``1/T1 = A*T + B*T**5`` (per second), a direct phonon
  term plus a two-phonon Raman term.

Scalar inputs, scalar outputs; temperature grids are handled by callers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .spin_core import zeeman_temperature

__all__ = [
    "BathModelParams",
    "DEFAULT_T1_PARAMS",
    "DEFAULT_T2_PARAMS",
    "PolarizationPoint",
    "T1ModelParams",
    "T2ModelParams",
    "flip_flop_factor",
    "polarization",
    "t1_rate",
    "t1_time",
    "t2_rate",
    "t2_time",
    "zeeman_temperature",
]


@dataclass(frozen=True)
class T2ModelParams:
    """Constants of the flip-flop decoherence model (rates in 1/us)."""

    c_per_us: float
    t_zeeman_k: float
    gamma_res_per_us: float

    def __post_init__(self) -> None:
        if self.c_per_us < 0:
            raise ValueError("flip-flop prefactor must be non-negative")
        if self.t_zeeman_k <= 0:
            raise ValueError("Zeeman temperature must be positive")
        if self.gamma_res_per_us < 0:
            raise ValueError("residual rate must be non-negative")


@dataclass(frozen=True)
class T1ModelParams:
    """Constants of the phonon relaxation model (rates in 1/s)."""

    a_per_s_k: float
    b_per_s_k5: float

    def __post_init__(self) -> None:
        if self.a_per_s_k < 0 or self.b_per_s_k5 < 0:
            raise ValueError("phonon coefficients must be non-negative")

    @property
    def crossover_temperature_k(self) -> float:
        """Temperature where the direct and Raman terms are equal."""
        if self.a_per_s_k == 0 or self.b_per_s_k5 == 0:
            raise ValueError("crossover undefined when a coefficient is zero")
        return (self.a_per_s_k / self.b_per_s_k5) ** 0.25


@dataclass(frozen=True)
class BathModelParams:
    """Bundle of both relaxation models for one sample."""

    t2: T2ModelParams
    t1: T1ModelParams


# Reference constants for the type-Ib sample the models were calibrated on.
# C reproduces T2 = 6.7 us at 300 K after subtracting the 13C residual rate
# of 0.004 /us (250 us saturation value).
DEFAULT_T2_PARAMS = T2ModelParams(
    c_per_us=0.58136, t_zeeman_k=14.7, gamma_res_per_us=0.004
)
DEFAULT_T1_PARAMS = T1ModelParams(a_per_s_k=8.0e-3, b_per_s_k5=3.5e-10)
DEFAULT_PARAMS = BathModelParams(t2=DEFAULT_T2_PARAMS, t1=DEFAULT_T1_PARAMS)


@dataclass(frozen=True)
class PolarizationPoint:
    """Thermal state of the two-level bath at one temperature."""

    temperature_k: float
    t_zeeman_k: float
    polarization: float
    p_lower: float
    p_upper: float


def polarization(temperature: float, t_zeeman: float) -> PolarizationPoint:
    """Boltzmann polarization of the bath, ``tanh(T_Ze / 2T)``.

    Parameters
    ----------
    temperature:
        Lattice temperature in kelvin, > 0.
    t_zeeman:
        Zeeman splitting in kelvin, > 0.
    """
    _check_temperatures(temperature, t_zeeman)
    x = t_zeeman / temperature
    # exp(-x) keeps both level populations finite for arbitrarily cold baths.
    e = math.exp(-x)
    p_lower = 1.0 / (1.0 + e)
    p_upper = e / (1.0 + e)
    return PolarizationPoint(
        temperature_k=temperature,
        t_zeeman_k=t_zeeman,
        polarization=math.tanh(0.5 * x),
        p_lower=p_lower,
        p_upper=p_upper,
    )


def flip_flop_factor(temperature: float, t_zeeman: float) -> float:
    """Pair flip-flop probability factor ``P_down * P_up = 1/(2 + 2 cosh(T_Ze/T))``.

    Equals ``(1 - p**2)/4`` for polarization p: 1/4 in the hot limit, and
    exponentially small once the bath freezes out.
    """
    _check_temperatures(temperature, t_zeeman)
    x = t_zeeman / temperature
    # e^-x form is overflow-safe for any positive x.
    e = math.exp(-x)
    return e / ((1.0 + e) * (1.0 + e))


def t2_rate(temperature: float, params: T2ModelParams = DEFAULT_T2_PARAMS) -> float:
    """Decoherence rate 1/T2 in 1/us: ``C * flip_flop + Gamma_res``."""
    return (
        params.c_per_us * flip_flop_factor(temperature, params.t_zeeman_k)
        + params.gamma_res_per_us
    )


def t2_time(temperature: float, params: T2ModelParams = DEFAULT_T2_PARAMS) -> float:
    """Coherence time T2 in seconds."""
    return 1e-6 / t2_rate(temperature, params)


def t1_rate(temperature: float, params: T1ModelParams = DEFAULT_T1_PARAMS) -> float:
    """Spin-lattice rate 1/T1 in 1/s: ``A*T + B*T**5``."""
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    t = temperature
    return params.a_per_s_k * t + params.b_per_s_k5 * t**5


def t1_time(temperature: float, params: T1ModelParams = DEFAULT_T1_PARAMS) -> float:
    """Spin-lattice time T1 in seconds."""
    rate = t1_rate(temperature, params)
    if rate == 0:
        raise ValueError("T1 undefined for zero total rate")
    return 1.0 / rate


def _check_temperatures(temperature: float, t_zeeman: float) -> None:
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    if t_zeeman <= 0:
        raise ValueError(f"Zeeman temperature must be positive, got {t_zeeman}")
