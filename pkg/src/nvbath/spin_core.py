"""Constants and first-order resonance calculators for diamond defect EPR.

Covers the two species seen in type-Ib diamond: the substitutional nitrogen
center (electron spin 1/2, hyperfine-coupled to its own 14N nucleus) and the
nitrogen-vacancy center (electron spin 1, zero-field splitting D). At 8.5 T
the electron Zeeman energy exceeds the zero-field and hyperfine terms by
roughly two orders of magnitude, so line positions are evaluated to first
order in those terms. All functions are pure and all units are SI: fields in
tesla, frequencies in hertz, temperatures in kelvin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace


@dataclass(frozen=True)
class PhysicalConstants:
    """Exact SI-2019 values; immutable by construction."""

    planck_h: float = 6.62607015e-34  # J s
    bohr_magneton: float = 9.2740100783e-24  # J / T
    boltzmann_k: float = 1.380649e-23  # J / K


CONSTANTS = PhysicalConstants()

ORIENTATION_LABELS = ("o111", "oA", "oB", "oC")

# Unit axes of the four <111> defect orientations, cubic crystal frame.
_AXES = (
    (1.0, 1.0, 1.0),
    (1.0, -1.0, -1.0),
    (-1.0, 1.0, -1.0),
    (-1.0, -1.0, 1.0),
)

# A tilt exactly in a {110} plane leaves two off-axis orientations degenerate;
# a generic azimuth splits all three.
DEFAULT_TILT_AZIMUTH_DEG = 15.0


@dataclass(frozen=True)
class CenterParams:
    """Static spin-Hamiltonian parameters of one defect species.

    Parameters
    ----------
    label:
        Species tag, ``"N"`` or ``"NV"``.
    spin:
        Electron spin quantum number, 0.5 or 1.0.
    g_parallel, g_perp:
        g-factor along and perpendicular to the defect axis. The effective
        g for an orientation at angle theta to the field is
        ``sqrt(g_parallel**2 cos^2 + g_perp**2 sin^2)``.
    zero_field_d:
        Axial zero-field splitting in Hz (0 for the nitrogen center).
    hyperfine_111, hyperfine_other:
        14N hyperfine splitting in Hz for the orientation parallel to the
        field and for the three inclined orientations.
    linewidth_pp:
        Peak-to-peak width of the derivative line, tesla.
    nuclear_spin:
        Nuclear spin quantum number of the coupled nucleus (1 for 14N).
    """

    label: str
    spin: float
    g_parallel: float
    g_perp: float
    zero_field_d: float
    hyperfine_111: float
    hyperfine_other: float
    linewidth_pp: float
    nuclear_spin: float = 1.0

    def __post_init__(self) -> None:
        if self.label not in ("N", "NV"):
            raise ValueError(f"unknown center label {self.label!r}")
        if self.spin not in (0.5, 1.0):
            raise ValueError(f"electron spin must be 0.5 or 1.0, got {self.spin}")
        if self.g_parallel <= 0 or self.g_perp <= 0:
            raise ValueError("g-factors must be positive")
        if self.zero_field_d < 0:
            raise ValueError("zero-field splitting must be non-negative")
        if self.hyperfine_111 < 0 or self.hyperfine_other < 0:
            raise ValueError("hyperfine splittings must be non-negative")
        if self.linewidth_pp <= 0:
            raise ValueError("peak-to-peak linewidth must be positive")
        if self.nuclear_spin < 0 or (2 * self.nuclear_spin) % 1:
            raise ValueError(f"bad nuclear spin {self.nuclear_spin}")

    def replace(self, **overrides) -> "CenterParams":
        """Copy with selected fields overridden."""
        return replace(self, **overrides)


# The perpendicular g of the nitrogen center is measured slightly above the
# parallel value (up to about 2.0026). The default keeps g isotropic so the
# m_i = 0 lines of all four orientations coincide, which is what the default
# five-line spectrum assumes; set g_perp per run to model the anisotropy.
N_DEFAULT = CenterParams(
    label="N",
    spin=0.5,
    g_parallel=2.0024,
    g_perp=2.0024,
    zero_field_d=0.0,
    hyperfine_111=114e6,
    hyperfine_other=86e6,
    linewidth_pp=0.95e-4,
)

NV_DEFAULT = CenterParams(
    label="NV",
    spin=1.0,
    g_parallel=2.0028,
    g_perp=2.0028,
    zero_field_d=2.87e9,
    hyperfine_111=2.2e6,
    hyperfine_other=2.2e6,
    linewidth_pp=2.36e-4,
)


@dataclass(frozen=True)
class Orientation:
    """One defect axis relative to the applied field."""

    axis_label: str
    cos_theta: float
    degeneracy: int = 1

    def __post_init__(self) -> None:
        if self.axis_label not in ORIENTATION_LABELS:
            raise ValueError(f"unknown axis label {self.axis_label!r}")
        if not -1.0 <= self.cos_theta <= 1.0:
            raise ValueError(f"cos_theta outside [-1, 1]: {self.cos_theta}")
        if self.degeneracy < 1:
            raise ValueError("degeneracy must be >= 1")


@dataclass(frozen=True)
class TransitionSpec:
    """A single allowed EPR transition of one center and orientation.

    ``m_s_low`` and ``m_s_high`` are the lower- and upper-energy electron
    projections (``m_s_high = m_s_low + 1`` at positive field and g), and
    ``m_i`` is the spectator nuclear projection.
    """

    center: CenterParams
    orientation: Orientation
    m_s_low: float
    m_s_high: float
    m_i: float

    def __post_init__(self) -> None:
        if abs(self.m_s_high - self.m_s_low - 1.0) > 1e-12:
            raise ValueError("m_s_high must equal m_s_low + 1")
        s = self.center.spin
        if abs(self.m_s_low) > s or abs(self.m_s_high) > s:
            raise ValueError(f"m_s projections exceed spin {s}")
        i = self.center.nuclear_spin
        if abs(self.m_i) > i or (self.m_i - i) % 1:
            raise ValueError(f"bad nuclear projection {self.m_i} for I = {i}")


def zeeman_temperature(frequency: float) -> float:
    """Electron Zeeman energy of a resonant spin expressed in kelvin.

    ``h * frequency / k_B``; 240 GHz maps to 11.52 K, which is why the
    nitrogen bath polarizes at liquid-helium temperatures.
    """
    if frequency <= 0:
        raise ValueError(f"frequency must be positive, got {frequency}")
    return CONSTANTS.planck_h * frequency / CONSTANTS.boltzmann_k


def field_to_frequency(field: float, g: float) -> float:
    """Zeeman resonance frequency (Hz) of a free spin with g-factor g."""
    if field < 0:
        raise ValueError(f"field must be non-negative, got {field}")
    if g <= 0:
        raise ValueError(f"g must be positive, got {g}")
    return g * CONSTANTS.bohr_magneton * field / CONSTANTS.planck_h


def frequency_to_field(frequency: float, g: float) -> float:
    """Inverse of :func:`field_to_frequency`."""
    if frequency < 0:
        raise ValueError(f"frequency must be non-negative, got {frequency}")
    if g <= 0:
        raise ValueError(f"g must be positive, got {g}")
    return CONSTANTS.planck_h * frequency / (g * CONSTANTS.bohr_magneton)


def effective_g(g_parallel: float, g_perp: float, cos_theta: float) -> float:
    """Orientation-dependent g for an axial center."""
    if not -1.0 <= cos_theta <= 1.0:
        raise ValueError(f"cos_theta outside [-1, 1]: {cos_theta}")
    c2 = cos_theta * cos_theta
    return math.sqrt(g_parallel * g_parallel * c2 + g_perp * g_perp * (1.0 - c2))


def zfs_first_order_shift(
    zero_field_d: float, cos_theta: float, m_s_low: float, m_s_high: float
) -> float:
    """First-order zero-field shift of a line position, in frequency units.

    Returns ``D * (3 cos^2 - 1)/2 * (m_s_low^2 - m_s_high^2)`` with the sign
    convention that positive values move the resonance to higher field at
    fixed spectrometer frequency. For the |0> <-> |-1> transition at
    cos_theta = 1 the shift is +D, placing that line on the high-field side;
    at the magic angle the shift vanishes for every transition.
    """
    if not -1.0 <= cos_theta <= 1.0:
        raise ValueError(f"cos_theta outside [-1, 1]: {cos_theta}")
    angular = 0.5 * (3.0 * cos_theta * cos_theta - 1.0)
    return zero_field_d * angular * (m_s_low * m_s_low - m_s_high * m_s_high)


def resonance_field(transition: TransitionSpec, frequency: float) -> float:
    """Resonance field (T) of one transition at the given spectrometer frequency.

    First order in the zero-field and hyperfine terms:
    ``B = (frequency + zfs_shift - m_i * A_eff) * h / (g_eff * mu_B)``.
    The hyperfine constant is selected by orientation (the parallel axis
    uses ``hyperfine_111``, the inclined ones ``hyperfine_other``).

    Raises
    ------
    ValueError
        If the requested frequency is at or below the combined zero-field
        and hyperfine offset, which has no positive-field solution.
    """
    if frequency <= 0:
        raise ValueError(f"frequency must be positive, got {frequency}")
    center = transition.center
    orient = transition.orientation
    g = effective_g(center.g_parallel, center.g_perp, orient.cos_theta)
    if orient.axis_label == "o111":
        a_eff = center.hyperfine_111
    else:
        a_eff = center.hyperfine_other
    shift = zfs_first_order_shift(
        center.zero_field_d, orient.cos_theta, transition.m_s_low, transition.m_s_high
    )
    nu_eff = frequency + shift - transition.m_i * a_eff
    if nu_eff <= 0:
        raise ValueError(
            f"no positive resonance field: frequency {frequency:g} Hz does not "
            f"exceed the first-order offset {shift - transition.m_i * a_eff:g} Hz "
            f"of transition ({transition.m_s_low:g} -> {transition.m_s_high:g}, "
            f"m_i = {transition.m_i:g})"
        )
    return frequency_to_field(nu_eff, g)


def tetrahedral_orientations(
    tilt_deg: float = 0.0, azimuth_deg: float = DEFAULT_TILT_AZIMUTH_DEG
) -> tuple[Orientation, ...]:
    """The four <111> defect orientations for a field tilted from <111>.

    At zero tilt one orientation has cos_theta = 1 and the other three have
    exactly -1/3. ``tilt_deg`` rotates the field away from the first axis;
    ``azimuth_deg`` picks the rotation plane (a generic value splits the
    three inclined orientations into three distinct angles).
    """
    if not 0.0 <= tilt_deg < 90.0:
        raise ValueError(f"tilt must lie in [0, 90) degrees, got {tilt_deg}")
    if tilt_deg == 0.0:
        third = -1.0 / 3.0
        return (
            Orientation("o111", 1.0),
            Orientation("oA", third),
            Orientation("oB", third),
            Orientation("oC", third),
        )
    axes = [tuple(x / math.sqrt(3.0) for x in axis) for axis in _AXES]
    n1 = axes[0]
    # In-plane unit vector toward axis 2, and its normal, spanning the
    # plane perpendicular to n1.
    dot12 = sum(a * b for a, b in zip(n1, axes[1]))
    u = tuple(a - dot12 * b for a, b in zip(axes[1], n1))
    norm_u = math.sqrt(sum(x * x for x in u))
    u = tuple(x / norm_u for x in u)
    v = (
        n1[1] * u[2] - n1[2] * u[1],
        n1[2] * u[0] - n1[0] * u[2],
        n1[0] * u[1] - n1[1] * u[0],
    )
    tilt = math.radians(tilt_deg)
    azim = math.radians(azimuth_deg)
    trans = math.sin(tilt)
    b_hat = tuple(
        math.cos(tilt) * n1[k] + trans * (math.cos(azim) * u[k] + math.sin(azim) * v[k])
        for k in range(3)
    )
    out = []
    for label, axis in zip(ORIENTATION_LABELS, axes):
        cos_theta = sum(a * b for a, b in zip(b_hat, axis))
        out.append(Orientation(label, max(-1.0, min(1.0, cos_theta))))
    return tuple(out)


def observed_transitions(center: CenterParams) -> tuple[tuple[float, float], ...]:
    """(m_s_low, m_s_high) pairs of the transitions in the measured window.

    The nitrogen center has its single spin-1/2 transition. For the
    nitrogen-vacancy center only the |-1> <-> |0> branch is returned; the
    |0> <-> |+1> branch sits 2 D away in field and is outside the scanned
    window at the default configuration.
    """
    if center.spin == 0.5:
        return ((-0.5, 0.5),)
    return ((-1.0, 0.0),)
