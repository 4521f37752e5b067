"""Wave-vector bookkeeping for the write/read Raman geometry.

Conventions: the write beam propagates along +z, angles are paraxial and
stored in radians, wavenumbers in rad/m. The anti-Stokes and read wave
vectors are taken equal in magnitude to the Stokes and write ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

C_LIGHT = 299_792_458.0
PARAXIAL_LIMIT = 0.1


class ParaxialError(ValueError):
    """Raised for angles outside the paraxial domain."""


def _check_paraxial(*angles):
    for a in angles:
        if np.any(np.abs(np.asarray(a, dtype=float)) >= PARAXIAL_LIMIT):
            raise ParaxialError(f"angle {a!r} rad outside paraxial range |theta| < {PARAXIAL_LIMIT}")


@dataclass(frozen=True)
class OpticalConstants:
    lambda_write: float = 795e-9
    stokes_shift: float = 6.8e9

    def __post_init__(self):
        if self.lambda_write <= 0:
            raise ValueError("lambda_write must be positive")
        if self.k_s <= 0:
            raise ValueError("Stokes shift too large: k_s <= 0")

    @property
    def k_w(self) -> float:
        return 2 * np.pi / self.lambda_write

    @property
    def k_s(self) -> float:
        return self.k_w - 2 * np.pi * self.stokes_shift / C_LIGHT


@dataclass(frozen=True)
class CellGeometry:
    """Pencil-shaped interaction region.

    Beam sizes are 1/e^2 full diameters, as quoted for the lasers.
    """

    length_L: float = 0.100
    write_waist_diameter: float = 2.16e-3
    read_waist_diameter: float = 1.76e-3
    beam_tilt: float = 13e-3

    def __post_init__(self):
        if min(self.length_L, self.write_waist_diameter, self.read_waist_diameter) <= 0:
            raise ValueError("cell lengths must be positive")
        if self.beam_tilt < 0:
            raise ValueError("beam tilt must be non-negative")

    @property
    def write_waist_radius(self) -> float:
        return self.write_waist_diameter / 2


def spin_wave_vector(theta, oc: OpticalConstants) -> np.ndarray:
    """Spin-wave wave vector created by a Stokes photon scattered at `theta`.

    Returns ``[k_s sin(theta), 0, k_s cos(theta) - k_w]``; for an array of
    angles the last axis holds the three components.
    """
    _check_paraxial(theta)
    theta = np.asarray(theta, dtype=float)
    return np.stack(
        [oc.k_s * np.sin(theta), np.zeros_like(theta), oc.k_s * np.cos(theta) - oc.k_w], axis=-1
    )


def longitudinal_mismatch(oc: OpticalConstants) -> float:
    """|K_z| common to all stored spin waves (k_w - k_s)."""
    return oc.k_w - oc.k_s


def angle_to_Kperp(theta_x, theta_y, oc: OpticalConstants) -> np.ndarray:
    _check_paraxial(theta_x, theta_y)
    return oc.k_s * np.stack([np.asarray(theta_x, float), np.asarray(theta_y, float)], axis=-1)


def Kperp_to_angle(kx, ky, oc: OpticalConstants) -> np.ndarray:
    out = np.stack([np.asarray(kx, float), np.asarray(ky, float)], axis=-1) / oc.k_s
    _check_paraxial(out)
    return out


def fresnel_number(waist_radius: float, oc: OpticalConstants, cg: CellGeometry) -> float:
    """F = k_s w^2 / (2 pi L)."""
    if waist_radius < 0:
        raise ValueError("waist radius must be non-negative")
    return oc.k_s * waist_radius**2 / (2 * np.pi * cg.length_L)


def fundamental_mode_spread(oc: OpticalConstants, cg: CellGeometry) -> tuple[float, float]:
    """Width of the fundamental spin-wave mode.

    Returns ``(delta_K, full_angle)`` where ``delta_K = sqrt(k_s / L)`` and
    ``full_angle = 2 delta_K / k_s`` is the full angular spread in radians.
    """
    dK = float(np.sqrt(oc.k_s / cg.length_L))
    return dK, 2 * dK / oc.k_s
