import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from raman_speckle.geometry import (
    C_LIGHT,
    CellGeometry,
    Kperp_to_angle,
    OpticalConstants,
    ParaxialError,
    angle_to_Kperp,
    fresnel_number,
    fundamental_mode_spread,
    longitudinal_mismatch,
    spin_wave_vector,
)

OC = OpticalConstants()
CG = CellGeometry()
paraxial = st.floats(-0.099, 0.099, allow_nan=False)


def test_wavenumbers_oracle():
    k_w = 2 * np.pi / 795e-9
    assert OC.k_w == pytest.approx(k_w, rel=1e-15)
    assert OC.k_s == pytest.approx(k_w - 2 * np.pi * 6.8e9 / C_LIGHT, rel=1e-15)
    assert OC.k_w > OC.k_s > 0


def test_longitudinal_mismatch_is_44mm_period():
    # [PAPER] |K_z| = 2 pi / 44 mm at 6.8 GHz
    kz = spin_wave_vector(0.0, OC)[2]
    assert kz == pytest.approx(-longitudinal_mismatch(OC))
    assert 2 * np.pi / abs(kz) == pytest.approx(44.1e-3, rel=2e-3)


def test_spin_wave_vector_on_axis():
    K = spin_wave_vector(0.0, OC)
    assert K[0] == 0.0 and K[1] == 0.0


def test_spin_wave_vector_one_mrad():
    # [DERIVED] k_s * sin(1e-3) with k_s from 795 nm
    assert spin_wave_vector(1e-3, OC)[0] == pytest.approx(7.903e3, rel=1e-3)


def test_angle_to_Kperp_paper_scale():
    # [PAPER] 2 pi theta / (0.8 mm mrad); 0.8 mm is rounded, hence 1%
    kx, ky = angle_to_Kperp(1e-3, 0.0, OC)
    assert kx == pytest.approx(2 * np.pi / 0.8e-3, rel=1e-2)
    assert ky == 0.0
    assert np.all(angle_to_Kperp(0.0, 0.0, OC) == 0.0)


@given(paraxial, paraxial)
def test_angle_K_round_trip(tx, ty):
    back = Kperp_to_angle(*angle_to_Kperp(tx, ty, OC), OC)
    assert back[0] == pytest.approx(tx, rel=1e-12, abs=1e-18)
    assert back[1] == pytest.approx(ty, rel=1e-12, abs=1e-18)


@given(paraxial)
def test_spin_wave_vector_parity(theta):
    a, b = spin_wave_vector(theta, OC), spin_wave_vector(-theta, OC)
    assert a[0] == -b[0]
    assert a[2] == b[2]


@given(paraxial)
def test_transverse_part_matches_Kperp(theta):
    kx = spin_wave_vector(theta, OC)[0]
    ref = angle_to_Kperp(theta, 0.0, OC)[0]
    # sin(theta) vs theta differ by theta^2/6 < 1.7e-3 at the paraxial limit
    assert abs(kx) == pytest.approx(abs(ref) * np.sin(theta) / theta if theta else 0.0, rel=1e-9, abs=1e-12)


def test_paraxial_guard():
    with pytest.raises(ParaxialError):
        spin_wave_vector(0.1, OC)
    with pytest.raises(ParaxialError):
        angle_to_Kperp(0.0, -0.2, OC)
    with pytest.raises(ParaxialError):
        Kperp_to_angle(0.2 * OC.k_s, 0.0, OC)


def test_fresnel_number_paper_value():
    # [PAPER] F = 15 for w = 1.08 mm, L = 100 mm
    assert fresnel_number(1.08e-3, OC, CG) == pytest.approx(15.0, rel=0.03)
    # [DERIVED] F scales as w^2
    assert fresnel_number(2.16e-3, OC, CG) == pytest.approx(4 * fresnel_number(1.08e-3, OC, CG), rel=1e-14)
    assert fresnel_number(2.16e-3, OC, CG) == pytest.approx(59, rel=0.01)
    assert fresnel_number(0.0, OC, CG) == 0.0


@given(st.floats(1e-5, 1e-2), st.floats(1e-5, 1e-2), st.floats(1e-3, 1.0))
def test_fresnel_monotone(w1, w2, L):
    cg = CellGeometry(length_L=L)
    lo, hi = sorted((w1, w2))
    assert fresnel_number(lo, OC, cg) <= fresnel_number(hi, OC, cg)
    assert fresnel_number(hi, OC, CellGeometry(length_L=2 * L)) < fresnel_number(hi, OC, cg)


def test_fundamental_spread():
    dK, full = fundamental_mode_spread(OC, CG)
    assert dK == pytest.approx(np.sqrt(OC.k_s / 0.1), rel=1e-15)
    # [PAPER] full angular spread 2.3 mrad
    assert full == pytest.approx(2.3e-3, rel=0.03)
    # [DERIVED] half spread 1/sqrt(k_s L)
    assert full / 2 == pytest.approx(1.125e-3, rel=2e-3)
    # L -> infinity: dK -> 0 as L^-1/2
    assert fundamental_mode_spread(OC, CellGeometry(length_L=1e3))[0] == pytest.approx(dK * 1e-2, rel=1e-12)


def test_invalid_constants():
    with pytest.raises(ValueError):
        OpticalConstants(lambda_write=-1.0)
    with pytest.raises(ValueError):
        CellGeometry(length_L=0.0)
    with pytest.raises(ValueError):
        CellGeometry(beam_tilt=-1e-3)
