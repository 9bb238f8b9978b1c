import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from ramanvis.core import SystemParams, build_liouvillian
from ramanvis.spectral import (
    EXACT_LABELS,
    char_det,
    closed_form_roots,
    decay_rates,
    gamma_sp_closed_form,
    gamma_sp_spectral,
    power_to_rabi,
    rabi_to_power,
    refine_root,
)

GAMMA = 1 / 0.76

params_st = st.builds(
    lambda om, g, ratio, g3: SystemParams(
        omega=om, gamma=g, branching=(ratio * g, (1 - ratio) * g), gamma3=g3
    ),
    st.floats(0.01, 5.0),
    st.floats(0.2, 5.0),
    st.floats(0.05, 0.95),
    st.floats(0.0, 2.0),
)


# -- closed form and power mapping -------------------------------------------


def test_closed_form_values():
    # 2 omega^2 = gamma^2 is the half-ceiling point
    assert gamma_sp_closed_form(GAMMA / math.sqrt(2), GAMMA) == pytest.approx(GAMMA / 8)
    assert gamma_sp_closed_form(math.sqrt(2) * GAMMA, GAMMA) == pytest.approx(GAMMA / 5)
    assert gamma_sp_closed_form(math.sqrt(2) * GAMMA, GAMMA) == pytest.approx(0.2632, abs=1e-4)
    assert gamma_sp_closed_form(math.sqrt(0.2) * GAMMA, GAMMA) == pytest.approx(GAMMA / 14)
    assert gamma_sp_closed_form(1e6, GAMMA) == pytest.approx(GAMMA / 4, rel=1e-9)


def test_power_mapping():
    assert power_to_rabi(0.0, GAMMA) == 0.0
    assert power_to_rabi(1.0, GAMMA) == pytest.approx(GAMMA / math.sqrt(2))
    # at saturation the closed-form rate is half its ceiling
    om = power_to_rabi(1.0, GAMMA)
    assert gamma_sp_closed_form(om, GAMMA) == pytest.approx(0.5 * GAMMA / 4)
    assert rabi_to_power(power_to_rabi(0.37, GAMMA), GAMMA) == pytest.approx(0.37)
    with pytest.raises(ValueError):
        power_to_rabi(-0.1, GAMMA)


# -- spectrum -----------------------------------------------------------------


@given(params_st)
@settings(max_examples=60, deadline=None)
def test_spectrum_structure(p):
    spec = decay_rates(p)
    r = spec.roots
    assert np.sum(np.abs(r) < 1e-9) == 1
    assert np.all(r[np.abs(r) >= 1e-9].real < 0)
    # closed under conjugation; defective double roots split by ~sqrt(eps) near the exceptional point
    gap = np.abs(r[:, None] - r.conj()[None, :]).min(axis=1)
    assert np.all(gap < 1e-6)
    assert spec.gamma_sp > 0


@given(params_st)
@settings(max_examples=60, deadline=None)
def test_exact_roots(p):
    spec = decay_rates(p)
    for label in EXACT_LABELS:
        # the double roots s6..s9 are defective at the exceptional point
        tol = 1e-8 if abs(p.xi**2 / 16 - p.omega**2 / 4) > 1e-3 else 1e-5
        assert abs(spec.numeric(label) - spec.closed(label)) < tol, label


@pytest.mark.parametrize("frac", [0.05, 0.2, 1.0, 2.0])
def test_s5_is_half_gamma_without_dephasing(frac):
    spec = decay_rates(SystemParams(omega=frac * GAMMA, gamma=GAMMA))
    assert spec.numeric("s5") == pytest.approx(-GAMMA / 2, abs=1e-9)


def test_s6_to_s9_at_weak_drive():
    p = SystemParams(omega=0.2 * GAMMA, gamma=GAMMA)
    spec = decay_rates(p)
    q = GAMMA / 4
    d = math.sqrt(q * q - p.omega**2 / 4)
    for label, val in (("s6", -q + d), ("s7", -q + d), ("s8", -q - d), ("s9", -q - d)):
        assert abs(spec.numeric(label) - val) < 1e-8


def test_strong_drive_mollow_roots():
    p = SystemParams(omega=2 * GAMMA, gamma=GAMMA)
    spec = decay_rates(p)
    for label, sign in (("s3", 1), ("s4", -1)):
        s = spec.numeric(label)
        assert abs(s.real / (-0.625 * GAMMA) - 1) < 0.10
        assert np.sign(s.imag) == sign


def test_gamma_sp_is_slowest_driven_mode():
    p = SystemParams(omega=0.4, gamma=GAMMA, gamma3=0.3)
    _, w = oracles.driven_quasi_steady(build_liouvillian(p).m)
    assert gamma_sp_spectral(p) == pytest.approx(-w.real, rel=1e-12)


def test_gamma_sp_zero_cases():
    assert gamma_sp_spectral(SystemParams(omega=0.0, gamma=GAMMA)) == 0.0
    assert gamma_sp_spectral(SystemParams(omega=0.5, gamma=GAMMA, branching=(0.0, GAMMA))) == 0.0


def test_gamma_sp_monotone_and_bounded():
    omegas = np.geomspace(1e-3, 50, 80) * GAMMA
    rates = np.array([gamma_sp_spectral(SystemParams(omega=o, gamma=GAMMA)) for o in omegas])
    assert np.all(np.diff(rates) > 0)
    assert np.all(rates <= GAMMA / 4 * (1 + 1e-12))


def test_gamma_sp_weak_drive_agrees_with_closed_form():
    # both expansions start at omega^2/(2 gamma); they part at second order
    p = SystemParams(omega=math.sqrt(0.005) * GAMMA, gamma=GAMMA)
    assert gamma_sp_spectral(p) == pytest.approx(gamma_sp_closed_form(p.omega, GAMMA), rel=0.01)


def test_gamma_sp_second_order_expansion():
    # slow eigenvalue ~ gamma (r/2 - r^2/4) with r = omega^2/gamma^2
    r = 1e-3
    p = SystemParams(omega=math.sqrt(r) * GAMMA, gamma=GAMMA)
    assert gamma_sp_spectral(p) / GAMMA == pytest.approx(0.5 * r - 0.25 * r**2, rel=1e-5)


def test_closed_form_labels_cover_all_roots():
    p = SystemParams(omega=0.3, gamma=GAMMA)
    spec = decay_rates(p)
    assert set(spec.labeled) == set(closed_form_roots(p))
    used = sorted((spec.numeric(k) for k in spec.labeled), key=lambda z: (z.real, z.imag))
    np.testing.assert_allclose(used, sorted(spec.roots, key=lambda z: (z.real, z.imag)), atol=1e-12)
    rows = spec.table()
    assert [r["label"] for r in rows] == [f"s{i}" for i in range(1, 10)]


# -- characteristic polynomial ------------------------------------------------


def test_char_det_vanishes_at_roots_and_matches_product():
    p = SystemParams(omega=0.9, gamma=GAMMA, gamma3=0.2)
    m = build_liouvillian(p).m
    roots = np.linalg.eigvals(m)
    s = 0.3 + 0.2j
    assert char_det(m, s) == pytest.approx(np.prod(s - roots), rel=1e-10)
    assert np.linalg.det(s * np.eye(9) - m) == pytest.approx(char_det(m, s), rel=1e-10)


def test_newton_refinement_recovers_roots():
    p = SystemParams(omega=0.7, gamma=GAMMA, gamma3=0.1)
    m = build_liouvillian(p).m
    spec = decay_rates(p)
    for label in ("s2", "s3", "s5"):
        target = spec.numeric(label)
        s = refine_root(m, target + 1e-3 * (1 + 1j))
        assert abs(s - spec.numeric(label)) < 1e-9 * max(1, abs(s))
