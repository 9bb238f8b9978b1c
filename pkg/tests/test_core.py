import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from ramanvis.core import (
    DRIVEN_SLOTS,
    DensityMatrix,
    InvalidParameters,
    SystemParams,
    build_liouvillian,
    evolve,
    quasi_steady_ratio,
    quasi_steady_state,
    rates_from_lifetimes,
    slot,
)
from ramanvis.integrate import IntegrationError, propagate
from ramanvis.spectral import power_to_rabi

T1 = 0.76
GAMMA = 1 / T1

rates = st.floats(0.05, 5.0)
params_st = st.builds(
    lambda om, g31, g32, g3: SystemParams(omega=om, gamma=g31 + g32, branching=(g31, g32), gamma3=g3),
    st.floats(0.01, 5.0),
    rates,
    rates,
    st.floats(0.0, 2.0),
)


def _random_density(rng):
    a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    rho = a @ a.conj().T
    return DensityMatrix(rho / np.trace(rho))


# -- parameters ---------------------------------------------------------------


def test_rates_from_lifetimes_radiative_limit():
    gamma, gamma3 = rates_from_lifetimes(T1)
    assert gamma == pytest.approx(1 / 0.76)
    assert gamma3 == 0.0


def test_rates_from_lifetimes_rejects_t2_above_2t1():
    with pytest.raises(InvalidParameters):
        rates_from_lifetimes(1.0, 2.1)


def test_system_params_collects_every_problem():
    with pytest.raises(InvalidParameters) as err:
        SystemParams(omega=-1, gamma=1, branching=(0.2, 0.2), t2star=0)
    msg = str(err.value)
    assert "omega" in msg and "gamma31 + gamma32" in msg and "t2star" in msg


def test_default_branching_is_even():
    p = SystemParams(omega=1, gamma=2)
    assert p.gamma31 == p.gamma32 == 1.0


def test_from_lifetimes_zeeman():
    p = SystemParams.from_lifetimes(T1, omega=0.3, zeeman_ghz=22)
    assert p.omega12 == pytest.approx(2 * math.pi * 22)
    assert p.xi == pytest.approx(GAMMA)


# -- generator ----------------------------------------------------------------


def test_slot_is_row_major():
    assert [slot(i, j) for i in (1, 2, 3) for j in (1, 2, 3)] == list(range(9))
    assert DRIVEN_SLOTS == (4, 5, 7, 8)


def test_entry_values_at_t1_0p76_ns():
    p = SystemParams.from_lifetimes(T1, omega=0.3)
    m = build_liouvillian(p).m
    assert m[slot(1, 1), slot(3, 3)] == pytest.approx(0.6579, abs=1e-4)
    assert m[slot(1, 3), slot(1, 3)] == pytest.approx(-0.6579, abs=1e-4)


def test_undriven_generator_freezes_ground_coherences():
    m = build_liouvillian(SystemParams(omega=0.0, gamma=GAMMA, gamma3=0.2)).m
    assert not np.any(m[slot(1, 2)]) and not np.any(m[slot(2, 1)])
    # no coupling between populations and coherences without drive
    pops = [slot(1, 1), slot(2, 2), slot(3, 3)]
    cohs = [k for k in range(9) if k not in pops]
    assert not np.any(m[np.ix_(pops, cohs)]) and not np.any(m[np.ix_(cohs, pops)])


@given(params_st)
@settings(max_examples=30, deadline=None)
def test_generator_matches_printed_table(p):
    m = build_liouvillian(p).m
    table = oracles.printed_entries(p.omega, p.gamma31, p.gamma32, p.gamma3)
    ref = np.zeros((9, 9), complex)
    for (i, j), v in table.items():
        ref[i - 1, j - 1] = v
    np.testing.assert_array_equal(m != 0, ref != 0)
    np.testing.assert_allclose(m, ref, rtol=1e-12, atol=0)


@given(params_st)
@settings(max_examples=50, deadline=None)
def test_generator_matches_master_equation(p):
    m = build_liouvillian(p).m
    ref = oracles.lindblad_generator(p.omega, p.gamma31, p.gamma32, p.gamma3)
    np.testing.assert_allclose(m, ref, atol=1e-13)


@given(params_st)
@settings(max_examples=50, deadline=None)
def test_generator_preserves_trace_and_hermiticity(p):
    m = build_liouvillian(p).m
    trace_row = np.eye(3).reshape(9)
    np.testing.assert_allclose(trace_row @ m, 0, atol=1e-13)
    # transposing rho maps to complex conjugation of M
    perm = [slot(j, i) for i in (1, 2, 3) for j in (1, 2, 3)]
    np.testing.assert_allclose(m[np.ix_(perm, perm)], m.conj(), atol=1e-13)


def test_single_zero_mode_when_leaking():
    p = SystemParams(omega=0.5, gamma=GAMMA)
    w = np.linalg.eigvals(build_liouvillian(p).m)
    assert np.sum(np.abs(w) < 1e-9) == 1
    assert np.all(w.real <= 1e-12)


def test_two_zero_modes_for_closed_two_level():
    # no decay into |1>: r11 and the driven block each keep a stationary state
    p = SystemParams(omega=0.5, gamma=GAMMA, branching=(0.0, GAMMA))
    w = np.linalg.eigvals(build_liouvillian(p).m)
    assert np.sum(np.abs(w) < 1e-9) == 2


def test_liouvillian_is_read_only():
    m = build_liouvillian(SystemParams(omega=1, gamma=1)).m
    with pytest.raises(ValueError):
        m[0, 0] = 1


# -- density matrices ---------------------------------------------------------


def test_density_matrix_validation():
    with pytest.raises(ValueError, match="trace"):
        DensityMatrix(np.eye(3))
    with pytest.raises(ValueError, match="Hermitian"):
        DensityMatrix(np.array([[0.5, 0.1, 0], [0.3, 0.5, 0], [0, 0, 0]]))
    with pytest.raises(ValueError, match="positive"):
        DensityMatrix(np.diag([1.2, -0.2, 0.0]))


def test_expect_is_transpose_element():
    rho = DensityMatrix.from_ket([0, 1, 1j])
    assert rho.expect(2, 3) == rho[3, 2]
    assert rho[3, 2] == pytest.approx(0.5j)


# -- time evolution -----------------------------------------------------------


def test_free_decay_of_excited_state():
    p = SystemParams(omega=0.0, gamma=GAMMA)
    t = np.linspace(0, 5, 41)
    traj = evolve(DensityMatrix.pure(3), build_liouvillian(p), t)
    pop3 = np.array([r[3, 3].real for r in traj])
    np.testing.assert_allclose(pop3, np.exp(-GAMMA * t), rtol=1e-8)
    pop1 = np.array([r[1, 1].real for r in traj])
    np.testing.assert_allclose(pop1, 0.5 * (1 - np.exp(-GAMMA * t)), atol=1e-9)


def test_evolve_matches_matrix_exponential():
    rng = np.random.default_rng(3)
    p = SystemParams(omega=1.1, gamma=GAMMA, gamma3=0.3)
    m = build_liouvillian(p)
    rho0 = _random_density(rng)
    t = np.linspace(0, 6, 25)
    traj = np.array([r.vec for r in evolve(rho0, m, t)])
    ref = oracles.propagate_expm(m.m, rho0.vec, t)
    np.testing.assert_allclose(traj, ref, atol=1e-9)


def test_evolve_is_linear():
    rng = np.random.default_rng(4)
    m = build_liouvillian(SystemParams(omega=0.8, gamma=GAMMA)).m
    a, b = _random_density(rng).vec, _random_density(rng).vec
    t = np.linspace(0, 3, 11)
    lhs = propagate(m, 0.3 * a + 0.7 * b, t)
    rhs = 0.3 * propagate(m, a, t) + 0.7 * propagate(m, b, t)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_error_control_refinement_converges():
    # halving the step is done by the adaptive controller; tightening its
    # tolerance tenfold must not move the trajectory by more than 1e-8
    m = build_liouvillian(SystemParams(omega=2.0, gamma=GAMMA, gamma3=0.4)).m
    x0 = DensityMatrix.pure(2).vec
    t = np.linspace(0, 8, 9)
    default = propagate(m, x0, t)
    tighter = propagate(m, x0, t, rtol=1e-11, atol=1e-13)
    assert np.max(np.abs(default - tighter)) < 1e-8
    assert np.max(np.abs(tighter - oracles.propagate_expm(m, x0, t))) < 1e-10


def test_weak_drive_empties_driven_subspace_at_pumping_rate():
    from ramanvis.spectral import gamma_sp_spectral

    p = SystemParams(omega=0.2 * GAMMA, gamma=GAMMA)
    t = np.linspace(0, 400, 201)
    traj = evolve(DensityMatrix.pure(2), build_liouvillian(p), t)
    pop = np.array([r[2, 2].real + r[3, 3].real for r in traj])
    late = slice(100, None)
    rate = -np.polyfit(t[late], np.log(pop[late]), 1)[0]
    assert rate == pytest.approx(gamma_sp_spectral(p), rel=1e-4)


def test_trace_preserved_to_1e10():
    rng = np.random.default_rng(7)
    m = build_liouvillian(SystemParams(omega=1.7, gamma=GAMMA, gamma3=0.1))
    traj = evolve(_random_density(rng), m, np.linspace(0, 20, 50))
    assert max(abs(np.trace(r.rho) - 1) for r in traj) < 1e-10


def test_evolve_grid_must_start_at_zero():
    m = build_liouvillian(SystemParams(omega=1, gamma=1))
    with pytest.raises(ValueError, match="start at 0"):
        evolve(DensityMatrix.pure(2), m, [0.1, 0.2])
    with pytest.raises(ValueError, match="increasing"):
        evolve(DensityMatrix.pure(2), m, [0.0, 0.2, 0.2])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_propagate_reports_failure():
    m = np.diag([1e6 + 0j])
    with pytest.raises(IntegrationError):
        propagate(m, np.array([1.0 + 0j]), [0.0, 1e3])


@given(params_st, st.integers(0, 2**31 - 1))
@settings(max_examples=120, deadline=None)
def test_physicality_along_trajectories(p, seed):
    rng = np.random.default_rng(seed)
    rho0 = _random_density(rng)
    t = np.linspace(0, 10, 21)
    # DensityMatrix re-validates trace, Hermiticity and positivity at each sample
    traj = evolve(rho0, build_liouvillian(p), t)
    assert len(traj) == t.size


# -- quasi-steady state -------------------------------------------------------


def test_quasi_steady_state_matches_eigenvector_oracle():
    p = SystemParams(omega=0.4, gamma=GAMMA, gamma3=0.2)
    state, w = quasi_steady_state(p)
    ref, w_ref = oracles.driven_quasi_steady(build_liouvillian(p).m)
    np.testing.assert_allclose(state.rho, ref, atol=1e-12)
    assert w == pytest.approx(w_ref, abs=1e-12)


def test_quasi_steady_state_two_level_limit():
    p = SystemParams(omega=0.9, gamma=GAMMA, branching=(0.0, GAMMA), gamma3=0.3)
    state, w = quasi_steady_state(p)
    rho33, rho32 = oracles.two_level_steady_state(0.9, GAMMA, 0.3)
    assert abs(w) < 1e-12
    assert state[3, 3].real == pytest.approx(rho33, rel=1e-10)
    assert state[3, 2] == pytest.approx(rho32, rel=1e-10)


@pytest.mark.parametrize("frac, tol", [(0.05, 0.02), (0.3, 0.10)])
def test_quasi_steady_ratio_weak_drive(frac, tol):
    p = SystemParams(omega=frac * GAMMA, gamma=GAMMA)
    r = quasi_steady_ratio(p)
    target = 1j * GAMMA / p.omega
    assert abs(r.real) < 1e-9 * abs(r)
    assert r.imag > 0
    assert abs(r - target) / abs(target) < tol


def test_quasi_steady_state_needs_drive():
    with pytest.raises(InvalidParameters):
        quasi_steady_state(SystemParams(omega=0.0, gamma=1.0))
