import io
import math

import numpy as np
import pytest
from scipy.linalg import expm

from qgalerkin.controls import ControlLaw, CosinePower
from qgalerkin.experiments import FIGURES
from qgalerkin.models import GalerkinSystem, build_planar_odd, build_planar_even
from qgalerkin.propagator import (
    NormalizationError,
    PropagationOptions,
    SkewAdjointError,
    StepSizeWarning,
    expm_skew,
    propagate_control,
    propagate_piecewise,
    populations,
    trajectory_to_csv,
)
from oracles import FROZEN, rabi_population

ODD22 = build_planar_odd(22)


def _dense(sys, u, dt):
    return expm(dt * (np.diag(-1j * sys.drift_diagonal) + u * sys.coupling_matrix))


@pytest.mark.parametrize("u, dt", [(0.3, 0.7), (-1.2, 0.05), (2.0, -0.4), (0.0, 3.0)])
def test_expm_skew_matches_dense(u, dt):
    for sys in (build_planar_odd(6), build_planar_even(5)):
        U = expm_skew(sys.drift_diagonal, sys.coupling_matrix, u, dt)
        np.testing.assert_allclose(U, _dense(sys, u, dt), atol=1e-12)
        assert np.abs(U.conj().T @ U - np.eye(sys.dim)).max() <= 1e-12


def test_expm_skew_trivial_cases():
    s = build_planar_odd(5)
    U = expm_skew(s.drift_diagonal, s.coupling_matrix, 0.0, 1.3)
    np.testing.assert_allclose(U, np.diag(np.exp(-1j * s.drift_diagonal * 1.3)), atol=1e-13)
    np.testing.assert_allclose(expm_skew(s.drift_diagonal, s.coupling_matrix, 0.8, 0.0),
                               np.eye(5), atol=1e-15)
    with pytest.raises(SkewAdjointError):
        expm_skew(s.drift_diagonal, np.ones((5, 5)), 0.1, 0.1)


@pytest.mark.parametrize("u", [0.1, 0.5, 2.0, -0.7])
def test_two_level_rabi(u):
    s = build_planar_odd(2)
    for t in (0.3, 1.0, 4.7, 17.0):
        U = expm_skew(s.drift_diagonal, s.coupling_matrix, u, t)
        assert abs(U[1, 0]) ** 2 == pytest.approx(rabi_population(u, 3.0, u / 2, t), abs=1e-13)


def test_piecewise_zero_control_keeps_populations():
    psi0 = np.ones(6, dtype=complex) / math.sqrt(6)
    traj = propagate_piecewise(build_planar_odd(6), [(13.0, 0.0)], psi0,
                               record_grid=np.linspace(0, 13, 50))
    np.testing.assert_allclose(traj.populations, 1 / 6, atol=1e-14)


def test_piecewise_single_piece_is_one_exponential():
    s = build_planar_odd(8)
    psi0 = s.basis_state(1)
    traj = propagate_piecewise(s, [(2.5, 0.4)], psi0)
    np.testing.assert_allclose(traj.final_state,
                               expm_skew(s.drift_diagonal, s.coupling_matrix, 0.4, 2.5) @ psi0,
                               atol=1e-13)


def test_piecewise_semigroup_and_grid_independence():
    s = build_planar_odd(10)
    psi0 = s.basis_state(1)
    a = propagate_piecewise(s, [(1.2, 0.3), (0.8, 0.3)], psi0).final_state
    b = propagate_piecewise(s, [(2.0, 0.3)], psi0).final_state
    assert np.abs(a - b).max() <= 1e-12
    pieces = [(0.5, 0.2), (1.1, -0.4), (0.7, 1.0)]
    coarse = propagate_piecewise(s, pieces, psi0)
    fine = propagate_piecewise(s, pieces, psi0, record_grid=np.linspace(0, 2.3, 777))
    assert np.abs(coarse.final_state - fine.final_state).max() <= 1e-12


def test_rejects_unnormalized_and_bad_pieces():
    s = build_planar_odd(4)
    with pytest.raises(NormalizationError):
        propagate_piecewise(s, [(1.0, 0.1)], 1.5 * s.basis_state(1))
    with pytest.raises(ValueError):
        propagate_piecewise(s, [(0.0, 0.1)], s.basis_state(1))
    with pytest.raises(NormalizationError):
        propagate_control(s, ControlLaw(CosinePower(1, 3.0)), np.zeros(4), 1.0)


@pytest.mark.filterwarnings("ignore::qgalerkin.propagator.StepSizeWarning")
def test_constant_control_matches_piecewise():
    s = build_planar_odd(12)
    psi0 = s.basis_state(1)
    u = 0.37
    traj = propagate_control(s, lambda t: np.full_like(t, u), psi0, 9.0,
                             PropagationOptions(step=0.01, record_grid=np.linspace(0, 9, 91)))
    ref = propagate_piecewise(s, [(9.0, u)], psi0, record_grid=np.linspace(0, 9, 91))
    assert np.abs(traj.states - ref.states).max() <= 1e-10


@pytest.mark.filterwarnings("ignore::qgalerkin.propagator.StepSizeWarning")
def test_step_halving_order_two():
    sc = FIGURES["figure2"]
    T = sc.control.period
    psi0 = ODD22.basis_state(1)

    def final(m):
        opts = PropagationOptions(step=T / m, record_grid=[sc.horizon])
        return propagate_control(ODD22, sc.control, psi0, sc.horizon, opts).final_state

    ref = final(3200)
    e1 = np.linalg.norm(final(200) - ref)
    e2 = np.linalg.norm(final(400) - ref)
    assert e1 / e2 >= 3.5


def test_table_row_peak_population():
    law = ControlLaw(CosinePower(1, 3.0), 30)
    with pytest.warns(StepSizeWarning):
        traj = propagate_control(ODD22, law, ODD22.basis_state(1), 195.0)
    p2 = populations(traj, 2)
    assert 1 / 3 * 3e-5 <= 1 - p2.max() <= 3 * 3e-5
    assert abs(traj.times[np.argmax(p2)] - 189.0) <= 0.03 * 189


def test_populations_basics(figure1_trajectory):
    traj = figure1_trajectory
    assert populations(traj, 1)[0] == 1.0
    assert np.abs(traj.populations.sum(axis=1) - 1).max() <= 1e-9
    assert traj.norm_drift() <= 1e-9
    with pytest.raises(IndexError):
        populations(traj, 23)
    with pytest.raises(IndexError):
        populations(traj, 0)


def test_figure1_agrees_with_adaptive_oracle(figure1_trajectory):
    pop2 = populations(figure1_trajectory, 2)
    assert np.sqrt(pop2.max()) == pytest.approx(FROZEN["fig1_max_modulus"], rel=1e-2)
    assert pop2.max() == pytest.approx(FROZEN["fig1_max_population"], rel=2e-2)


def test_figure1_population_reading(figure1_trajectory):
    # squared modulus of the second coordinate stays below 2e-5 over t < 500
    assert populations(figure1_trajectory, 2).max() <= 2e-5


def test_nan_control_is_hard_error():
    s = build_planar_odd(4)
    with pytest.raises(FloatingPointError):
        propagate_control(s, lambda t: np.full_like(t, np.nan), s.basis_state(1), 1.0,
                          PropagationOptions(step=0.01))


def test_step_size_warning():
    s = build_planar_odd(22)
    with pytest.warns(StepSizeWarning, match="heuristic"):
        propagate_control(s, ControlLaw(CosinePower(1, 3.0)), s.basis_state(1), 1.0,
                          PropagationOptions(step=0.05))


def _random_pieces(rng, K, count):
    d = rng.uniform(0.05, 1.0, count)
    u = rng.normal(size=count)
    u *= K / np.sum(np.abs(u) * d)
    return list(zip(d, u))


def test_energy_growth_invariant():
    rng = np.random.default_rng(2024)
    s = build_planar_odd(40)
    for trial in range(100):
        K = rng.uniform(0, 2)
        pieces = _random_pieces(rng, K, int(rng.integers(1, 25)))
        psi0 = np.zeros(40, dtype=complex)
        psi0[:3] = rng.normal(size=3) + 1j * rng.normal(size=3)
        psi0 /= np.linalg.norm(psi0)
        horizon = sum(d for d, _ in pieces)
        traj = propagate_piecewise(s, pieces, psi0, record_grid=np.linspace(0, horizon, 200))
        h = np.sqrt(traj.populations @ s.drift_diagonal)
        assert h.max() <= math.exp(1.5 * K) * s.half_norm(psi0) * (1 + 1e-6)


def test_factorial_population_bound():
    rng = np.random.default_rng(7)
    for trial in range(50):
        pieces = _random_pieces(rng, rng.uniform(0.1, 2.0), int(rng.integers(1, 30)))
        bounds = np.concatenate([[0.0], np.cumsum([d for d, _ in pieces])])
        running = np.concatenate([[0.0], np.cumsum([d * abs(u) for d, u in pieces])])
        traj = propagate_piecewise(ODD22, pieces, ODD22.basis_state(1), record_grid=bounds)
        for k in range(1, 9):
            assert np.all(np.abs(traj.states[:, k]) <= running ** k / math.factorial(k) + 1e-14)


def test_continuity_under_mollification():
    s = build_planar_odd(6)
    psi0 = s.basis_state(1)
    T = 4 * math.pi
    amp = 0.4
    ref = propagate_piecewise(s, [(math.pi, amp), (math.pi, -amp)] * 2, psi0).final_state
    errors = []
    for m in (2, 4, 8, 16, 32):
        opts = PropagationOptions(step=T / 40000, record_grid=[T])
        traj = propagate_control(s, lambda t, m=m: amp * np.tanh(m * np.sin(t)), psi0, T, opts)
        errors.append(np.linalg.norm(traj.final_state - ref))
    assert all(b < a for a, b in zip(errors, errors[1:]))
    assert errors[-1] < 0.1 * errors[0]


def test_time_reversal():
    rng = np.random.default_rng(11)
    s = build_planar_odd(22)
    pieces = _random_pieces(rng, 1.5, 20)
    psi0 = s.basis_state(1)
    psiT = propagate_piecewise(s, pieces, psi0).final_state
    back = psiT.copy()
    for d, u in reversed(pieces):
        back = expm_skew(s.drift_diagonal, s.coupling_matrix, u, -d) @ back
    assert np.abs(back - psi0).max() <= 1e-8
    # forward run of the reversed control after conjugation (real Hamiltonian)
    rev = propagate_piecewise(s, list(reversed(pieces)), np.conj(psiT)).final_state
    assert np.abs(np.conj(rev) - psi0).max() <= 1e-8
    # the negated control is the parity-conjugate dynamics
    P = np.diag((-1.0) ** np.arange(22))
    neg = propagate_piecewise(s, [(d, -u) for d, u in pieces], psi0).final_state
    assert np.abs(P @ neg - psiT).max() <= 1e-10


def test_csv_format():
    s = build_planar_odd(3)
    traj = propagate_piecewise(s, [(1.0, 0.2)], s.basis_state(1), record_grid=[0.0, 0.5, 1.0])
    buf1, buf2 = io.StringIO(), io.StringIO()
    trajectory_to_csv(traj, buf1)
    trajectory_to_csv(traj, buf2)
    lines = buf1.getvalue().splitlines()
    assert lines[0] == "t,re_1,im_1,re_2,im_2,re_3,im_3,pop_1,pop_2,pop_3"
    assert len(lines) == 4
    row = np.array([float(x) for x in lines[2].split(",")])
    assert row[1] + 1j * row[2] == traj.states[1, 0]
    assert buf1.getvalue() == buf2.getvalue()


def test_custom_system_accepted():
    s = GalerkinSystem(np.array([0.0, 2.0]), np.array([[0, 1], [-1, 0]], dtype=complex))
    traj = propagate_piecewise(s, [(1.0, 0.5)], s.basis_state(1))
    assert traj.norm_drift() <= 1e-12
