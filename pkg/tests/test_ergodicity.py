import numpy as np
import pytest
from scipy.linalg import expm

from perron.ergodicity import (ConvergenceReport, MatrixSemigroupOracle,
                               PDESemigroupOracle, PowerIterationError,
                               RotationSemigroup, convergence_profile,
                               dominant_period, power_triplet,
                               scenario_rotation)
from perron.grids import Grid1D


def oracle_from_generator(G, tau):
    return MatrixSemigroupOracle(expm(tau * G), tau, generator=G)


def test_power_triplet_two_state_closed_form():
    G = np.array([[-1.0, 1.0], [1.0, -2.0]])
    trip = power_triplet(oracle_from_generator(G, 0.5))
    assert trip.converged
    lam_exact = (-3 + np.sqrt(5)) / 2
    assert trip.lam == pytest.approx(lam_exact, abs=1e-10)
    assert trip.lam_left == pytest.approx(lam_exact, abs=1e-10)
    # eigen-residuals at the fixed point
    assert trip.res_h < 1e-11 and trip.res_gamma < 1e-11


def test_triplet_normalization():
    G = np.array([[-1.0, 1.0, 0.0],
                  [0.5, -1.5, 1.0],
                  [0.2, 0.3, -0.5]])
    trip = power_triplet(oracle_from_generator(G, 0.7))
    assert np.max(np.abs(trip.h)) == pytest.approx(1.0)
    assert np.dot(trip.gamma, trip.h) == pytest.approx(1.0)
    assert np.all(trip.gamma >= 0)
    assert np.all(trip.h > 0)


def test_power_iteration_strict_raises_on_period():
    # eigenvalues +-1 with no gap: the normalized iterates cycle with
    # period 2 and strict mode must raise rather than return a bogus triplet
    P = np.array([[0.0, 2.0], [0.5, 0.0]])
    with pytest.raises(PowerIterationError):
        power_triplet(MatrixSemigroupOracle(P, 1.0), max_iter=300)


def test_dominant_period_on_synthetic_signal():
    t = np.linspace(0.0, 30.0, 601)
    series = 1.0 + 0.5 * np.cos(2 * np.pi * t / 1.0)
    period, ratio = dominant_period(t, series)
    assert period == pytest.approx(1.0, abs=0.01)
    assert ratio > 5


def test_dominant_period_flat_signal_no_peak():
    t = np.linspace(0.0, 30.0, 601)
    _, ratio = dominant_period(t, np.ones_like(t))
    assert not ratio > 5


def test_convergence_profile_exponential_matrix():
    G = np.array([[-1.0, 1.0], [1.0, -2.0]])
    oracle = oracle_from_generator(G, 0.5)
    trip = power_triplet(oracle)
    mu0 = np.array([1.0, 0.0])
    rep = convergence_profile(oracle, trip, mu0, horizon=30.0, sample_dt=0.25)
    assert rep.verdict == "exponential"
    assert rep.fit_quality >= 0.99
    # spectral gap of the 2-state generator: lam1 - lam2 = sqrt(5)
    assert rep.omega == pytest.approx(np.sqrt(5), rel=0.05)


def test_rotation_scenario_is_periodic():
    grid = Grid1D(0.0, 1.0, 125)
    rep = scenario_rotation(grid, horizon=30.0)
    assert rep.verdict == "periodic"
    assert rep.dominant_period == pytest.approx(1.0, abs=grid.dx)


def test_rotation_conserves_mass():
    grid = Grid1D(0.0, 1.0, 125)
    rot = RotationSemigroup(grid)
    v = np.zeros(grid.n_cells)
    v[10] = 1.0
    w = v.copy()
    for _ in range(500):
        w = rot.apply_direct(w)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(w >= 0)


def test_pde_oracle_agrees_with_direct_evolution(compliant_semigroup,
                                                 compliant_triplet):
    # M_tau h = e^{lam tau} h for the converged triplet
    trip = compliant_triplet
    assert trip.res_h < 1e-9
    assert trip.res_gamma < 1e-9
    assert trip.lam == pytest.approx(trip.lam_left, abs=1e-10)


def test_profile_fixed_point_detection(compliant_semigroup,
                                       compliant_triplet):
    # starting from gamma itself the residual stays at round-off level and
    # the profile reports an immediate fixed point rather than a fit
    oracle = PDESemigroupOracle(compliant_semigroup, 0.4)
    rep = convergence_profile(oracle, compliant_triplet,
                              compliant_triplet.gamma.copy(),
                              horizon=30.0, sample_dt=0.4)
    assert rep.verdict == "exponential"
    assert rep.fit_quality == pytest.approx(1.0)
