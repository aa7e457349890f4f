import numpy as np
import pytest
from scipy.linalg import expm

from perron.finite import (FiniteGenerator, cycle_generator, hitting_law,
                           matrix_exponential, perron_triplet_finite,
                           uniformization, verify_h1, verify_h2)
from perron.grids import tv_distance_time_measures


def two_state():
    # generator [[-1, 1], [1, -2]]: off-diagonal rates 1, extra killing -1
    # in state 1
    off = np.array([[0.0, 1.0], [1.0, 0.0]])
    return FiniteGenerator(off, diag_extra=np.array([0.0, -1.0]))


def three_state():
    off = np.array([[0.0, 1.0, 2.0],
                    [0.5, 0.0, 1.5],
                    [2.5, 0.3, 0.0]])
    return FiniteGenerator(off)


def test_generator_matrix_and_conservative():
    g = three_state()
    G = g.matrix()
    assert np.allclose(G.sum(axis=1), 0.0)
    assert g.is_conservative
    assert not two_state().is_conservative


def test_matrix_exponential_matches_scipy():
    g = two_state()
    t = 0.7
    assert np.allclose(matrix_exponential(g, t).entries, expm(t * g.matrix()))


def test_uniformization_matches_expm():
    g = three_state()
    t = 1.3
    U = uniformization(g, t)
    assert np.allclose(U, expm(t * g.matrix()), atol=1e-12)


def test_two_state_eigenvalue_closed_form():
    # char poly of [[-1,1],[1,-2]]: mu^2 + 3 mu + 1 = 0, top root (-3+sqrt5)/2
    trip = perron_triplet_finite(two_state(), tau=0.5)
    assert trip.converged
    assert trip.lam == pytest.approx((-3 + np.sqrt(5)) / 2, abs=1e-10)


def test_conservative_chain_lambda_zero_gamma_stationary():
    g = three_state()
    trip = perron_triplet_finite(g, tau=0.8)
    assert abs(trip.lam) < 1e-10
    # stationary law from the left null space of the generator
    w, vl = np.linalg.eig(g.matrix().T)
    pi = np.real(vl[:, np.argmax(np.real(w))])
    pi = np.abs(pi) / np.abs(pi).sum()
    assert np.abs(trip.gamma - pi).sum() < 1e-12


def test_hitting_law_cycle_is_truncated_exponential():
    # 3-cycle at rate 1: the hitting time of the successor is Exp(1)
    # truncated to (0, tau]
    gen = cycle_generator(3, rate=1.0)
    tau = 2.0
    law = hitting_law(gen, 0, 1, tau, n_time=2001)
    assert law.reachable
    assert law.success_probability == pytest.approx(1 - np.exp(-tau), abs=1e-6)
    nodes = law.law.nodes
    expected = np.exp(-nodes) / (1 - np.exp(-tau))
    assert law.law.density == pytest.approx(expected, abs=1e-6)


def test_first_return_law_uses_augmented_start():
    # return law to the same state differs from a naive self-loop: in a
    # 2-cycle it is the sum of two Exp(1) passages
    gen = cycle_generator(2, rate=1.0)
    tau = 8.0
    law = hitting_law(gen, 0, 0, tau, n_time=4001)
    nodes = law.law.nodes
    # Gamma(2, 1) renormalized on (0, tau]
    dens = nodes * np.exp(-nodes)
    mass = 1 - np.exp(-tau) * (1 + tau)
    assert law.success_probability == pytest.approx(mass, abs=1e-6)
    assert law.law.density == pytest.approx(dens / mass, abs=1e-5)


def test_verify_h1_three_state():
    rep = verify_h1(three_state(), tau=1.0, n_time=128)
    assert rep.verdict
    assert rep.constants.c > 0
    assert rep.worst_margin >= 0
    assert not rep.failures


def test_verify_h2_three_state_positive_margin():
    rep = verify_h1(three_state(), tau=1.0, n_time=128)
    margin = verify_h2(rep.laws)
    assert margin > 0


def test_verify_h2_fast_path_matches_reference():
    rep = verify_h1(three_state(), tau=1.0, n_time=64)
    fast = verify_h2(rep.laws)
    worst = 0.0
    states = range(3)
    for x in states:
        for xp in range(x + 1, 3):
            best = min(
                tv_distance_time_measures(rep.laws[(x, y)].law,
                                          rep.laws[(xp, y)].law)
                for y in states)
            worst = max(worst, best)
    assert fast == pytest.approx(2.0 - worst, abs=1e-14)


def test_cycle_h2_margin_shrinks_with_refinement():
    # discretized rotation: hitting laws approach Dirac masses and the (H2)
    # overlap disappears
    margins = {}
    for n in (8, 16, 32):
        gen = cycle_generator(n)
        rep = verify_h1(gen, tau=1.5, n_time=128)
        margins[n] = verify_h2(rep.laws)
    assert margins[8] > margins[16] > margins[32] > 0


def test_h1_fails_when_target_unreachable():
    # one-way 2-chain: state 1 never reaches state 0
    off = np.array([[0.0, 1.0], [0.0, 0.0]])
    gen = FiniteGenerator(off)
    rep = verify_h1(gen, tau=1.0, n_time=64)
    assert not rep.verdict
    assert (1, 0) in rep.failures
