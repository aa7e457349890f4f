import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from perron.grids import DiscreteMeasure, Grid1D, GridFunction, pair
from perron.models import (ConstantPotential, ModelSpec, QuadraticPotential,
                           UniformBandKernel)
from perron.pde import PDESemigroup, check_positivity_lemma

GRID = Grid1D(-4.0, 4.0, 500)
MODEL = ModelSpec(potential=QuadraticPotential(peak=1.0, slope=1.0),
                  kernel=UniformBandKernel(kappa0=1.0, eps=1.0))


@pytest.fixture(scope="module")
def S():
    return PDESemigroup(MODEL, GRID)


def test_dt_locked_to_dx(S):
    assert S.dt == pytest.approx(GRID.dx)


def test_duality_is_exact_per_step(S):
    rng = np.random.default_rng(3)
    mu = rng.standard_normal(GRID.n_cells)
    f = rng.standard_normal(GRID.n_cells)
    lhs = np.dot(S.step_direct_vec(mu), f)
    rhs = np.dot(mu, S.step_dual_vec(f))
    assert lhs == pytest.approx(rhs, rel=1e-13, abs=1e-13)


@settings(max_examples=25, deadline=None)
@given(hnp.arrays(np.float64, GRID.n_cells, elements=st.floats(-10, 10)),
       hnp.arrays(np.float64, GRID.n_cells, elements=st.floats(-10, 10)))
def test_duality_property(masses, values):
    S = PDESemigroup(MODEL, GRID)
    lhs = np.dot(S.step_direct_vec(masses), values)
    rhs = np.dot(masses, S.step_dual_vec(values))
    scale = max(np.abs(masses).sum() * np.abs(values).max(), 1.0)
    assert abs(lhs - rhs) <= 1e-12 * scale


def test_positivity_preserved(S):
    rng = np.random.default_rng(5)
    v = rng.random(GRID.n_cells)
    for _ in range(100):
        v = S.step_direct_vec(v)
        assert np.all(v >= 0)


def test_n_steps_rounding(S):
    assert S.n_steps(10 * S.dt) == 10
    assert S.n_steps(1.37 * S.dt) == 1  # rounds down with a warning


def test_evolve_vec_matches_repeated_steps(S):
    v = DiscreteMeasure.dirac(GRID, 0.0).masses
    w = S.evolve_vec(v, 5 * S.dt, direct=True)
    u = v.copy()
    for _ in range(5):
        u = S.step_direct_vec(u)
    assert np.allclose(w, u)


def test_evolve_tracked_log_scale(S):
    v = np.abs(np.random.default_rng(7).random(GRID.n_cells))
    w, log_scale = S.evolve_tracked(v, 2.0, direct=True)
    ref = S.evolve_vec(v, 2.0, direct=True)
    assert np.allclose(w * np.exp(log_scale), ref, rtol=1e-10)


def test_snapshots_arbitrary_order(S):
    f = GridFunction.from_callable(GRID, lambda x: np.exp(-x * x)).values
    times = np.array([5, 1, 3]) * S.dt
    snaps = S.dual_snapshots(f, times)
    for t, row in zip(times, snaps):
        assert np.allclose(row, S.evolve_vec(f, t, direct=False))


def test_mass_growth_gronwall():
    # d/dt <mu M_t, 1> <= (a_bar + q_bar) <mu M_t, 1>
    S = PDESemigroup(MODEL, GRID)
    bound = MODEL.a_bar + MODEL.q_bar
    v = DiscreteMeasure.dirac(GRID, 0.0).masses
    t = 1.0
    w = S.evolve_vec(v, t, direct=True)
    assert w.sum() <= np.exp(bound * t) * (1 + 1e-8)


def test_constant_coefficient_exact_growth():
    # a == a_bar and Q(x, R) == q_bar constants: M_t 1 = e^{(a_bar+q_bar) t}
    # away from the boundary layer
    grid = Grid1D(-20.0, 20.0, 5000)
    model = ModelSpec(potential=ConstantPotential(level=0.5),
                      kernel=UniformBandKernel(kappa0=1.0, eps=1.0))
    S = PDESemigroup(model, grid)
    t = 2.0
    ones = np.ones(grid.n_cells)
    w = S.evolve_vec(ones, t, direct=False)
    i = grid.index_of(-10.0)
    exact = np.exp((0.5 + 2.0) * t)
    assert w[i] == pytest.approx(exact, rel=5 * S.dt * t)


def test_positivity_lemma(S):
    # the indicator of a window spreads to a positive floor on any other
    # window after enough jump ranges
    eta = check_positivity_lemma(S, -2.0, -1.5, 2.0, 2.5, tau=6.0)
    assert eta > 0
