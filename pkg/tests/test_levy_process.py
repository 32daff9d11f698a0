import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fltc.errors import NonProbabilityRowError
from fltc.measure_algebra import (DiscreteMeasure, TrivializingFamily, poisson, rectangle_table,
                                  semigroup_measure)
from fltc.levy_process import (SemigroupSpec, chi_square_gof, compensated_martingale_check,
                               feller_operator, marginal_gof, martingale_check, path_rng,
                               simulate_path, simulate_paths, transition, transition_matrix)
from fltc.neumann_spectra import DomainSpec

COS_DOMAIN = DomainSpec.rectangle((1.0,))
COS = rectangle_table(1.0, n=21)
COS_FAMILY = TrivializingFamily.rectangle(COS_DOMAIN, COS.grid, 21)
COS_HEAT = SemigroupSpec.heat(COS_DOMAIN)

RECT_DOMAIN = DomainSpec.rectangle((1.0, 2.0))
RECT = rectangle_table((1.0, 2.0), n=21)
RECT_FAMILY = TrivializingFamily.rectangle(RECT_DOMAIN, RECT.grid, 25)
RECT_HEAT = SemigroupSpec.heat(RECT_DOMAIN)


def _jumps(table, atoms, masses):
    w = np.zeros(table.size)
    w[list(atoms)] = masses
    return DiscreteMeasure(table.grid, w)


def test_seed_determinism():
    a = simulate_paths(RECT, RECT_HEAT, 0.5, 5, 220, seed=11, n_paths=20)
    b = simulate_paths(RECT, RECT_HEAT, 0.5, 5, 220, seed=11, n_paths=20)
    c = simulate_paths(RECT, RECT_HEAT, 0.5, 5, 220, seed=12, n_paths=20)
    np.testing.assert_array_equal(a.states, b.states)
    assert not np.array_equal(a.states, c.states)


def test_paths_are_independent_of_batching():
    whole = simulate_paths(COS, COS_HEAT, 0.2, 4, 5, seed=3, n_paths=10)
    tail = simulate_paths(COS, COS_HEAT, 0.2, 4, 5, seed=3, n_paths=4, first_path=6)
    np.testing.assert_array_equal(whole.states[6:], tail.states)


def test_zero_horizon_is_constant():
    s = simulate_path(RECT, RECT_HEAT, 0.0, 4, 37, seed=0)
    assert (s.states == 37).all()
    assert s.times.tolist() == [0.0] * 5


def test_n_steps_validated():
    with pytest.raises(ValueError):
        simulate_path(COS, COS_HEAT, 1.0, 0, 0, seed=0)


def test_transition_validates_step():
    with pytest.raises(ValueError):
        transition(COS, COS_HEAT, 0.0, 3, path_rng(0, 0))


def test_poisson_with_zero_jumps_stays_put():
    spec = SemigroupSpec.poisson(DiscreteMeasure.zero(RECT.grid))
    s = simulate_paths(RECT, spec, 3.0, 6, 123, seed=5, n_paths=50)
    assert (s.states == 123).all()
    rng = path_rng(1, 0)
    assert all(transition(RECT, spec, 0.7, 40, rng) == 40 for _ in range(20))


def test_paths_stay_on_grid():
    s = simulate_paths(RECT, RECT_HEAT, 2.0, 10, 0, seed=9, n_paths=500)
    assert s.states.min() >= 0 and s.states.max() < RECT.size


def test_csv_layout():
    s = simulate_path(RECT, RECT_HEAT, 0.5, 2, 22, seed=1)
    lines = s.to_csv(RECT.grid).splitlines()
    assert lines[0] == "t,index,x0,x1"
    t, idx, x0, x1 = lines[1].split(",")
    assert float(t) == 0.0 and int(idx) == 22
    np.testing.assert_array_equal([float(x0), float(x1)], RECT.grid.points[22])
    many = simulate_paths(RECT, RECT_HEAT, 0.5, 2, 22, seed=1, n_paths=2)
    assert many.to_csv(RECT.grid).splitlines()[0] == "path,t,index,x0,x1"


def test_feller_operator_conserves_constants():
    gamma = semigroup_measure(RECT_DOMAIN, RECT.grid, 0.1)
    out = feller_operator(RECT, gamma, np.ones(RECT.size))
    np.testing.assert_allclose(out, 1.0, atol=1e-12)


@pytest.mark.parametrize("j", [1, 2, 5, 12, 24])
def test_feller_operator_eigen_relation(j):
    t = 0.1
    gamma = semigroup_measure(RECT_DOMAIN, RECT.grid, t)
    phi = RECT_FAMILY.values[j]
    out = feller_operator(RECT, gamma, phi)
    np.testing.assert_allclose(out, math.exp(-RECT_FAMILY.eigenvalues[j] * t) * phi, atol=1e-9)


def test_feller_operator_needs_probability():
    with pytest.raises(NonProbabilityRowError):
        feller_operator(RECT, 2.0 * RECT.identity(), np.ones(RECT.size))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([0.05, 0.2, 1.0]))
def test_feller_operator_contraction_and_positivity(seed, t):
    rng = np.random.default_rng(seed)
    gamma = semigroup_measure(RECT_DOMAIN, RECT.grid, t)
    f = rng.normal(size=RECT.size)
    out = feller_operator(RECT, gamma, f)
    assert np.abs(out).max() <= np.abs(f).max() * (1 + 1e-12)
    g = np.abs(f)
    assert feller_operator(RECT, gamma, g).min() >= -1e-12


def test_chapman_kolmogorov():
    P = {t: transition_matrix(RECT, semigroup_measure(RECT_DOMAIN, RECT.grid, t))
         for t in (0.1, 0.2, 0.3)}
    assert np.abs(P[0.1] @ P[0.2] - P[0.3]).sum(axis=1).max() < 1e-8


@pytest.mark.parametrize("x", [0, 7, 220, 440])
def test_two_half_steps_match_one_step(x):
    half = transition_matrix(RECT, semigroup_measure(RECT_DOMAIN, RECT.grid, 0.25))
    full = RECT.convolve(semigroup_measure(RECT_DOMAIN, RECT.grid, 0.5), DiscreteMeasure.delta(RECT.grid, x))
    two = (half @ half)[x]
    assert np.abs(two - full.weights).sum() < 1e-6


def test_sampling_from_identity_matches_gamma():
    t = 0.3
    target = COS_HEAT.gamma(COS, t)
    rep = marginal_gof(COS, COS_HEAT, t, 1, COS.identity_index, 10 ** 5, 21, target)
    assert rep["p_value"] > 0.01


def test_single_transition_draws_follow_row():
    rng = path_rng(4, 0)
    x = 8
    draws = np.array([transition(COS, COS_HEAT, 0.05, x, rng) for _ in range(4000)])
    row = transition_matrix(COS, COS_HEAT.gamma(COS, 0.05))[x]
    assert chi_square_gof(np.bincount(draws, minlength=COS.size), row)["p_value"] > 0.01


def test_chi_square_merges_sparse_bins():
    rep = chi_square_gof(np.array([50, 50, 0, 0]), np.array([0.5, 0.5, 0.0, 0.0]))
    assert rep["bins"] == 2 and rep["p_value"] == 1.0


def test_martingale_trivial_member():
    rep = martingale_check(RECT, RECT_HEAT, RECT_FAMILY, 1, 100, 0.5, 10 ** 4, seed=1)
    assert rep["estimate"] == 1.0 and rep["stderr"] == 0.0 and rep["pass"]


def test_martingale_cosine_member():
    x0 = COS.grid.index_of([0.25])
    rep = martingale_check(COS, COS_HEAT, COS_FAMILY, 2, x0, 0.3, 10 ** 4, seed=2)
    assert rep["target"] == pytest.approx(math.cos(math.pi * 0.25), abs=1e-14)
    assert rep["psi"] == pytest.approx(math.pi ** 2, rel=1e-10)
    assert rep["pass"], rep


def test_martingale_validates_arguments():
    with pytest.raises(ValueError):
        martingale_check(COS, COS_HEAT, COS_FAMILY, 0, 0, 0.3, 10 ** 4)
    with pytest.raises(ValueError):
        martingale_check(COS, COS_HEAT, COS_FAMILY, 2, 0, 0.3, 100)


def test_poisson_exponent_agrees_with_log_of_unit_time_law():
    nu = _jumps(RECT, [30, 200, 301], [0.4, 0.9, 0.2])
    spec = SemigroupSpec.poisson(nu)
    direct = -np.log(RECT_FAMILY.values @ poisson(RECT, nu).weights)
    np.testing.assert_allclose(spec.psi(RECT, RECT_FAMILY), direct, atol=1e-9)


def test_poisson_martingale_single_atom():
    k = 250
    nu = 1.2 * DiscreteMeasure.delta(RECT.grid, k)
    spec = SemigroupSpec.poisson(nu)
    psi = spec.psi(RECT, RECT_FAMILY)
    np.testing.assert_allclose(psi, 1.2 * (1 - RECT_FAMILY.values[:, k]), atol=1e-15)
    for j in (2, 4):
        rep = martingale_check(RECT, spec, RECT_FAMILY, j, 33, 0.8, 10 ** 4, seed=j)
        assert rep["pass"], rep


def test_heat_exponent_matches_eigenvalues():
    psi = RECT_HEAT.psi(RECT, RECT_FAMILY)
    # High modes are read off short-time laws, where the log amplifies roundoff.
    np.testing.assert_allclose(psi, RECT_FAMILY.eigenvalues, rtol=1e-7, atol=1e-12)


def test_compensated_martingale_fine_interval():
    domain = DomainSpec.rectangle((1.0,))
    table = rectangle_table(1.0, n=201)
    family = TrivializingFamily.rectangle(domain, table.grid, 6)
    spec = SemigroupSpec.heat(domain)
    x0 = table.grid.index_of([0.3])
    for j in range(1, 6):
        rep = compensated_martingale_check(table, spec, family, j, x0, 0.01, 20, 10 ** 4, seed=j)
        assert rep["step"] == pytest.approx(5e-4)
        assert rep["pass"], rep


def test_spec_validation():
    with pytest.raises(ValueError):
        SemigroupSpec("heat")
    with pytest.raises(ValueError):
        SemigroupSpec("poisson")
    with pytest.raises(ValueError):
        SemigroupSpec("jump", domain=RECT_DOMAIN)
    assert RECT_HEAT.gamma(RECT, 0).weights[RECT.identity_index] == 1.0
