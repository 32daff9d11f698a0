import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fltc.errors import GridMismatchError, GridNotClosedError, SignedMeasureError
from fltc.grid import Grid
from fltc.measure_algebra import (ConvolutionTable, DiscreteMeasure, TrivializingFamily,
                                  check_fltc_axioms, clip_negatives, convolve, invariance_check,
                                  levy_khintchine_check, nfold, poisson, rectangle_table,
                                  semigroup_measure, transition_oracle)
from fltc.neumann_spectra import DomainSpec

LINE = rectangle_table(1.0, n=21)
PLANE = rectangle_table((1.0, 2.0), n=11)
PLANE_DOMAIN = DomainSpec.rectangle((1.0, 2.0))
PLANE_FAMILY = TrivializingFamily.rectangle(PLANE_DOMAIN, PLANE.grid, 25)


def _idx(table, point):
    return table.grid.index_of(point)


def _random_signed(rng, G, support=6):
    w = np.zeros(G)
    idx = rng.choice(G, size=support, replace=False)
    w[idx] = rng.normal(size=support)
    return w


def _random_probability(rng, G, support=6):
    w = np.zeros(G)
    idx = rng.choice(G, size=support, replace=False)
    w[idx] = rng.random(support)
    return w / w.sum()


def test_identity_convolution_exact():
    rng = np.random.default_rng(0)
    mu = DiscreteMeasure(PLANE.grid, _random_signed(rng, PLANE.size))
    out = convolve(PLANE, PLANE.identity(), mu)
    np.testing.assert_array_equal(out.weights, mu.weights)


def test_interval_two_point_law():
    g = LINE.grid
    out = LINE.convolve(DiscreteMeasure.delta(g, _idx(LINE, [0.3])), DiscreteMeasure.delta(g, _idx(LINE, [0.4])))
    expected = np.zeros(g.size)
    expected[_idx(LINE, [0.1])] = 0.5
    expected[_idx(LINE, [0.7])] = 0.5
    np.testing.assert_allclose(out.weights, expected, atol=1e-15)


def test_interval_midpoint_law():
    table = rectangle_table(1.0, n=11)
    g = table.grid
    half = DiscreteMeasure.delta(g, _idx(table, [0.5]))
    out = table.convolve(half, half)
    assert out.weights[0] == 0.5 and out.weights[-1] == 0.5


def test_plane_tensor_law():
    table = rectangle_table((1.0, 1.0), n=11)
    g = table.grid
    out = table.convolve(DiscreteMeasure.delta(g, _idx(table, [0.3, 0.5])),
                         DiscreteMeasure.delta(g, _idx(table, [0.4, 0.5])))
    atoms = {tuple(np.round(g.points[k], 12)): out.weights[k] for k in np.nonzero(out.weights)[0]}
    assert atoms == {(0.1, 0.0): 0.25, (0.1, 1.0): 0.25, (0.7, 0.0): 0.25, (0.7, 1.0): 0.25}


def test_identity_rows():
    for i in range(PLANE.size):
        row = PLANE.row(i, PLANE.identity_index)
        assert row[i] == 1.0 and row.sum() == 1.0


def test_trivialization_on_random_sparse_measures():
    rng = np.random.default_rng(1)
    phi = PLANE_FAMILY.values
    for _ in range(20):
        mu = DiscreteMeasure(PLANE.grid, _random_signed(rng, PLANE.size))
        nu = DiscreteMeasure(PLANE.grid, _random_signed(rng, PLANE.size))
        lhs = phi @ PLANE.convolve(mu, nu).weights
        rhs = (phi @ mu.weights) * (phi @ nu.weights)
        assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_bilinearity():
    rng = np.random.default_rng(2)
    G = PLANE.size
    for _ in range(10):
        m1, m2, nu = (DiscreteMeasure(PLANE.grid, _random_signed(rng, G)) for _ in range(3))
        a, b = rng.normal(size=2)
        lhs = PLANE.convolve(a * m1 + b * m2, nu)
        rhs = a * PLANE.convolve(m1, nu) + b * PLANE.convolve(m2, nu)
        assert lhs.tv_distance(rhs) < 1e-12


def test_banach_algebra_inequality():
    rng = np.random.default_rng(3)
    G = PLANE.size
    for _ in range(100):
        mu = DiscreteMeasure(PLANE.grid, _random_signed(rng, G, 8))
        nu = DiscreteMeasure(PLANE.grid, _random_signed(rng, G, 8))
        assert PLANE.convolve(mu, nu).norm <= mu.norm * nu.norm * (1 + 1e-12)


def test_probability_closure():
    rng = np.random.default_rng(4)
    mu = DiscreteMeasure(PLANE.grid, _random_probability(rng, PLANE.size))
    nu = DiscreteMeasure(PLANE.grid, _random_probability(rng, PLANE.size))
    assert PLANE.convolve(mu, nu).is_probability


def test_atom_associativity_on_interval():
    g = LINE.grid
    rng = np.random.default_rng(5)
    for _ in range(50):
        x, y, z = (DiscreteMeasure.delta(g, int(i)) for i in rng.integers(0, g.size, 3))
        left = LINE.convolve(LINE.convolve(x, y), z)
        right = LINE.convolve(x, LINE.convolve(y, z))
        assert left.tv_distance(right) < 1e-10


def test_grid_mismatch():
    with pytest.raises(GridMismatchError):
        LINE.convolve(DiscreteMeasure.delta(LINE.grid, 0), DiscreteMeasure.delta(PLANE.grid, 0))


def test_grid_not_closed():
    grid = Grid.cartesian([np.array([0.0, 0.3, 1.0])])
    with pytest.raises(GridNotClosedError):
        rectangle_table(1.0, grid)


def test_table_json_round_trip():
    table = rectangle_table((1.0, 1.0), n=5)
    back = ConvolutionTable.from_json(table.to_json())
    assert back.identity_index == table.identity_index
    assert abs(back.kernel - table.kernel).max() == 0


def test_measure_csv_round_trip():
    rng = np.random.default_rng(6)
    mu = DiscreteMeasure(PLANE.grid, _random_signed(rng, PLANE.size))
    back = DiscreteMeasure.from_csv(PLANE.grid, mu.to_csv())
    np.testing.assert_array_equal(back.weights, mu.weights)
    assert mu.to_csv().startswith("index,weight\n")


def test_nfold_small_cases():
    rng = np.random.default_rng(7)
    nu = DiscreteMeasure(PLANE.grid, _random_probability(rng, PLANE.size))
    np.testing.assert_array_equal(nfold(PLANE, nu, 0).weights, PLANE.identity().weights)
    np.testing.assert_array_equal(nfold(PLANE, nu, 1).weights, nu.weights)


@pytest.mark.parametrize("n", [2, 3, 5, 8, 13])
def test_nfold_matches_left_fold_and_powers(n):
    rng = np.random.default_rng(n)
    nu = DiscreteMeasure(PLANE.grid, _random_probability(rng, PLANE.size, 4))
    left = nu
    for _ in range(n - 1):
        left = PLANE.convolve(left, nu)
    got = nfold(PLANE, nu, n)
    assert got.tv_distance(left) < 1e-10
    phi = PLANE_FAMILY.values
    np.testing.assert_allclose(phi @ got.weights, (phi @ nu.weights) ** n, atol=1e-9)


def test_poisson_of_zero_is_identity():
    out = poisson(PLANE, DiscreteMeasure.zero(PLANE.grid))
    np.testing.assert_array_equal(out.weights, PLANE.identity().weights)


def test_poisson_rejects_signed():
    w = np.zeros(PLANE.size)
    w[3] = -0.1
    with pytest.raises(SignedMeasureError):
        poisson(PLANE, DiscreteMeasure(PLANE.grid, w))


def _jump_measure(rng, atoms=5, total=1.5):
    w = np.zeros(PLANE.size)
    idx = rng.choice(np.arange(1, PLANE.size), size=atoms, replace=False)
    w[idx] = rng.random(atoms)
    return DiscreteMeasure(PLANE.grid, total * w / w.sum())


def test_poisson_exponent_identity_and_probability():
    rng = np.random.default_rng(8)
    nu = _jump_measure(rng)
    e = poisson(PLANE, nu)
    assert e.is_probability
    phi = PLANE_FAMILY.values
    np.testing.assert_allclose(phi @ e.weights, np.exp(phi @ nu.weights - nu.mass), atol=1e-10)


def test_poisson_semigroup_identity():
    rng = np.random.default_rng(9)
    n1, n2 = _jump_measure(rng, total=0.8), _jump_measure(rng, total=1.3)
    lhs = PLANE.convolve(poisson(PLANE, n1), poisson(PLANE, n2))
    assert lhs.tv_distance(poisson(PLANE, n1 + n2)) < 1e-9


def test_levy_khintchine_single_atom_and_random():
    g = PLANE.grid
    k = 17
    nu = 0.7 * DiscreteMeasure.delta(g, k)
    rep = levy_khintchine_check(PLANE, PLANE_FAMILY, nu)
    expected = np.exp(0.7 * (PLANE_FAMILY.values[:, k] - 1))
    np.testing.assert_allclose(rep["rhs"], expected, atol=1e-15)
    assert rep["errors"][0] < 1e-12 and rep["lhs"][0] == pytest.approx(1.0, abs=1e-12)
    rep = levy_khintchine_check(PLANE, PLANE_FAMILY, _jump_measure(np.random.default_rng(10)))
    assert rep["max_error"] < 1e-9


def test_levy_khintchine_rejects_identity_mass():
    with pytest.raises(ValueError):
        levy_khintchine_check(PLANE, PLANE_FAMILY, DiscreteMeasure.delta(PLANE.grid, 0))


@pytest.mark.parametrize("n", [2, 4, 8])
def test_infinite_divisibility_of_heat_semigroup(n):
    gamma_1 = semigroup_measure(PLANE_DOMAIN, PLANE.grid, 1.0)
    root = semigroup_measure(PLANE_DOMAIN, PLANE.grid, 1.0 / n)
    assert nfold(PLANE, root, n).tv_distance(gamma_1) < 1e-8


def test_family_invariants():
    phi = PLANE_FAMILY.values
    np.testing.assert_array_equal(phi[0], 1.0)
    assert np.max(np.abs(phi)) <= 1 + 1e-10
    with pytest.raises(ValueError):
        TrivializingFamily(2 * phi, PLANE_FAMILY.eigenvalues, 0)


def test_invariance_of_lebesgue_weights():
    m = DiscreteMeasure(LINE.grid, LINE.grid.weights)
    assert invariance_check(LINE, m) < 1e-8
    assert invariance_check(LINE, m, [0]) == 0.0
    assert invariance_check(LINE, 3.0 * m) == pytest.approx(3.0 * invariance_check(LINE, m), abs=1e-15)


def test_clip_negatives_policy():
    w = np.array([0.5, 0.5 + 1e-10, -1e-10])
    out, mass, clipped = clip_negatives(w)
    assert clipped and mass == pytest.approx(1e-10) and out.min() == 0 and out.sum() == pytest.approx(1.0)
    w = np.array([0.6, 0.5, -0.1])
    out, mass, clipped = clip_negatives(w)
    assert not clipped and out[2] == -0.1


def test_axiom_suite_small_grid():
    domain = DomainSpec.rectangle((1.0, 2.0))
    table = rectangle_table(domain.betas, n=11)
    family = TrivializingFamily.rectangle(domain, table.grid, 25)
    semigroup = [(t, semigroup_measure(domain, table.grid, t)) for t in (0.1, 0.2)]
    rep = check_fltc_axioms(table, family, semigroup, transition_oracle(domain, table.grid))
    assert rep.deviations["identity"] == 0.0
    assert rep.deviations["commutativity"] == 0.0
    assert rep.all_passed, rep.deviations
    assert rep.rank == 25


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 120), st.integers(0, 120))
def test_commutativity_of_atoms(i, j):
    g = PLANE.grid
    a, b = DiscreteMeasure.delta(g, i), DiscreteMeasure.delta(g, j)
    assert PLANE.convolve(a, b).tv_distance(PLANE.convolve(b, a)) == 0.0
