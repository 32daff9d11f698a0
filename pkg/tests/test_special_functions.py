import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fltc.errors import DomainError
from fltc.special_functions import (BesselZeroTable, annulus_cross, annulus_cross_zeros,
                                    bessel_j, bessel_j_prime, bessel_y, bessel_y_prime,
                                    jprime_zeros)
from oracles import cross_oracle, j_series, jprime_oracle, scan_zeros, y_integral


def test_j_small_argument_values():
    assert bessel_j(0, 0.0) == 1.0
    assert bessel_j(1, 0.0) == 0.0
    assert abs(bessel_j(0, 2.404825557695773)) < 1e-12


@pytest.mark.parametrize("m", [0, 1, 2, 5, 10])
@pytest.mark.parametrize("x", [0.1, 0.7, 2.5, 6.0, 11.5])
def test_j_matches_power_series(m, x):
    assert bessel_j(m, x) == pytest.approx(j_series(m, x), abs=1e-12)


def test_j0_first_zero_matches_series_bisection():
    from scipy.optimize import bisect
    z = bisect(lambda x: j_series(0, x), 2.0, 3.0, xtol=1e-15)
    assert abs(bessel_j(0, z)) < 1e-12
    assert z == pytest.approx(2.404825557695773, abs=1e-12)


def test_y_singular_at_origin():
    assert bessel_y(0, 0.0) == -math.inf
    assert bessel_y(3, 0.0) == -math.inf
    assert bessel_y(0, 1e-300) < -400
    with pytest.raises(DomainError):
        bessel_y(0, -1.0)


@pytest.mark.parametrize("m,x", [(1, 1.0), (0, 0.5), (2, 3.3), (4, 7.0), (3, 20.0)])
def test_y_matches_integral_representation(m, x):
    assert bessel_y(m, x) == pytest.approx(y_integral(m, x), abs=1e-10)


def test_derivatives_at_origin():
    assert bessel_j_prime(0, 0.0) == 0.0
    assert bessel_j_prime(1, 0.0) == 0.5
    assert abs(bessel_j_prime(0, 3.8317059702075123)) < 1e-12


@pytest.mark.parametrize("m", [0, 1, 3, 7])
def test_derivatives_match_finite_differences(m):
    xs = np.linspace(0.4, 30.0, 37)
    h = 1e-5
    fd_j = (bessel_j(m, xs + h) - bessel_j(m, xs - h)) / (2 * h)
    fd_y = (bessel_y(m, xs + h) - bessel_y(m, xs - h)) / (2 * h)
    np.testing.assert_allclose(bessel_j_prime(m, xs), fd_j, atol=1e-8)
    np.testing.assert_allclose(bessel_y_prime(m, xs), fd_y, rtol=1e-7, atol=1e-8)


def test_vectorized_and_scalar_agree():
    xs = np.array([0.5, 1.5, 9.0])
    v = bessel_j(2, xs)
    assert isinstance(bessel_j(2, 1.5), float)
    assert v[1] == bessel_j(2, 1.5)


@pytest.mark.parametrize("bad", [-1, 1.5, True])
def test_orders_must_be_nonnegative_integers(bad):
    with pytest.raises(DomainError):
        bessel_j(bad, 1.0)


def test_negative_argument_rejected():
    with pytest.raises(DomainError):
        bessel_j(0, -0.1)


@settings(max_examples=200, deadline=None)
@given(m=st.integers(0, 10), x=st.floats(0.1, 50.0))
def test_wronskian(m, x):
    w = bessel_j(m + 1, x) * bessel_y(m, x) - bessel_j(m, x) * bessel_y(m + 1, x)
    assert w == pytest.approx(2 / (math.pi * x), abs=1e-10)


@pytest.mark.parametrize("m,first", [(1, 1.8412), (0, 3.8317)])
def test_first_derivative_zero(m, first):
    table = jprime_zeros(m, 1)
    oracle = scan_zeros(jprime_oracle(m), 1e-3, 1, step=1e-3)
    assert table[0] == pytest.approx(oracle[0], abs=1e-10)
    assert table[0] == pytest.approx(first, abs=1e-4)


@pytest.mark.parametrize("m", range(6))
def test_jprime_zero_table_against_fine_scan(m):
    table = jprime_zeros(m, 20)
    oracle = scan_zeros(jprime_oracle(m), 1e-3, 20)
    np.testing.assert_allclose(table.zeros, oracle, atol=1e-9)
    assert max(table.residuals) < 1e-10
    for z in table:
        assert np.sign(bessel_j_prime(m, z - 1e-6)) != np.sign(bessel_j_prime(m, z + 1e-6))


@pytest.mark.parametrize("m", range(4))
def test_annulus_cross_zeros_against_fine_scan(m):
    table = annulus_cross_zeros(m, 0.3, 10)
    oracle = scan_zeros(cross_oracle(m, 0.3), 1e-3, 10)
    np.testing.assert_allclose(table.zeros, oracle, atol=1e-9)
    residual = np.abs(annulus_cross(m, 0.3, np.array(table.zeros)))
    assert residual.max() < 1e-10


def test_annulus_cross_three_zeros_m1():
    table = annulus_cross_zeros(1, 0.3, 3)
    oracle = scan_zeros(cross_oracle(1, 0.3), 1e-3, 3)
    np.testing.assert_allclose(table.zeros, oracle, atol=1e-9)


def test_annulus_ratio_validated():
    with pytest.raises(DomainError):
        annulus_cross_zeros(0, 1.2, 3)


@pytest.mark.parametrize("m", range(1, 6))
def test_first_derivative_zero_is_global_max_beyond(m):
    z = jprime_zeros(m, 1)[0]
    xs = np.linspace(z + 1e-3, 100.0, 200001)
    assert abs(bessel_j(m, z)) > np.max(np.abs(bessel_j(m, xs)))


def test_zero_table_round_trip():
    table = annulus_cross_zeros(2, 0.3, 4)
    back = BesselZeroTable.from_json(table.to_json())
    assert back == table
    assert back.to_dict()["kind"] == "annulus_cross"


def test_zero_table_rejects_unsorted():
    with pytest.raises(ValueError):
        BesselZeroTable("jprime", 0, (3.0, 2.0))
