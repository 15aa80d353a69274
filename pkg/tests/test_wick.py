import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import hermite_e

from gmclab import gaussian, kernel, wick
from gmclab.domain import build_grid
from gmclab.rng import SeedRecord


def test_small_values():
    assert wick.hermite(2, 2.0) == 3.0
    assert wick.hermite(3, 1.0) == -2.0
    np.testing.assert_array_equal(wick.hermite(0, np.array([-4.0, 0.0, 9.0])), 1.0)
    assert wick.hermite(1, 0.7) == 0.7


def test_table_matches_numpy_conversion():
    table = wick.hermite_table()
    for n, row in enumerate(table):
        c = np.zeros(n + 1)
        c[n] = 1
        np.testing.assert_array_equal(np.array(row, dtype=float), hermite_e.herme2poly(c))
    assert table[4] == (3, 0, -6, 0, 1)


@settings(max_examples=50, deadline=None)
@given(x=st.floats(-6, 6), n=st.integers(0, wick.NMAX))
def test_evaluation_matches_table_and_parity(x, n):
    coeffs = np.array(wick.hermite_table()[n], dtype=float)
    v = wick.hermite(n, x)
    assert v == pytest.approx(np.polynomial.polynomial.polyval(x, coeffs), rel=1e-9, abs=1e-6)
    assert wick.hermite(n, -x) == pytest.approx((-1) ** n * v, rel=1e-12, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(x=st.floats(-4, 4), n=st.integers(2, wick.NMAX))
def test_recurrence(x, n):
    lhs = wick.hermite(n, x)
    rhs = x * wick.hermite(n - 1, x) - (n - 1) * wick.hermite(n - 2, x)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-9)


def test_generating_function():
    # exp(t x - t^2 / 2) = sum_n h_n(x) t^n / n!
    t = 0.3
    for x in (-1.5, 0.0, 0.4, 2.2):
        series = sum(wick.hermite(n, x) * t**n / math.factorial(n) for n in range(wick.NMAX + 1))
        assert series == pytest.approx(math.exp(t * x - t * t / 2), abs=1e-6)


def test_order_limits():
    with pytest.raises(ValueError):
        wick.hermite(wick.NMAX + 1, 0.0)
    with pytest.raises(ValueError):
        wick.hermite(-1, 0.0)
    assert wick.hermite(14, 0.0, nmax=14) == pytest.approx(hermite_e.hermeval(0.0, [0] * 14 + [1]))


def test_wick_square(cov2, seed):
    x = gaussian.sample_field(cov2, seed)
    np.testing.assert_array_equal(wick.wick_power_field(x, cov2, 2), x.values**2 - cov2.diag)
    np.testing.assert_array_equal(wick.wick_power_field(x, cov2, 1), x.values)
    np.testing.assert_array_equal(wick.wick_power_field(x, cov2, 0), 1.0)


def test_wick_power_scaling():
    x, var = np.array([0.3, -1.2]), np.array([4.0, 0.25])
    for n in range(1, 7):
        sigma = np.sqrt(var)
        np.testing.assert_allclose(wick.wick_power(x, var, n), sigma**n * wick.hermite(n, x / sigma), rtol=1e-14)
    assert wick.wick_power(np.array([1.0]), np.array([0.0]), 3)[0] == 0.0


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_wick_powers_are_centered(cov2, n):
    x, _ = gaussian.sample_ensemble(cov2, SeedRecord(17), 100_000)
    w = wick.wick_power(x, cov2.diag, n)
    se = w.std(axis=0, ddof=1) / math.sqrt(w.shape[0])
    assert np.all(np.abs(w.mean(axis=0)) <= 3 * se)


def test_wick_targets(cov2, grid2):
    assert wick.wick_l2_target(kernel.zero_cov(2), grid2.cell_measure, 3) == 0.0
    assert wick.wick_l2_target(kernel.cov_from_entries([[1.0]]), np.ones(1), 2) == 2.0
    mu = np.ones(2)
    assert wick.wick_l2_target(cov2, mu, 2) == pytest.approx(4.16, rel=1e-14)
    assert wick.wick_l2_target(cov2, mu, 3) == pytest.approx(12.096, rel=1e-14)


def test_wick_l2_check_zero_kernel():
    g = build_grid(1, (0.0, 1.0), 3)
    r = wick.wick_l2_check(kernel.zero_cov(3), g, 2, 10_000, SeedRecord(1))
    assert r.verdict and r.estimate == 0.0 and r.target == 0.0


@pytest.mark.parametrize("n", [2, 3])
def test_wick_l2_check_two_by_two(n):
    g = build_grid(1, (0.0, 2.0), 2)
    cov = kernel.eval_kernel(kernel.Explicit([[1.0, 0.2], [0.2, 1.0]]), g)
    r = wick.wick_l2_check(cov, g, n, 100_000, SeedRecord(7))
    assert r.verdict, r


def test_wick_l2_check_replica_floor(cov2, grid2):
    with pytest.raises(ValueError):
        wick.wick_l2_check(cov2, grid2, 2, 9_999, SeedRecord(1))


def test_orthogonality_reports():
    reps = wick.hermite_orthogonality(4, 200_000, SeedRecord(3))
    assert len(reps) == 15
    assert sum(not r.verdict for r in reps) <= 1
    assert reps[0].kind == "deterministic" and reps[0].estimate == 1.0
