import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gmclab import chaos, gaussian, kernel
from gmclab.domain import build_grid
from gmclab.kernel import KahaneFamily
from gmclab.rng import SeedRecord


def kahane_setup(n=8, C=8.0, gamma=1.0):
    g = build_grid(1, (0.0, 1.0), n)
    return g, kernel.eval_kernel(KahaneFamily(C, gamma), g)


def test_zero_kernel_gives_reference_measure(seed):
    g = build_grid(1, (0.0, 1.0), 6, density="linear")
    cov = kernel.zero_cov(6)
    m = chaos.build_chaos(gaussian.sample_field(cov, seed), cov, g)
    assert np.array_equal(m.weights, g.cell_measure)


def test_half_diagonal_field_gives_reference_measure(cov2, grid2):
    x = gaussian.FieldSample(cov2.diag / 2, np.zeros(2), cov2.key)
    m = chaos.build_chaos(x, cov2, grid2)
    np.testing.assert_array_equal(m.weights, grid2.cell_measure)
    assert m.total_mass == 1.0


def test_two_cell_cross_moment(cov2, grid2, seed):
    x, _ = gaussian.sample_ensemble(cov2, seed, 200_000)
    w, _ = chaos.chaos_weights(x, cov2.diag, grid2.cell_measure)
    prod = w[:, 0] * w[:, 1]
    se = prod.std(ddof=1) / math.sqrt(prod.size)
    assert abs(prod.mean() - 0.25 * math.exp(0.2)) <= 3 * se


def test_expected_mass(seed):
    g, cov = kahane_setup()
    x, _ = gaussian.sample_ensemble(cov, seed, 50_000)
    w, _ = chaos.chaos_weights(x, cov.diag, g.cell_measure)
    tot = w.sum(axis=1)
    assert abs(tot.mean() - 1.0) <= 3 * tot.std(ddof=1) / math.sqrt(tot.size)


def test_weights_are_positive_and_csv(cov2, grid2, seed):
    m = chaos.build_chaos(gaussian.sample_field(cov2, seed), cov2, grid2)
    assert np.all(m.weights > 0)
    lines = m.to_csv().splitlines()
    assert lines[0] == "cell_index,weight" and len(lines) == 3
    assert float(lines[1].split(",")[1]) == m.weights[0]


def test_size_mismatch_rejected(cov2, seed):
    x = gaussian.sample_field(cov2, seed)
    with pytest.raises(ValueError):
        chaos.build_chaos(x, cov2, build_grid(1, (0.0, 1.0), 3))


# --- scaled chaos -------------------------------------------------------------

def test_scale_zero_is_reference(cov2, grid2, seed):
    x = gaussian.sample_field(cov2, seed)
    np.testing.assert_array_equal(chaos.build_scaled_chaos(x, cov2, grid2, 0.0).weights, grid2.cell_measure)


def test_scale_one_is_plain_chaos(cov2, grid2, seed):
    x = gaussian.sample_field(cov2, seed)
    np.testing.assert_array_equal(chaos.build_scaled_chaos(x, cov2, grid2, 1.0).weights,
                                  chaos.build_chaos(x, cov2, grid2).weights)


@pytest.mark.parametrize("c", [1.5, -1.01])
def test_scale_outside_unit_interval_rejected(cov2, grid2, seed, c):
    with pytest.raises(ValueError):
        chaos.build_scaled_chaos(gaussian.sample_field(cov2, seed), cov2, grid2, c)


def test_scaled_chaos_as_conditional_expectation():
    # X = c Y + sqrt(1 - c^2) Y' with Y' independent; averaging the plain
    # chaos of X over Y' recovers the scaled chaos of Y.
    g, cov = kahane_setup(4, 4.0)
    c = 0.6
    y = gaussian.sample_field(cov, SeedRecord(21))
    yp, _ = gaussian.sample_ensemble(cov, SeedRecord(22), 40_000)
    x = c * y.values + math.sqrt(1 - c * c) * yp
    w, _ = chaos.chaos_weights(x, cov.diag, g.cell_measure)
    target = chaos.build_scaled_chaos(y, cov, g, c).weights
    se = w.std(axis=0, ddof=1) / math.sqrt(w.shape[0])
    assert np.all(np.abs(w.mean(axis=0) - target) <= 3.5 * se)


def test_second_moment_closed_form_monotone_in_scale():
    g, cov = kahane_setup()
    vals = [chaos.second_moment_closed_form(cov, g, c) for c in (0.0, 0.3, 0.6, 1.0)]
    assert vals[0] == pytest.approx(1.0)
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert chaos.second_moment_closed_form(cov, g, 0.5, 0.0) == pytest.approx(1.0)


def test_second_moment_of_scaled_mass():
    g, cov = kahane_setup(6, 4.0)
    x, _ = gaussian.sample_ensemble(cov, SeedRecord(13), 100_000)
    w, _ = chaos.chaos_weights(x, cov.diag, g.cell_measure, 0.7)
    sq = w.sum(axis=1) ** 2
    target = chaos.second_moment_closed_form(cov, g, 0.7)
    assert abs(sq.mean() - target) <= 3 * sq.std(ddof=1) / math.sqrt(sq.size)


# --- exponent clamp -----------------------------------------------------------

def test_clamp_counts_extreme_exponents():
    w, n = chaos.chaos_weights(np.array([0.0, 800.0, -900.0]), np.zeros(3), np.ones(3))
    assert n == 2
    assert np.all(np.isfinite(w))
    assert w[1] == math.exp(chaos.EXP_CLAMP)


def test_clamp_reported_on_measure():
    g = build_grid(1, (0.0, 1.0), 2)
    cov = kernel.cov_from_entries(np.eye(2))
    x = gaussian.FieldSample(np.array([1000.0, 0.0]), np.zeros(2), cov.key)
    assert chaos.build_chaos(x, cov, g).clamped == 1


# --- martingale ---------------------------------------------------------------

def test_single_level_martingale_is_chaos():
    g, cov = kahane_setup()
    (m,) = chaos.martingale_sequence([cov], g, SeedRecord(3))
    x = gaussian.sample_field(cov, SeedRecord(3))
    np.testing.assert_allclose(m.weights, chaos.build_chaos(x, cov, g).weights, rtol=1e-13)


def test_martingale_levels_share_prefix():
    g = build_grid(1, (0.0, 1.0), 16)
    levels = kernel.sigma_positive_decompose(KahaneFamily(8.0, 1.0), g, 3)
    fields = chaos.martingale_fields(levels, SeedRecord(5), 10)
    short = chaos.martingale_fields(levels[:2], SeedRecord(5), 10)
    for a, b in zip(short, fields):
        np.testing.assert_array_equal(a, b)
    seq = chaos.martingale_sequence(levels, g, SeedRecord(5))
    np.testing.assert_allclose(seq[-1].normalization, sum(l.diag for l in levels), rtol=1e-14)


def test_martingale_mean_mass():
    g = build_grid(1, (0.0, 1.0), 16)
    levels = kernel.sigma_positive_decompose(KahaneFamily(8.0, 1.0), g, 3)
    fields = chaos.martingale_fields(levels, SeedRecord(8), 40_000)
    var = np.zeros(g.size)
    for lvl, x in zip(levels, fields):
        var = var + lvl.diag
        tot = chaos.chaos_weights(x, var, g.cell_measure)[0].sum(axis=1)
        assert abs(tot.mean() - 1.0) <= 3 * tot.std(ddof=1) / math.sqrt(tot.size)


def test_martingale_rejects_negative_levels(grid2):
    bad = kernel.cov_from_entries([[1.0, -0.2], [-0.2, 1.0]])
    with pytest.raises(ValueError):
        chaos.martingale_sequence([bad], grid2, SeedRecord(1))
    with pytest.raises(ValueError):
        chaos.martingale_sequence([], grid2, SeedRecord(1))


# --- integration and shifts -------------------------------------------------

def test_integrate_is_linear(cov2, grid2, seed):
    m = chaos.build_chaos(gaussian.sample_field(cov2, seed), cov2, grid2)
    f, h = np.array([1.0, -3.0]), np.array([0.5, 2.0])
    assert chaos.integrate(m, 2 * f + h) == pytest.approx(2 * chaos.integrate(m, f) + chaos.integrate(m, h))
    assert chaos.integrate(m, np.ones(2)) == pytest.approx(m.total_mass)
    with pytest.raises(ValueError):
        chaos.integrate(m, np.ones(3))


def test_reweight_by_opposite_shift_undoes(cov2, grid2, seed):
    m = chaos.build_chaos(gaussian.sample_field(cov2, seed), cov2, grid2)
    xi = gaussian.shift_from_test_function([1.0, 2.0], cov2, grid2)
    back = chaos.reweight_shift(chaos.reweight_shift(m, xi), xi.scale(-1.0))
    np.testing.assert_allclose(back.weights, m.weights, rtol=1e-14)


@settings(max_examples=40, deadline=None)
@given(f=st.lists(st.floats(-3, 3), min_size=8, max_size=8), stream=st.integers(0, 10_000))
def test_shifted_field_chaos_equals_reweighted_chaos(f, stream):
    g, cov = kahane_setup()
    x = gaussian.sample_field(cov, SeedRecord(1, stream=stream))
    xi = gaussian.shift_from_test_function(f, cov, g)
    lhs = chaos.build_chaos(gaussian.cameron_martin_shift(x, xi), cov, g).weights
    rhs = chaos.reweight_shift(chaos.build_chaos(x, cov, g), xi).weights
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12)
