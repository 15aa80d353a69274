import json
import math

import numpy as np
import pytest

from gmclab import kernel, report, verify
from gmclab.domain import build_grid
from gmclab.kernel import KahaneFamily
from gmclab.report import TestReport
from gmclab.rng import SeedRecord


@pytest.fixture
def spec2():
    cov, grid = verify.example_2x2()
    return verify.EnsembleSpec(cov, grid, 100_000, SeedRecord(7))


# --- report helpers -----------------------------------------------------------

def test_compare_statistical_and_deterministic():
    r = report.compare("a", [1.0, 2.0, 3.0], 2.0)
    assert r.kind == report.STATISTICAL and r.verdict and r.se == pytest.approx(1 / math.sqrt(3))
    d = report.compare("b", [0.5] * 10, 0.5)
    assert d.kind == report.DETERMINISTIC and d.verdict and d.se == 0.0
    assert not report.compare("c", [0.5] * 10, 0.5 + 1e-9).verdict


def test_report_json_is_strict():
    r = TestReport("x", np.float64(1.5), 1.0, 0.1, 10, False, metadata={"arr": np.arange(2), "bad": float("nan")})
    d = json.loads(r.to_json())
    assert d["verdict"] == "fail" and d["metadata"]["arr"] == [0, 1] and d["metadata"]["bad"] == "nan"
    assert set(d) == {"name", "estimate", "target", "se", "replicas", "verdict", "kind", "metadata"}


def test_bonferroni_threshold():
    assert report.bonferroni_z(3.0, 1) == 3.0
    z = report.bonferroni_z(3.0, 136)
    # family-wise rate of 136 tests at z equals the single-test rate at 3
    from scipy.stats import norm
    assert 136 * 2 * norm.sf(z) == pytest.approx(2 * norm.sf(3.0), rel=1e-10)
    assert z > 3.0


def test_apply_bonferroni_rejudges_only_statistical():
    reps = [TestReport("s", 3.1, 0.0, 1.0, 100, False, metadata={"z": 3.0}),
            TestReport("d", 1.0, 2.0, 0.0, 1, False, report.DETERMINISTIC)]
    report.apply_bonferroni(reps)
    assert reps[0].verdict is False  # one comparison: threshold stays at 3
    reps.append(TestReport("t", 0.0, 0.0, 1.0, 100, True, metadata={"z": 3.0}))
    report.apply_bonferroni(reps)
    assert reps[0].verdict and not reps[1].verdict
    assert reps[0].metadata["z"] == pytest.approx(report.bonferroni_z(3.0, 2))


def test_summary_and_table():
    reps = [TestReport("ok", 1, 1, 0, 1, True), TestReport("bad", 1, 2, 0, 1, False),
            TestReport("info", 1, 0, 0, 1, False, report.INFORMATIONAL)]
    s = report.summarize(reps)
    assert s["failed"] == ["bad"] and not s["passed"]
    table = report.format_table(reps)
    assert "FAIL" in table and "info" in table.splitlines()[-1]
    assert verify.exit_code(reps) == 1
    assert verify.exit_code(reps[:1] + reps[2:]) == 0


# --- individual checks --------------------------------------------------------

def test_expectation_example(spec2):
    r = verify.test_expectation(spec2, [0])
    assert r.target == 0.5 and r.verdict and r.replicas == 100_000


def test_second_moment_example(spec2):
    (r,) = verify.test_second_moment(spec2, [(0, 1)])
    assert r.target == pytest.approx(0.25 * math.exp(0.2), rel=1e-15)
    assert r.verdict
    (s,) = verify.test_second_moment(spec2, [(0, 1)], c=0.5, c2=1.0)
    assert s.target == pytest.approx(0.25 * math.exp(0.1), rel=1e-15)
    with pytest.raises(ValueError):
        verify.test_second_moment(spec2, [(0, 1)], c=1.2)


def test_all_pairs_count():
    assert len(verify.all_pairs(16)) == 136
    assert verify.all_pairs(2) == [(0, 0), (0, 1), (1, 1)]


def test_shift_covariance_is_exact():
    cov, grid = verify.example_2x2()
    seed = SeedRecord(1)
    spec = verify.EnsembleSpec(cov, grid, 20, seed)
    r = verify.test_shift_covariance(spec, verify.random_shifts(cov, grid, 5, seed.child(3)))
    assert r.verdict and r.estimate <= 1e-12 and r.kind == report.DETERMINISTIC


def test_peyriere_example(spec2):
    lin, bounded = verify.test_peyriere(spec2, g=[1.0, 0.0], cells=[1])
    assert lin.target == pytest.approx(0.1, rel=1e-15)
    assert lin.verdict and bounded.verdict
    with pytest.raises(ValueError):
        verify.test_peyriere(spec2, f_kind="quadratic")


def test_martingale_checks():
    levels, grid = verify.martingale_fixture(3, 16)
    left = np.flatnonzero(grid.centers[:, 0] < 0.5)
    reps = verify.test_martingale(levels, grid, left, 20_000, SeedRecord(4))
    assert [r.name for r in reps] == ["martingale[M2|M1]", "martingale[M3|M2]"]
    assert all(r.verdict for r in reps)
    norm = verify.test_martingale_normalization(levels, grid, 20_000, SeedRecord(5))
    assert len(norm) == 3 and all(r.verdict for r in norm)


def test_uniqueness_small():
    reps = verify.test_uniqueness(KahaneFamily(4.0, 1.0), build_grid(1, (0.0, 1.0), 8), 2, 20_000, SeedRecord(6))
    assert all(r.verdict for r in reps)


def test_kahane_comparison_rejects_unordered():
    g = build_grid(1, (0.0, 1.0), 4)
    k1 = kernel.eval_kernel(KahaneFamily(16.0, 1.0), g)
    k2 = kernel.eval_kernel(KahaneFamily(4.0, 1.0), g)
    with pytest.raises(ValueError, match="not ordered"):
        verify.test_kahane_comparison(k1, k2, g, 100, SeedRecord(1))
    reps = verify.test_kahane_comparison(k2, k1, g, 20_000, SeedRecord(1))
    assert len(reps) == 4 and all(r.verdict for r in reps)


def test_ui_rejects_supercritical():
    g = build_grid(1, (0.0, 1.0), 8)
    with pytest.raises(ValueError):
        verify.test_uniform_integrability_diagnostic([1.5], 8.0, g, 100, SeedRecord(1))
    (r,) = verify.test_uniform_integrability_diagnostic([0.5], 8.0, g, 1000, SeedRecord(1))
    assert r.informational and set(r.metadata["tails"]) == {"2", "5", "10"}


def test_zero_kernel_reports_are_exact():
    reps = verify.test_zero_kernel(build_grid(1, (0.0, 1.0), 4), 50, SeedRecord(3))
    assert all(r.verdict and r.kind == report.DETERMINISTIC for r in reps)


def test_mollifier_ladder_validation():
    g = build_grid(1, (0.0, 1.0), 16)
    cov = kernel.eval_kernel(kernel.LogKernel(1.0), g)
    with pytest.raises(ValueError):
        verify.test_mollifier_independence(cov, g, (kernel.BOX, kernel.TRIANGLE), [], 10, SeedRecord(1))
    with pytest.raises(ValueError):
        verify.test_mollifier_independence(cov, g, (kernel.BOX, kernel.TRIANGLE), [0.1, 0.2], 10, SeedRecord(1))


def test_identical_mollifiers_give_zero_distance():
    g = build_grid(1, (0.0, 1.0), 32)
    cov = kernel.eval_kernel(kernel.LogKernel(1.0), g)
    r = verify.test_mollifier_independence(cov, g, (kernel.BOX, kernel.BOX), [0.25, 0.125], 200, SeedRecord(1))
    assert r.estimate == 0.0 and r.verdict


# --- suites -------------------------------------------------------------------

def test_run_suite_empty_and_unknown():
    assert verify.run_suite([]) == []
    with pytest.raises(verify.UnknownSuiteError, match="nosuchsuite"):
        verify.run_suite(["nosuchsuite"])


def test_exact_suite_independent_of_seed():
    a = verify.run_suite(["exact"], verify.SuiteConfig(seed=1))
    b = verify.run_suite(["exact"], verify.SuiteConfig(seed=2))
    assert [r.verdict for r in a] == [r.verdict for r in b]
    assert all(r.verdict for r in a)
    assert all(r.metadata["suite"] == "exact" for r in a)


def test_suite_runs_are_reproducible():
    cfg = verify.SuiteConfig(seed=3, replicas=2000)
    a = [r.to_json() for r in verify.run_suite(["moments", "peyriere"], cfg)]
    b = [r.to_json() for r in verify.run_suite(["moments", "peyriere"], cfg)]
    assert a == b


def test_bonferroni_flag_raises_thresholds():
    reps = verify.run_suite(["moments"], verify.SuiteConfig(replicas=5000, bonferroni=True))
    zs = {r.metadata["z"] for r in reps if r.kind == report.STATISTICAL}
    assert len(zs) == 1 and zs.pop() == pytest.approx(report.bonferroni_z(3.0, len(reps)))
