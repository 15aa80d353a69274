"""Test reports and the Monte Carlo comparison helpers that produce them."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import norm

STATISTICAL = "statistical"
DETERMINISTIC = "deterministic"
UPPER_BOUND = "upper_bound"  # estimate <= target (+ z se)
TREND = "trend"  # verdict decided by a criterion recorded in metadata
INFORMATIONAL = "informational"


@dataclass
class TestReport:
    """Outcome of one comparison.

    For ``statistical`` reports the verdict is ``|estimate - target| <= z se``;
    for ``deterministic`` ones ``|estimate - target| <= abs_tol``. Both ``z``
    and ``abs_tol`` are kept in ``metadata``.
    """

    __test__ = False

    name: str
    estimate: float
    target: float
    se: float
    replicas: int
    verdict: bool
    kind: str = STATISTICAL
    metadata: dict = field(default_factory=dict)

    @property
    def informational(self) -> bool:
        return self.kind == INFORMATIONAL

    def rejudge(self, z: float) -> "TestReport":
        """Re-evaluate a statistical verdict at a different threshold."""
        if self.kind == STATISTICAL and self.se > 0:
            self.verdict = abs(self.estimate - self.target) <= z * self.se
            self.metadata["z"] = z
        elif self.kind == UPPER_BOUND and self.se > 0:
            self.verdict = self.estimate <= self.target + z * self.se
            self.metadata["z"] = z
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["verdict"] = "pass" if self.verdict else "fail"
        return _clean(d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _clean(obj):
    """Make ``obj`` strict-JSON friendly (no numpy scalars, no NaN)."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def mean_se(samples) -> tuple[float, float]:
    """Sample mean and its standard error."""
    s = np.asarray(samples, dtype=float)
    if s.size < 2:
        return float(s.mean()), 0.0
    return float(s.mean()), float(s.std(ddof=1) / math.sqrt(s.size))


def compare(name: str, samples, target: float, z: float = 3.0, abs_tol: float = 1e-12,
            **metadata) -> TestReport:
    """Mean of ``samples`` against an exact ``target``.

    Constant samples (zero standard error) take the deterministic path.
    """
    est, se = mean_se(samples)
    n = int(np.size(samples))
    if se == 0.0:
        ok = abs(est - target) <= abs_tol
        return TestReport(name, est, float(target), 0.0, n, ok, DETERMINISTIC,
                          {"abs_tol": abs_tol, "z": z, **metadata})
    ok = abs(est - target) <= z * se
    return TestReport(name, est, float(target), se, n, ok, STATISTICAL, {"z": z, **metadata})


def compare_two(name: str, a, b, z: float = 3.0, abs_tol: float = 1e-12, **metadata) -> TestReport:
    """Means of two independent ensembles, judged at ``z`` pooled standard errors."""
    ea, sa = mean_se(a)
    eb, sb = mean_se(b)
    se = math.hypot(sa, sb)
    n = int(np.size(a))
    if se == 0.0:
        return TestReport(name, ea, eb, 0.0, n, abs(ea - eb) <= abs_tol, DETERMINISTIC,
                          {"abs_tol": abs_tol, "z": z, "se_target": sb, **metadata})
    return TestReport(name, ea, eb, se, n, abs(ea - eb) <= z * se, STATISTICAL,
                      {"z": z, "se_target": sb, "se_estimate": sa, **metadata})


def bonferroni_z(z: float, comparisons: int) -> float:
    """Threshold keeping the family-wise false-failure rate of ``comparisons`` tests at that of one."""
    if comparisons <= 1:
        return z
    alpha = 2.0 * norm.sf(z)
    return float(norm.isf(alpha / (2.0 * comparisons)))


def apply_bonferroni(reports: list[TestReport]) -> list[TestReport]:
    stat = [r for r in reports if r.kind in (STATISTICAL, UPPER_BOUND) and r.se > 0]
    for r in stat:
        # the unadjusted threshold is kept so that repeated calls do not compound
        base = r.metadata.setdefault("z_single", r.metadata.get("z", 3.0))
        r.rejudge(bonferroni_z(base, len(stat)))
    return reports


def summarize(reports: list[TestReport]) -> dict:
    failed = [r.name for r in reports if not r.verdict and not r.informational]
    return {
        "tests": len(reports),
        "comparisons": sum(r.kind in (STATISTICAL, UPPER_BOUND) for r in reports),
        "failed": failed,
        "passed": not failed,
    }


def format_table(reports: list[TestReport]) -> str:
    rows = [("test", "estimate", "target", "se", "replicas", "verdict")]
    for r in reports:
        verdict = "info" if r.informational else ("pass" if r.verdict else "FAIL")
        rows.append((r.name, f"{r.estimate:.6g}", f"{r.target:.6g}", f"{r.se:.3g}", str(r.replicas), verdict))
    widths = [max(len(row[k]) for row in rows) for k in range(len(rows[0]))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in rows)
