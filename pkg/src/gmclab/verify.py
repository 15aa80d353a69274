"""Statistical verification harness.

Each function checks one identity of subcritical chaos on a discretized
field and returns :class:`~gmclab.report.TestReport` objects. Suites bundle
them with canonical fixtures; :func:`run_suite` runs a named selection.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import chaos, gaussian, kernel, wick
from .domain import DomainGrid, build_grid, refine
from .kernel import BOX, TRIANGLE, CovMatrix, KahaneFamily, LogKernel, Mollifier
from .report import (DETERMINISTIC, INFORMATIONAL, TREND, UPPER_BOUND, TestReport, apply_bonferroni,
                     compare, compare_two, mean_se)
from .rng import SeedRecord

log = logging.getLogger(__name__)

Z_DEFAULT = 3.0


@dataclass(frozen=True)
class EnsembleSpec:
    cov: CovMatrix
    grid: DomainGrid
    replicas: int
    master_seed: SeedRecord = field(default_factory=lambda: SeedRecord(0))

    def __post_init__(self):
        if self.replicas < 1:
            raise ValueError("replicas must be at least 1")
        if self.cov.size != self.grid.size:
            raise ValueError("covariance and grid sizes differ")

    def fields(self, namespace: int = 0) -> np.ndarray:
        x, _ = gaussian.sample_ensemble(self.cov, self.master_seed.child(namespace), self.replicas)
        return x

    def weights(self, namespace: int = 0, c: float = 1.0) -> np.ndarray:
        w, _ = chaos.chaos_weights(self.fields(namespace), self.cov.diag, self.grid.cell_measure, c)
        return w


def _meta(spec: EnsembleSpec, **extra) -> dict:
    return {"N": spec.grid.size, "seed": spec.master_seed.seed, **extra}


def _cell_mask(grid: DomainGrid, cells) -> np.ndarray:
    mask = np.zeros(grid.size, dtype=bool)
    if cells is None:
        mask[:] = True
    else:
        mask[np.asarray(cells, dtype=int)] = True
    return mask


# ---------------------------------------------------------------------------
# moments


def test_expectation(spec: EnsembleSpec, cells: Optional[Sequence[int]] = None,
                     z: float = Z_DEFAULT) -> TestReport:
    """Ensemble mean of ``M[A]`` against ``mu[A]``."""
    mask = _cell_mask(spec.grid, cells)
    mass = spec.weights()[:, mask].sum(axis=1)
    target = math.fsum(spec.grid.cell_measure[mask])
    label = "T" if cells is None else ",".join(str(int(c)) for c in cells)
    return compare(f"expectation[{label}]", mass, target, z, **_meta(spec))


def test_second_moment(spec: EnsembleSpec, pairs: Sequence[tuple[int, int]], c: float = 1.0,
                       c2: Optional[float] = None, z: float = Z_DEFAULT) -> list[TestReport]:
    """``E[m_i m'_j]`` against ``exp(c c' K_ij) mu_i mu_j`` for each pair.

    With ``c2`` given, ``m`` and ``m'`` are the chaos measures of ``cX`` and
    ``c'X`` built from the same field.
    """
    c2 = c if c2 is None else c2
    for a in (c, c2):
        if abs(a) > 1:
            raise ValueError("scales must satisfy |c| <= 1")
    x = spec.fields()
    mu = spec.grid.cell_measure
    w1, _ = chaos.chaos_weights(x, spec.cov.diag, mu, c)
    w2 = w1 if c2 == c else chaos.chaos_weights(x, spec.cov.diag, mu, c2)[0]
    out = []
    for i, j in pairs:
        target = math.exp(c * c2 * spec.cov.entries[i, j]) * mu[i] * mu[j]
        out.append(compare(f"second_moment[{i},{j}]", w1[:, i] * w2[:, j], target, z,
                           **_meta(spec, c=c, c2=c2)))
    return out


def all_pairs(n: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n) for j in range(i, n)]


def test_shift_covariance(spec: EnsembleSpec, shifts: Sequence[gaussian.ShiftVector],
                          abs_tol: float = 1e-12) -> TestReport:
    """Reweighting ``M(X)`` by ``exp(xi)`` against recomputing ``M(X + xi)``.

    Runs replica by replica through the public sample/shift/chaos functions.
    Cells where either path clamps its exponent are excluded and counted.
    """
    cov, grid = spec.cov, spec.grid
    half = 0.5 * cov.diag
    worst, clamped = 0.0, 0
    for r in range(spec.replicas):
        seed = SeedRecord(spec.master_seed.seed, spec.master_seed.stream + r, spec.master_seed.namespace)
        x = gaussian.sample_field(cov, seed)
        m = chaos.build_chaos(x, cov, grid)
        for xi in shifts:
            reweighted = chaos.reweight_shift(m, xi).weights
            recomputed = chaos.build_chaos(gaussian.cameron_martin_shift(x, xi), cov, grid).weights
            ok = ((np.abs(x.values - half) <= chaos.EXP_CLAMP)
                  & (np.abs(x.values + xi.field_repr - half) <= chaos.EXP_CLAMP)
                  & (np.abs(xi.field_repr) <= chaos.EXP_CLAMP)
                  & (recomputed > 0))
            clamped += int(np.count_nonzero(~ok))
            if np.any(ok):
                rel = np.abs(reweighted[ok] - recomputed[ok]) / recomputed[ok]
                worst = max(worst, float(rel.max()))
    return TestReport("shift_covariance", worst, 0.0, 0.0, spec.replicas, worst <= abs_tol, DETERMINISTIC,
                      _meta(spec, abs_tol=abs_tol, shifts=len(shifts), clamped_cells=clamped))


def random_shifts(cov: CovMatrix, grid: DomainGrid, count: int, seed: SeedRecord) -> list[gaussian.ShiftVector]:
    """Shifts generated by standard-normal test functions."""
    from .rng import replica_normals

    fs = replica_normals(seed, count, grid.size)
    return [gaussian.shift_from_test_function(f, cov, grid) for f in fs]


def _clip3(v):
    return np.minimum(v, 3.0)


def test_peyriere(spec: EnsembleSpec, g=None, cells: Optional[Sequence[int]] = None,
                  phi_cell: int = 0, phi: Callable = _clip3, f_kind: str = "both",
                  z: float = Z_DEFAULT) -> list[TestReport]:
    """Averages under the Peyriere measure against shifted averages under ``P x mu``.

    ``linear``: ``E[<X, g> M[A]]`` against ``sum_{i in A} (K g)_i mu_i``.
    ``bounded``: ``E[phi(X_k) M[A]]`` from one ensemble against
    ``mu[T] E[phi(X_k + K(k, t)) 1_A(t)]`` from an independent ensemble of
    :func:`gaussian.peyriere_ensemble` draws.
    """
    if f_kind not in ("linear", "bounded", "both"):
        raise ValueError("f_kind must be 'linear', 'bounded' or 'both'")
    grid, cov = spec.grid, spec.cov
    mask = _cell_mask(grid, cells)
    g = np.eye(grid.size)[0] if g is None else np.asarray(g, dtype=float)
    x = spec.fields()
    mass = chaos.chaos_weights(x, cov.diag, grid.cell_measure)[0][:, mask].sum(axis=1)
    out = []
    if f_kind in ("linear", "both"):
        target = float((cov.entries @ g)[mask] @ grid.cell_measure[mask])
        out.append(compare("peyriere_linear", (x @ g) * mass, target, z, **_meta(spec)))
    if f_kind in ("bounded", "both"):
        lhs = phi(x[:, phi_cell]) * mass
        shifted, t = gaussian.peyriere_ensemble(cov, grid, spec.master_seed.child(1), spec.replicas)
        rhs = grid.total_measure * phi(shifted[:, phi_cell]) * mask[t]
        out.append(compare_two("peyriere_bounded", lhs, rhs, z, **_meta(spec, phi_cell=phi_cell)))
    return out


# ---------------------------------------------------------------------------
# martingale, uniqueness


def test_martingale(levels: Sequence[CovMatrix], grid: DomainGrid, cells: Sequence[int],
                    fresh: int, seed: SeedRecord, z: float = Z_DEFAULT) -> list[TestReport]:
    """With the first ``n`` levels frozen, ``E[M_{n+1}[A] | X_n] = M_n[A]``.

    One frozen prefix is drawn; ``fresh`` independent level-``n+1`` samples
    are averaged against it, for every ``n < L``.
    """
    mask = _cell_mask(grid, cells)
    mu = grid.cell_measure
    prefix = chaos.martingale_fields(levels, seed, 1)
    out, var = [], np.zeros(grid.size)
    for n in range(1, len(levels)):
        var_n = var + levels[n - 1].diag
        frozen = prefix[n - 1][0]
        mn = float(chaos.chaos_weights(frozen, var_n, mu)[0][mask].sum())
        inc, _ = gaussian.sample_ensemble(levels[n], seed.child(seed.namespace + 100 + n), fresh)
        nxt = chaos.chaos_weights(frozen + inc, var_n + levels[n].diag, mu)[0][:, mask].sum(axis=1)
        out.append(compare(f"martingale[M{n + 1}|M{n}]", nxt, mn, z, N=grid.size, seed=seed.seed))
        var = var_n
    return out


def test_martingale_normalization(levels: Sequence[CovMatrix], grid: DomainGrid, replicas: int,
                                  seed: SeedRecord, z: float = Z_DEFAULT) -> list[TestReport]:
    """``E M_n[T] = mu[T]`` at every level of the filtration."""
    fields = chaos.martingale_fields(levels, seed, replicas)
    out, var = [], np.zeros(grid.size)
    for n, (cov, x) in enumerate(zip(levels, fields), start=1):
        var = var + cov.diag
        mass = chaos.chaos_weights(x, var, grid.cell_measure)[0].sum(axis=1)
        out.append(compare(f"martingale_mean[M{n}]", mass, grid.total_measure, z, N=grid.size, seed=seed.seed))
    return out


def test_uniqueness(spec: KahaneFamily, grid: DomainGrid, levels: int, replicas: int, seed: SeedRecord,
                    z: float = Z_DEFAULT) -> list[TestReport]:
    """Full-depth martingale route against direct chaos of the summed kernel.

    The two routes cannot share randomness, so only their laws are compared:
    first and second moments of ``M[T]`` at ``z`` pooled standard errors.
    """
    parts = kernel.sigma_positive_decompose(spec, grid, levels)
    x_mart = chaos.martingale_fields(parts, seed.child(10), replicas)[-1]
    var = np.sum([p.diag for p in parts], axis=0)
    m_mart = chaos.chaos_weights(x_mart, var, grid.cell_measure)[0].sum(axis=1)
    direct = EnsembleSpec(kernel.eval_kernel(spec, grid), grid, replicas, seed.child(20))
    m_dir = direct.weights().sum(axis=1)
    return [
        compare_two("uniqueness[mean]", m_mart, m_dir, z, N=grid.size, levels=levels),
        compare_two("uniqueness[second]", m_mart**2, m_dir**2, z, N=grid.size, levels=levels),
    ]


# ---------------------------------------------------------------------------
# approximation by mollifiers


def test_mollifier_independence(base_cov: CovMatrix, fine_grid: DomainGrid, mollifiers: tuple[Mollifier, Mollifier],
                                eps_ladder: Sequence[float], replicas: int, seed: SeedRecord,
                                coarse_grid: Optional[DomainGrid] = None, fraction: float = 0.1,
                                z: float = Z_DEFAULT) -> TestReport:
    """Coupled distance ``D(eps) = E|M_psi1,eps[T] - M_psi2,eps[T]|``.

    Both mollified fields come from the same fine-grid latent sample. Passes
    when ``D`` decreases along the ladder (one inversion tolerated, none
    larger than ``z`` paired standard errors) and the last ``D`` is below
    ``fraction * mu[T]``.
    """
    eps = [float(e) for e in eps_ladder]
    if not eps or any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("eps_ladder must be nonempty and strictly decreasing")
    coarse = fine_grid if coarse_grid is None else coarse_grid
    mu = coarse.cell_measure
    x, _ = gaussian.sample_ensemble(base_cov, seed, replicas)
    dists, rows = [], []
    for e in eps:
        masses = []
        for moll in mollifiers:
            w = kernel.mollifier_weights(coarse, fine_grid, moll, e)
            var = np.einsum("ij,jk,ik->i", w, base_cov.entries, w)
            masses.append(chaos.chaos_weights(x @ w.T, var, mu)[0].sum(axis=1))
        d = np.abs(masses[0] - masses[1])
        dm, ds = mean_se(d)
        row = {"eps": e, "D": dm, "se": ds, "mass": [float(np.mean(m)) for m in masses]}
        if coarse is fine_grid:
            k_eps = kernel.mollify_kernel(base_cov, fine_grid, mollifiers[0], e)
            row["offdiag_gap"] = kernel.offdiag_max_gap(k_eps, base_cov)
        rows.append(row)
        dists.append(d)
    inversions, significant = 0, 0
    for k in range(1, len(eps)):
        step = dists[k] - dists[k - 1]
        sm, ss = mean_se(step)
        if sm > 0:
            inversions += 1
            if sm > z * ss:
                significant += 1
    final, final_se = mean_se(dists[-1])
    bound = fraction * coarse.total_measure
    ok = inversions <= 1 and significant == 0 and final < bound
    return TestReport("mollifier_independence", final, bound, final_se, replicas, ok, TREND,
                      {"ladder": rows, "inversions": inversions, "significant_inversions": significant,
                       "fraction": fraction, "z": z, "mollifiers": [m.profile for m in mollifiers],
                       "N": fine_grid.size, "seed": seed.seed})


# ---------------------------------------------------------------------------
# comparison and integrability


CONVEX_FUNCTIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "x^2": lambda m: m * m,
    "(x-1)+": lambda m: np.maximum(m - 1.0, 0.0),
    "x log(1+x)": lambda m: m * np.log1p(m),
}


def test_kahane_comparison(cov1: CovMatrix, cov2: CovMatrix, grid: DomainGrid, replicas: int,
                           seed: SeedRecord, z: float = Z_DEFAULT) -> list[TestReport]:
    """Convex functionals of the total mass are ordered like the kernels.

    Requires ``K1 <= K2`` entrywise. The ``x^2`` case is also checked in
    closed form.
    """
    gap = cov2.entries - cov1.entries
    if np.any(gap < 0):
        i, j = np.unravel_index(np.argmin(gap), gap.shape)
        raise ValueError(f"kernels not ordered: K1 > K2 at pair ({i}, {j}) by {-gap[i, j]:.3g}")
    mu = grid.cell_measure
    e1 = float(mu @ np.exp(cov1.entries) @ mu)
    e2 = float(mu @ np.exp(cov2.entries) @ mu)
    out = [TestReport("kahane[closed x^2]", e1, e2, 0.0, 0, e1 <= e2, UPPER_BOUND,
                      {"abs_tol": 0.0, "N": grid.size})]
    m1 = EnsembleSpec(cov1, grid, replicas, seed.child(0)).weights().sum(axis=1)
    m2 = EnsembleSpec(cov2, grid, replicas, seed.child(1)).weights().sum(axis=1)
    for name, f in CONVEX_FUNCTIONS.items():
        a, sa = mean_se(f(m1))
        b, sb = mean_se(f(m2))
        se = math.hypot(sa, sb)
        ok = a <= b + z * se
        out.append(TestReport(f"kahane[{name}]", a, b, se, replicas, ok, UPPER_BOUND,
                              {"z": z, "N": grid.size, "seed": seed.seed}))
    return out


def subcritical_bound(dim: int) -> float:
    return math.sqrt(2 * dim)


def test_uniform_integrability_diagnostic(gamma_grid: Sequence[float], C: float, grid: DomainGrid,
                                          replicas: int, seed: SeedRecord,
                                          thresholds: Sequence[float] = (2.0, 5.0, 10.0)) -> list[TestReport]:
    """Tail masses ``E[M[T] 1{M[T] > c}]`` of Kahane chaos along a gamma ladder.

    Informational: one report per gamma with the tails and the closed-form
    second moment in ``metadata``.
    """
    bound = subcritical_bound(grid.dim)
    for g in gamma_grid:
        if not 0 <= g < bound:
            raise ValueError(f"gamma={g} outside the subcritical range [0, sqrt(2d)) = [0, {bound:.4f})")
    base = kernel.eval_kernel(KahaneFamily(C, 1.0), grid)
    unit, _ = gaussian.sample_ensemble(base, seed, replicas)
    mu = grid.cell_measure
    out = []
    for g in gamma_grid:
        var = g * g * base.diag
        mass = chaos.chaos_weights(g * unit, var, mu)[0].sum(axis=1)
        tails = {}
        for c in thresholds:
            tm, ts = mean_se(mass * (mass > c))
            tails[f"{c:g}"] = {"tail": tm, "se": ts}
        second = float(mu @ np.exp(g * g * base.entries) @ mu)
        top = tails[f"{thresholds[-1]:g}"]
        out.append(TestReport(f"uniform_integrability[gamma={g:g}]", top["tail"], 0.0, top["se"], replicas,
                              True, INFORMATIONAL,
                              {"gamma": g, "C": C, "tails": tails, "second_moment": second,
                               "N": grid.size, "seed": seed.seed}))
    return out


# ---------------------------------------------------------------------------
# nonatomicity and kernel regularity


def diagonal_mass_proxy(cov: CovMatrix, grid: DomainGrid) -> float:
    """``sum_i exp(K_ii) mu_i^2``, the second-moment mass on the diagonal."""
    mu = grid.cell_measure
    return float(np.exp(cov.diag) @ (mu * mu))


def test_nonatomicity(spec: kernel.KernelSpec, grids: Sequence[DomainGrid], replicas: int,
                      seed: SeedRecord) -> TestReport:
    """``A(N) = E[max_i m_i / M[T]]`` must decrease strictly under refinement."""
    rows = []
    for g in grids:
        cov = kernel.eval_kernel(spec, g)
        w = EnsembleSpec(cov, g, replicas, seed).weights()
        a, se = mean_se(w.max(axis=1) / w.sum(axis=1))
        rows.append({"N": g.size, "A": a, "se": se, "diagonal_proxy": diagonal_mass_proxy(cov, g)})
    ok = all(b["A"] < a["A"] for a, b in zip(rows, rows[1:]))
    last = rows[-1]
    return TestReport("nonatomicity", last["A"], rows[0]["A"], last["se"], replicas, ok, TREND,
                      {"ladder": rows, "criterion": "A strictly decreasing", "seed": seed.seed})


def test_kernel_moment_scaling(spec: LogKernel, grid: DomainGrid, n: int, eps_ladder: Sequence[float],
                               band: float = 2.0) -> TestReport:
    """Box-smoothed ``K^n`` sup against ``|log eps|^n``.

    Passes when the ratios stay within a band ``max / min <= band``.
    """
    rows = kernel.kernel_moment_scaling(spec, grid, n, eps_ladder)
    ratios = [v / ref for _, v, ref in rows]
    spread = max(ratios) / min(ratios) if min(ratios) > 0 else (1.0 if max(ratios) == 0 else math.inf)
    return TestReport(f"kernel_moment_scaling[n={n}]", spread, band, 0.0, 0, spread <= band, TREND,
                      {"ladder": [{"eps": e, "sup": v, "log_ref": r, "ratio": q}
                                  for (e, v, r), q in zip(rows, ratios)], "n": n})


def test_zero_kernel(grid: DomainGrid, replicas: int, seed: SeedRecord) -> list[TestReport]:
    """Every identity degenerates to an exact statement when ``K = 0``."""
    spec = EnsembleSpec(kernel.zero_cov(grid.size), grid, replicas, seed)
    out = [test_expectation(spec)]
    out += test_second_moment(spec, [(0, 0), (0, grid.size - 1)])
    a = EnsembleSpec(spec.cov, grid, replicas, seed).weights()
    ratio = a.max(axis=1) / a.sum(axis=1)
    out.append(compare("zero_kernel[atom share]", ratio, 1.0 / grid.size, abs_tol=1e-12))
    return out


# ---------------------------------------------------------------------------
# suites


@dataclass
class SuiteConfig:
    seed: int = 7
    replicas: Optional[int] = None
    z: float = Z_DEFAULT
    bonferroni: bool = False


def _reps(cfg: SuiteConfig, default: int) -> int:
    return cfg.replicas if cfg.replicas is not None else default


EXAMPLE_2X2 = ((1.0, 0.2), (0.2, 1.0))


def example_2x2(side: float = 1.0) -> tuple[CovMatrix, DomainGrid]:
    """The 2-cell example kernel on ``[0, side]``; cell measures ``side / 2``."""
    grid = build_grid(1, (0.0, side), 2)
    return kernel.eval_kernel(kernel.Explicit(EXAMPLE_2X2), grid), grid


def suite_exact(cfg: SuiteConfig) -> list[TestReport]:
    seed = SeedRecord(cfg.seed)
    out = []
    cov, grid = example_2x2()
    shifts = random_shifts(cov, grid, 10, seed.child(5))
    out.append(test_shift_covariance(EnsembleSpec(cov, grid, 100, seed), shifts))
    grid64 = build_grid(1, (0.0, 1.0), 64)
    cov64 = kernel.eval_kernel(KahaneFamily(16.0, 1.0), grid64)
    shifts = random_shifts(cov64, grid64, 10, seed.child(5))
    rep = test_shift_covariance(EnsembleSpec(cov64, grid64, 100, seed), shifts)
    rep.name = "shift_covariance[kahane]"
    out.append(rep)
    out += test_zero_kernel(grid64, 1000, seed)
    return out


def suite_moments(cfg: SuiteConfig) -> list[TestReport]:
    seed = SeedRecord(cfg.seed)
    cov, grid = example_2x2()
    spec = EnsembleSpec(cov, grid, _reps(cfg, 100_000), seed)
    out = [test_expectation(spec, [0], cfg.z), test_expectation(spec, None, cfg.z)]
    out += test_second_moment(spec, all_pairs(2), z=cfg.z)
    out += test_second_moment(spec, [(0, 1)], c=0.5, c2=1.0, z=cfg.z)
    return out


def suite_second_moment_kahane(cfg: SuiteConfig) -> list[TestReport]:
    grid = build_grid(1, (0.0, 1.0), 16)
    cov = kernel.eval_kernel(KahaneFamily(16.0, 1.0), grid)
    spec = EnsembleSpec(cov, grid, _reps(cfg, 100_000), SeedRecord(cfg.seed))
    return test_second_moment(spec, all_pairs(16), z=cfg.z)


def suite_expectation(cfg: SuiteConfig) -> list[TestReport]:
    grid = build_grid(1, (0.0, 1.0), 64)
    out = []
    for k, gamma in enumerate((0.5, 1.0)):
        cov = kernel.eval_kernel(KahaneFamily(64.0, gamma), grid)
        rep = test_expectation(EnsembleSpec(cov, grid, _reps(cfg, 100_000), SeedRecord(cfg.seed, 0, k)), z=cfg.z)
        rep.name = f"expectation[kahane C=64 gamma={gamma:g}]"
        rep.metadata["gamma"] = gamma
        out.append(rep)
    rep = test_expectation(EnsembleSpec(kernel.zero_cov(64), grid, 1000, SeedRecord(cfg.seed)))
    rep.name = "expectation[zero kernel]"
    out.append(rep)
    return out


def martingale_fixture(levels: int = 3, n: int = 64) -> tuple[list[CovMatrix], DomainGrid]:
    grid = build_grid(1, (0.0, 1.0), n)
    return kernel.sigma_positive_decompose(KahaneFamily(8.0, 1.0), grid, levels), grid


def suite_martingale(cfg: SuiteConfig) -> list[TestReport]:
    levels, grid = martingale_fixture()
    left = np.flatnonzero(grid.centers[:, 0] < 0.5)
    seed = SeedRecord(cfg.seed)
    out = test_martingale(levels, grid, left, _reps(cfg, 10_000), seed, cfg.z)
    out += test_martingale_normalization(levels, grid, _reps(cfg, 100_000), seed.child(50), cfg.z)
    return out


def suite_uniqueness(cfg: SuiteConfig) -> list[TestReport]:
    grid = build_grid(1, (0.0, 1.0), 32)
    return test_uniqueness(KahaneFamily(8.0, 1.0), grid, 3, _reps(cfg, 100_000), SeedRecord(cfg.seed), cfg.z)


def suite_peyriere(cfg: SuiteConfig) -> list[TestReport]:
    cov, grid = example_2x2()
    spec = EnsembleSpec(cov, grid, _reps(cfg, 100_000), SeedRecord(cfg.seed))
    return test_peyriere(spec, g=[1.0, 0.0], cells=[1], phi_cell=0, z=cfg.z)


def suite_mollifier(cfg: SuiteConfig) -> list[TestReport]:
    grid = build_grid(1, (0.0, 1.0), 512)
    cov = kernel.eval_kernel(LogKernel(1.0), grid)
    ladder = [2.0**-k for k in range(2, 7)]
    return [test_mollifier_independence(cov, grid, (BOX, TRIANGLE), ladder, _reps(cfg, 10_000),
                                        SeedRecord(cfg.seed), z=cfg.z)]


def suite_kahane(cfg: SuiteConfig) -> list[TestReport]:
    seed = SeedRecord(cfg.seed)
    reps = _reps(cfg, 100_000)
    grid = build_grid(1, (0.0, 1.0), 32)
    k1 = kernel.eval_kernel(KahaneFamily(4.0, 1.0), grid)
    k2 = kernel.cov_from_entries(k1.entries + 0.1, label="K1+0.1")
    out = test_kahane_comparison(k1, k2, grid, reps, seed, cfg.z)
    for r in out:
        r.name = r.name.replace("kahane[", "kahane[K1+0.1 ")
    k16 = kernel.eval_kernel(KahaneFamily(16.0, 1.0), grid)
    more = test_kahane_comparison(k1, k16, grid, reps, seed.child(2), cfg.z)
    for r in more:
        r.name = r.name.replace("kahane[", "kahane[C=4 vs 16 ")
    return out + more


def suite_wick(cfg: SuiteConfig) -> list[TestReport]:
    seed = SeedRecord(cfg.seed)
    out = wick.hermite_orthogonality(6, _reps(cfg, 100_000), seed.child(30), cfg.z)
    cov, grid = example_2x2(side=2.0)
    for n in (2, 3):
        out.append(wick.wick_l2_check(cov, grid, n, max(_reps(cfg, 100_000), 10_000), seed.child(30 + n), cfg.z))
    return out


def suite_nonatomicity(cfg: SuiteConfig) -> list[TestReport]:
    base = build_grid(1, (0.0, 1.0), 64)
    grids = [base, refine(base, 2), refine(base, 4)]
    out = [test_nonatomicity(LogKernel(1.0), grids, _reps(cfg, 10_000), SeedRecord(cfg.seed))]
    ladder = [2.0**-k for k in range(3, 8)]
    for n in (1, 2):
        out.append(test_kernel_moment_scaling(LogKernel(1.0), build_grid(1, (0.0, 1.0), 8), n, ladder))
    return out


def suite_ui(cfg: SuiteConfig) -> list[TestReport]:
    grid = build_grid(1, (0.0, 1.0), 64)
    return test_uniform_integrability_diagnostic((0.5, 1.0, 1.3), 64.0, grid, _reps(cfg, 100_000),
                                                 SeedRecord(cfg.seed))


SUITES: dict[str, Callable[[SuiteConfig], list[TestReport]]] = {
    "exact": suite_exact,
    "moments": suite_moments,
    "second_moment_kahane": suite_second_moment_kahane,
    "expectation": suite_expectation,
    "martingale": suite_martingale,
    "uniqueness": suite_uniqueness,
    "peyriere": suite_peyriere,
    "mollifier": suite_mollifier,
    "kahane": suite_kahane,
    "wick": suite_wick,
    "nonatomicity": suite_nonatomicity,
    "ui": suite_ui,
}


class UnknownSuiteError(ValueError):
    pass


def run_suite(names: Sequence[str], cfg: Optional[SuiteConfig] = None) -> list[TestReport]:
    """Run the named suites in the given order; ``"all"`` expands to every suite."""
    cfg = cfg or SuiteConfig()
    expanded = []
    for name in names:
        if name == "all":
            expanded.extend(SUITES)
        elif name in SUITES:
            expanded.append(name)
        else:
            raise UnknownSuiteError(f"unknown suite {name!r}; valid: {', '.join(['all', *SUITES])}")
    reports = []
    for name in expanded:
        start = time.perf_counter()
        got = SUITES[name](cfg)
        log.info("suite %s: %d reports in %.2fs", name, len(got), time.perf_counter() - start)
        for r in got:
            r.metadata.setdefault("suite", name)
        reports.extend(got)
    if cfg.bonferroni:
        apply_bonferroni(reports)
    return reports


def exit_code(reports: Sequence[TestReport]) -> int:
    return 0 if all(r.verdict or r.informational for r in reports) else 1


# keep pytest from collecting the harness functions when imported into test modules
for _name, _obj in list(globals().items()):
    if _name.startswith("test_") and callable(_obj):
        _obj.__test__ = False
