"""Chaos measures: exponential reweighting of a reference measure by a field."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .domain import DomainGrid
from .gaussian import FieldSample, ShiftVector, sample_ensemble
from .kernel import CovMatrix
from .rng import SeedRecord

log = logging.getLogger(__name__)

EXP_CLAMP = 700.0


@dataclass(frozen=True, eq=False)
class ChaosMeasure:
    """Nonnegative cell weights ``m_i = exp(c X_i - c^2 K_ii / 2) mu_i``."""

    weights: np.ndarray = field(repr=False)
    grid_ref: str
    normalization: np.ndarray = field(repr=False)
    gamma_meta: Optional[float] = None
    clamped: int = 0

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    def to_csv(self) -> str:
        lines = ["cell_index,weight"] + [f"{i},{float(v)!r}" for i, v in enumerate(self.weights)]
        return "\n".join(lines) + "\n"


def chaos_weights(x: np.ndarray, variance: np.ndarray, mu: np.ndarray,
                  c: float = 1.0) -> tuple[np.ndarray, int]:
    """Weights ``exp(c x - c^2 variance / 2) * mu`` for one or many samples.

    Exponents are clamped to ``[-700, 700]``; the number of clamped entries
    is returned alongside the weights.
    """
    expo = c * x - 0.5 * (c * c) * variance
    over = np.abs(expo) > EXP_CLAMP
    count = int(np.count_nonzero(over))
    if count:
        log.debug("%d chaos exponents clamped at +-%g", count, EXP_CLAMP)
        expo = np.clip(expo, -EXP_CLAMP, EXP_CLAMP)
    return np.exp(expo) * mu, count


def _check(x: FieldSample, cov: CovMatrix, grid: DomainGrid):
    if not (x.values.shape[0] == cov.size == grid.size):
        raise ValueError("sample, covariance and grid sizes differ")
    if not np.all(np.isfinite(cov.diag)):
        raise ValueError("covariance diagonal must be finite")


def build_chaos(x: FieldSample, cov: CovMatrix, grid: DomainGrid) -> ChaosMeasure:
    """``m_i = exp(X_i - K_ii / 2) mu_i``, normalized with the kernel's own diagonal."""
    _check(x, cov, grid)
    w, n = chaos_weights(x.values, cov.diag, grid.cell_measure)
    return ChaosMeasure(w, grid.key, cov.diag, None, n)


def build_scaled_chaos(x: FieldSample, cov: CovMatrix, grid: DomainGrid, c: float) -> ChaosMeasure:
    """Chaos of the scaled field ``c X``; requires ``|c| <= 1``."""
    if abs(c) > 1:
        raise ValueError(f"scale c must satisfy |c| <= 1, got {c}")
    _check(x, cov, grid)
    w, n = chaos_weights(x.values, cov.diag, grid.cell_measure, c)
    return ChaosMeasure(w, grid.key, cov.diag, c, n)


def martingale_fields(levels: Sequence[CovMatrix], seed: SeedRecord, replicas: int) -> list[np.ndarray]:
    """Cumulative fields ``X_n = sum_{k<=n} X^(k)``, one array ``(R, N)`` per level.

    Level ``k`` draws from namespace ``seed.namespace + k``.
    """
    out, acc = [], None
    for k, cov in enumerate(levels):
        x, _ = sample_ensemble(cov, seed.child(seed.namespace + k), replicas)
        acc = x if acc is None else acc + x
        out.append(acc)
    return out


def martingale_sequence(levels: Sequence[CovMatrix], grid: DomainGrid, seed: SeedRecord) -> list[ChaosMeasure]:
    """Measures ``M_1, ..., M_L`` of the partial sums of independent level fields."""
    if not levels:
        raise ValueError("need at least one level")
    for cov in levels:
        if np.any(cov.entries < 0):
            raise ValueError("martingale levels must be entrywise nonnegative")
    fields = martingale_fields(levels, seed, 1)
    out, var = [], np.zeros(grid.size)
    for cov, x in zip(levels, fields):
        var = var + cov.diag
        w, n = chaos_weights(x[0], var, grid.cell_measure)
        out.append(ChaosMeasure(w, grid.key, var, None, n))
    return out


def integrate(m: ChaosMeasure, f) -> float:
    f = np.asarray(f, dtype=float)
    if f.shape != m.weights.shape:
        raise ValueError("test function and measure shapes differ")
    return float(f @ m.weights)


def reweight_shift(m: ChaosMeasure, xi: ShiftVector) -> ChaosMeasure:
    """``m_i * exp(xi_i)``: the measure of the shifted field, without resampling."""
    if xi.field_repr.shape != m.weights.shape:
        raise ValueError("shift and measure shapes differ")
    return ChaosMeasure(m.weights * np.exp(xi.field_repr), m.grid_ref, m.normalization,
                        m.gamma_meta, m.clamped)


def second_moment_closed_form(cov: CovMatrix, grid: DomainGrid, c: float = 1.0, c2: Optional[float] = None) -> float:
    """``E[M[T]^2] = sum_ij exp(c c' K_ij) mu_i mu_j``."""
    c2 = c if c2 is None else c2
    mu = grid.cell_measure
    return float(mu @ np.exp(c * c2 * cov.entries) @ mu)
