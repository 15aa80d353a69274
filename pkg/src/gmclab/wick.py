"""Probabilists' Hermite polynomials and Wick powers of the field.

``h_n(x) = exp(-D^2 / 2) x^n``, so ``h_2 = x^2 - 1`` and ``E h_n(Z) h_m(Z) =
n! delta_nm`` for standard normal ``Z``. Physicists' polynomials satisfy
``H_n(x) = 2^(n/2) h_n(sqrt(2) x)``.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .gaussian import FieldSample, sample_ensemble
from .kernel import CovMatrix
from .report import compare
from .rng import replica_normals

NMAX = 12


@lru_cache(maxsize=None)
def hermite_table(nmax: int = NMAX) -> tuple[tuple[int, ...], ...]:
    """Exact integer monomial coefficients of ``h_0 .. h_nmax``.

    Row ``n`` lists the coefficients of ``x^0 .. x^n``.
    """
    rows = [(1,), (0, 1)]
    for n in range(2, nmax + 1):
        prev, prev2 = rows[n - 1], rows[n - 2]
        row = [0] * (n + 1)
        for k, a in enumerate(prev):
            row[k + 1] += a
        for k, a in enumerate(prev2):
            row[k] -= (n - 1) * a
        rows.append(tuple(row))
    return tuple(rows[: nmax + 1])


def hermite(n: int, x, nmax: int = NMAX):
    """Evaluate ``h_n`` by the three-term recurrence."""
    if n < 0 or n > nmax:
        raise ValueError(f"Hermite order must be in [0, {nmax}], got {n}")
    x = np.asarray(x, dtype=float)
    if n == 0:
        return np.ones_like(x)
    prev, cur = np.ones_like(x), x
    for k in range(2, n + 1):
        prev, cur = cur, x * cur - (k - 1) * prev
    return cur


def wick_power(x: np.ndarray, variance: np.ndarray, n: int) -> np.ndarray:
    """``:X^n: = sigma^n h_n(X / sigma)``, zero where ``sigma = 0`` (for ``n >= 1``)."""
    sigma = np.sqrt(np.asarray(variance, dtype=float))
    if n == 0:
        return np.ones_like(np.asarray(x, dtype=float))
    if n == 2:
        # same polynomial, written without the division
        return np.where(sigma > 0, x * x - variance, 0.0)
    safe = np.where(sigma > 0, sigma, 1.0)
    return np.where(sigma > 0, safe**n * hermite(n, x / safe), 0.0)


def wick_power_field(x: FieldSample, cov: CovMatrix, n: int) -> np.ndarray:
    return wick_power(x.values, cov.diag, n)


def wick_l2_target(cov: CovMatrix, mu: np.ndarray, n: int) -> float:
    """``n! sum_ij K_ij^n mu_i mu_j``, the variance of ``sum_i :X_i^n: mu_i``."""
    return math.factorial(n) * float(mu @ (cov.entries**n) @ mu)


def wick_l2_check(cov: CovMatrix, grid, n: int, replicas: int, seed, z: float = 3.0):
    """Monte Carlo ``E |sum_i :X_i^n: mu_i|^2`` against ``n! sum_ij K_ij^n mu_i mu_j``."""
    if replicas < 10_000:
        raise ValueError("wick_l2_check needs at least 10^4 replicas")
    x, _ = sample_ensemble(cov, seed, replicas)
    s = wick_power(x, cov.diag, n) @ grid.cell_measure
    return compare(f"wick_l2[n={n}]", s * s, wick_l2_target(cov, grid.cell_measure, n), z,
                   n=n, N=cov.size, seed=seed.seed)


def hermite_orthogonality(nmax: int, draws: int, seed, z: float = 3.0) -> list:
    """``E h_n(Z) h_m(Z) = n! delta_nm`` for all ``n <= m <= nmax``."""
    zs = replica_normals(seed, draws, 1)[:, 0]
    table = [hermite(n, zs) for n in range(nmax + 1)]
    out = []
    for n in range(nmax + 1):
        for m in range(n, nmax + 1):
            target = float(math.factorial(n)) if n == m else 0.0
            out.append(compare(f"hermite_orthogonality[{n},{m}]", table[n] * table[m], target, z,
                               n=n, m=m, seed=seed.seed))
    return out
