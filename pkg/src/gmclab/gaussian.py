"""Gaussian field samples, mollified fields, and Cameron-Martin shifts."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .domain import DomainGrid, is_refinement
from .kernel import CovMatrix, Mollifier, mollifier_weights
from .rng import SeedRecord, replica_normals, replica_uniforms

# namespace offsets inside one master seed
NS_FIELD = 0
NS_CELL = 1 << 20


@dataclass(frozen=True, eq=False)
class ShiftVector:
    """A Cameron-Martin direction generated by a test function on the grid.

    ``field_repr[i] = sum_j K_ij f_j mu_j`` is the shift as seen by the field,
    ``h_norm_sq = sum_ij f_i K_ij f_j mu_i mu_j`` its squared norm.
    """

    test_fn: np.ndarray = field(repr=False)
    field_repr: np.ndarray = field(repr=False)
    h_norm_sq: float
    weighted: np.ndarray = field(repr=False, default=None)  # f * mu

    def __add__(self, other: "ShiftVector") -> "ShiftVector":
        cross = float(self.weighted @ other.field_repr)
        return ShiftVector(self.test_fn + other.test_fn, self.field_repr + other.field_repr,
                           max(self.h_norm_sq + other.h_norm_sq + 2.0 * cross, 0.0),
                           self.weighted + other.weighted)

    def scale(self, c: float) -> "ShiftVector":
        return ShiftVector(c * self.test_fn, c * self.field_repr, c * c * self.h_norm_sq,
                           c * self.weighted)


@dataclass(frozen=True, eq=False)
class FieldSample:
    """One realization ``values = L @ latent`` of a field on a grid.

    Shifted samples keep the original ``latent`` and record the shift instead
    of re-deriving latent coordinates.
    """

    values: np.ndarray = field(repr=False)
    latent: np.ndarray = field(repr=False)
    cov_ref: str
    seed: Optional[SeedRecord] = None
    shifted: bool = False
    shift: Optional[ShiftVector] = field(default=None, repr=False)

    def to_csv(self) -> str:
        lines = ["cell_index,value"] + [f"{i},{float(v)!r}" for i, v in enumerate(self.values)]
        return "\n".join(lines) + "\n"


def sample_field(cov: CovMatrix, seed: SeedRecord) -> FieldSample:
    """Draw ``X = L z`` with ``z`` taken from replica ``seed.stream``."""
    z = replica_normals(seed, 1, cov.size)[0]
    return FieldSample(cov.factor @ z, z, cov.key, seed)


def sample_ensemble(cov: CovMatrix, seed: SeedRecord, replicas: int) -> tuple[np.ndarray, np.ndarray]:
    """Fields for ``replicas`` consecutive streams, as ``(X, Z)`` of shape ``(R, N)``.

    Row ``r`` equals ``sample_field(cov, seed with stream+r).values`` up to
    matrix-product summation order.
    """
    z = replica_normals(seed, replicas, cov.size)
    return z @ cov.factor.T, z


def verify_sample(x: FieldSample, cov: CovMatrix) -> bool:
    """Check ``values = L @ latent`` (plus the recorded shift, if any)."""
    if x.shifted:
        base = cov.factor @ x.latent + x.shift.field_repr
        return bool(np.allclose(base, x.values, rtol=1e-12, atol=1e-12))
    return bool(np.array_equal(cov.factor @ x.latent, x.values))


def mollify_field(fine: FieldSample, fine_grid: DomainGrid, moll: Mollifier, eps: float,
                  coarse_grid: DomainGrid) -> FieldSample:
    """Smooth a fine-grid sample and evaluate it at coarse-grid centers.

    The latent vector of ``fine`` is carried over, so mollifying one fine
    sample with two different bumps gives coupled realizations.
    """
    if fine.values.shape[0] != fine_grid.size:
        raise ValueError("sample does not live on fine_grid")
    if not is_refinement(fine_grid, coarse_grid):
        raise ValueError("fine_grid must refine coarse_grid")
    w = mollifier_weights(coarse_grid, fine_grid, moll, eps)
    return FieldSample(w @ fine.values, fine.latent, f"{fine.cov_ref}*{moll.profile}@{eps!r}", fine.seed)


def shift_from_test_function(f, cov: CovMatrix, grid: DomainGrid) -> ShiftVector:
    f = np.asarray(f, dtype=float)
    if f.shape != (grid.size,):
        raise ValueError(f"test function must have {grid.size} entries")
    if not np.all(np.isfinite(f)):
        raise ValueError("test function must be finite")
    fm = f * grid.cell_measure
    field_repr = cov.entries @ fm
    # via the factor, so the norm is nonnegative up to roundoff
    lt = cov.factor.T @ fm
    return ShiftVector(f, field_repr, float(lt @ lt), fm)


def quadratic_form(f, cov: CovMatrix, grid: DomainGrid) -> float:
    """``sum_ij f_i K_ij f_j mu_i mu_j`` by direct double sum."""
    fm = np.asarray(f, dtype=float) * grid.cell_measure
    return float(np.sum(np.outer(fm, fm) * cov.entries))


def cameron_martin_shift(x: FieldSample, xi: ShiftVector) -> FieldSample:
    if xi.field_repr.shape != x.values.shape:
        raise ValueError("shift and sample shapes differ")
    total = xi if x.shift is None else x.shift + xi
    return replace(x, values=x.values + xi.field_repr, shifted=True, shift=total)


def column_shift(cov: CovMatrix, grid: DomainGrid, cell: int) -> ShiftVector:
    """Shift whose field representation is the kernel column ``K(., t_cell)``."""
    f = np.zeros(grid.size)
    f[cell] = 1.0 / grid.cell_measure[cell]
    xi = shift_from_test_function(f, cov, grid)
    # f * mu is exactly e_cell only up to rounding; pin the column itself
    return replace(xi, field_repr=np.array(cov.entries[:, cell]))


def sample_cells(grid: DomainGrid, seed: SeedRecord, replicas: int) -> np.ndarray:
    """Cells drawn from ``mu / mu[T]``, one per replica."""
    cdf = np.cumsum(grid.cell_measure)
    cdf /= cdf[-1]
    u = replica_uniforms(seed.child(seed.namespace + NS_CELL), replicas)
    return np.minimum(np.searchsorted(cdf, u, side="right"), grid.size - 1)


def peyriere_sample(cov: CovMatrix, grid: DomainGrid, seed: SeedRecord) -> tuple[FieldSample, int]:
    """Draw ``(X + K(., t), t)`` with ``t ~ mu / mu[T]`` independent of ``X``."""
    t = int(sample_cells(grid, seed, 1)[0])
    x = sample_field(cov, seed)
    return cameron_martin_shift(x, column_shift(cov, grid, t)), t


def peyriere_ensemble(cov: CovMatrix, grid: DomainGrid, seed: SeedRecord,
                      replicas: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`peyriere_sample`; returns shifted fields and cells."""
    x, _ = sample_ensemble(cov, seed, replicas)
    cells = sample_cells(grid, seed, replicas)
    return x + cov.entries[:, cells].T, cells
