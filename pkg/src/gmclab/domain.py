"""Axis-aligned box grids carrying a finite reference measure."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

Density = Callable[[np.ndarray], np.ndarray]

# Named densities, so that a grid can be serialized by tag and rebuilt.
DENSITIES: dict[str, Density] = {
    "linear": lambda t: 2.0 * t[:, 0],
}


@dataclass(frozen=True, eq=False)
class DomainGrid:
    """Midpoint discretization of a box ``prod_k [a_k, b_k]``.

    Cells are ordered row-major over the axes (last axis fastest).
    ``centers`` has shape ``(N, dim)`` and ``cell_measure`` shape ``(N,)``.
    """

    dim: int
    bounds: tuple
    n_per_axis: int
    centers: np.ndarray = field(repr=False)
    cell_measure: np.ndarray = field(repr=False)
    spacing: tuple
    density: Optional[Density] = field(default=None, repr=False)
    density_tag: Optional[str] = None

    @property
    def size(self) -> int:
        return self.centers.shape[0]

    @property
    def total_measure(self) -> float:
        return math.fsum(self.cell_measure)

    @property
    def cell_scale(self) -> float:
        """Largest per-axis spacing; the self-interaction scale of a cell."""
        return max(self.spacing)

    @property
    def key(self) -> str:
        return f"{self.dim}:{self.bounds}:{self.n_per_axis}:{self.density_tag}"

    def to_dict(self) -> dict:
        if self.density is not None and self.density_tag is None:
            raise ValueError("grid with an anonymous density cannot be serialized")
        return {
            "dim": self.dim,
            "bounds": [list(b) for b in self.bounds],
            "n_per_axis": self.n_per_axis,
            "density_tag": self.density_tag,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "DomainGrid":
        return build_grid(d["dim"], d["bounds"], d["n_per_axis"], density=d.get("density_tag"))

    @classmethod
    def from_json(cls, text: str) -> "DomainGrid":
        return cls.from_dict(json.loads(text))


def _normalize_bounds(dim: int, bounds) -> tuple:
    arr = np.asarray(bounds, dtype=float)
    if arr.shape == (2,):
        arr = np.tile(arr, (dim, 1))
    if arr.shape != (dim, 2):
        raise ValueError(f"bounds must be one interval or {dim} intervals, got shape {arr.shape}")
    if np.any(arr[:, 1] - arr[:, 0] <= 0) or not np.all(np.isfinite(arr)):
        raise ValueError("every interval must have positive finite length")
    return tuple((float(a), float(b)) for a, b in arr)


def build_grid(dim: int, bounds, n_per_axis: int, density=None) -> DomainGrid:
    """Build a uniform midpoint grid on a box.

    Parameters
    ----------
    dim : int
        Dimension of the parameter space.
    bounds : sequence
        Either one interval ``(a, b)`` used for every axis, or ``dim`` intervals.
    n_per_axis : int
        Number of cells along each axis.
    density : callable or str, optional
        Density of the reference measure with respect to Lebesgue measure,
        called on an ``(N, dim)`` array of centers. A string is looked up in
        :data:`DENSITIES`. Defaults to 1.

    Returns
    -------
    DomainGrid
        Cell ``i`` carries measure ``density(t_i) * prod_k h_k``.
    """
    if dim < 1:
        raise ValueError("dim must be at least 1")
    if n_per_axis < 1:
        raise ValueError("n_per_axis must be at least 1")
    bnds = _normalize_bounds(dim, bounds)
    spacing = tuple((b - a) / n_per_axis for a, b in bnds)
    axes = [a + (np.arange(n_per_axis) + 0.5) * h for (a, _), h in zip(bnds, spacing)]
    mesh = np.meshgrid(*axes, indexing="ij")
    centers = np.stack([m.ravel() for m in mesh], axis=1)
    volume = math.prod(spacing)

    tag = None
    if isinstance(density, str):
        tag = density
        if density not in DENSITIES:
            raise ValueError(f"unknown density tag {density!r}; known: {sorted(DENSITIES)}")
        density = DENSITIES[density]
    if density is None:
        measure = np.full(centers.shape[0], volume)
    else:
        values = np.asarray(density(centers), dtype=float).reshape(-1)
        if values.shape[0] != centers.shape[0]:
            raise ValueError("density must return one value per cell")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError("density must be finite and nonnegative at every cell center")
        measure = values * volume
    if not math.fsum(measure) > 0:
        raise ValueError("total measure must be strictly positive")
    centers.setflags(write=False)
    measure.setflags(write=False)
    return DomainGrid(dim, bnds, n_per_axis, centers, measure, spacing, density, tag)


def refine(grid: DomainGrid, factor: int) -> DomainGrid:
    """Split every cell into ``factor**dim`` subcells.

    Centers are recomputed from the bounds, so refining twice by 2 gives the
    same grid, bit for bit, as refining once by 4.
    """
    if factor < 2:
        raise ValueError("refinement factor must be at least 2")
    density = grid.density_tag if grid.density_tag is not None else grid.density
    return build_grid(grid.dim, grid.bounds, grid.n_per_axis * factor, density=density)


def indicator(grid: DomainGrid, predicate: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """0/1 vector of cells whose centers satisfy ``predicate``."""
    return np.asarray(predicate(grid.centers), dtype=bool).astype(float)


def same_grid(a: DomainGrid, b: DomainGrid) -> bool:
    return a is b or (
        a.dim == b.dim
        and a.bounds == b.bounds
        and a.n_per_axis == b.n_per_axis
        and np.array_equal(a.cell_measure, b.cell_measure)
    )


def is_refinement(fine: DomainGrid, coarse: DomainGrid) -> bool:
    return (
        fine.dim == coarse.dim
        and fine.bounds == coarse.bounds
        and fine.n_per_axis % coarse.n_per_axis == 0
    )

