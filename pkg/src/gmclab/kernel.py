"""Covariance kernels: specs, grid evaluation, factorization, mollification.

All matrices are built from their upper triangle and mirrored, so they are
exactly symmetric. Factorization follows a fixed jitter ladder and records
the jitter that was actually needed.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .domain import DomainGrid, build_grid, refine, same_grid

log = logging.getLogger(__name__)

JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8)
QUAD_TOL = 1e-10

# Bounded continuous corrections g(t, s) for log kernels, by tag.
CORRECTIONS: dict[str, Callable[[np.ndarray, np.ndarray], np.ndarray]] = {
    "zero": lambda t, s: np.zeros(np.broadcast_shapes(t.shape[:-1], s.shape[:-1])),
    "cos": lambda t, s: 0.25 * np.cos(np.pi * (t - s)).prod(axis=-1),
}


class KernelNotPSDError(ValueError):
    """Factorization failed at every jitter level."""

    def __init__(self, min_eig: float):
        super().__init__(f"kernel not PSD on this grid (most negative eigenvalue {min_eig:.3e})")
        self.min_eig = min_eig


# ---------------------------------------------------------------------------
# mollifiers


@dataclass(frozen=True)
class Mollifier:
    """Separable bump ``psi(x) = prod_k phi(x_k)`` with ``phi`` piecewise linear.

    ``nodes`` and ``values`` tabulate ``phi`` on its support
    ``[-radius, radius]``; ``phi`` vanishes outside. ``"box"`` is special:
    it is the indicator of ``[-1/2, 1/2]``, closed.
    """

    profile: str
    radius: float
    nodes: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        if self.profile == "box":
            return
        x = np.asarray(self.nodes, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if x.ndim != 1 or x.shape != v.shape or x.size < 2:
            raise ValueError("tabulated mollifier needs matching 1-d nodes and values")
        if np.any(np.diff(x) <= 0):
            raise ValueError("mollifier nodes must be increasing")
        if np.any(v < 0):
            raise ValueError("mollifier values must be nonnegative")
        mass = float(np.sum(0.5 * (v[1:] + v[:-1]) * np.diff(x)))
        if abs(mass - 1.0) > 1e-10:
            raise ValueError(f"mollifier must have unit mass, got {mass!r}")

    def phi(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.profile == "box":
            return (np.abs(x) <= 0.5 * (1 + 1e-9)).astype(float)
        return np.interp(x, self.nodes, self.values, left=0.0, right=0.0)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Evaluate ``psi`` on an array of shape ``(..., d)``."""
        return self.phi(x).prod(axis=-1)

    def scaled(self, x: np.ndarray, eps: float) -> np.ndarray:
        """``psi_eps(x) = eps**-d psi(x / eps)``."""
        d = np.shape(x)[-1]
        return self(np.asarray(x) / eps) / eps**d

    def to_dict(self) -> dict:
        if self.profile in ("box", "triangle"):
            return {"profile": self.profile}
        return {"profile": self.profile, "nodes": list(self.nodes), "values": list(self.values)}

    @classmethod
    def from_dict(cls, d: dict) -> "Mollifier":
        return mollifier(d["profile"], d.get("nodes"), d.get("values"))


BOX = Mollifier("box", 0.5)
TRIANGLE = Mollifier("triangle", 1.0, (-1.0, 0.0, 1.0), (0.0, 1.0, 0.0))


def mollifier(profile: str, nodes=None, values=None) -> Mollifier:
    if profile == "box":
        return BOX
    if profile == "triangle":
        return TRIANGLE
    if nodes is None or values is None:
        raise ValueError(f"unknown mollifier profile {profile!r}; tabulated profiles need nodes and values")
    nodes = tuple(float(v) for v in nodes)
    return Mollifier(profile, max(abs(nodes[0]), abs(nodes[-1])), nodes, tuple(float(v) for v in values))


# ---------------------------------------------------------------------------
# kernel specs


@dataclass(frozen=True)
class Explicit:
    matrix: tuple

    def __init__(self, matrix):
        m = np.asarray(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("explicit kernel must be a square matrix")
        object.__setattr__(self, "matrix", tuple(tuple(row) for row in m.tolist()))


@dataclass(frozen=True)
class LogKernel:
    gamma: float
    g: str = "zero"

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.g not in CORRECTIONS:
            raise ValueError(f"unknown correction {self.g!r}; known: {sorted(CORRECTIONS)}")


@dataclass(frozen=True)
class KahaneFamily:
    C: float
    gamma: float

    def __post_init__(self):
        if self.C <= 1:
            raise ValueError("KahaneFamily needs C > 1")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")


@dataclass(frozen=True)
class SigmaPositiveSum:
    levels: tuple

    def __init__(self, levels):
        object.__setattr__(self, "levels", tuple(levels))


@dataclass(frozen=True)
class Mollified:
    base: "KernelSpec"
    mollifier: Mollifier
    epsilon: float

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


KernelSpec = Union[Explicit, LogKernel, KahaneFamily, SigmaPositiveSum, Mollified]


def spec_to_dict(spec: KernelSpec) -> dict:
    if isinstance(spec, Explicit):
        return {"variant": "explicit", "matrix": [list(r) for r in spec.matrix]}
    if isinstance(spec, LogKernel):
        return {"variant": "log", "gamma": spec.gamma, "g": spec.g}
    if isinstance(spec, KahaneFamily):
        return {"variant": "kahane", "C": spec.C, "gamma": spec.gamma}
    if isinstance(spec, SigmaPositiveSum):
        return {"variant": "sigma_positive_sum", "levels": [spec_to_dict(s) for s in spec.levels]}
    if isinstance(spec, Mollified):
        return {
            "variant": "mollified",
            "base": spec_to_dict(spec.base),
            "mollifier": spec.mollifier.to_dict(),
            "epsilon": spec.epsilon,
        }
    raise TypeError(f"not a kernel spec: {spec!r}")


def spec_from_dict(d: dict) -> KernelSpec:
    variant = d.get("variant")
    if variant == "explicit":
        return Explicit(d["matrix"])
    if variant == "log":
        return LogKernel(float(d["gamma"]), d.get("g", "zero"))
    if variant == "kahane":
        return KahaneFamily(float(d["C"]), float(d["gamma"]))
    if variant == "sigma_positive_sum":
        return SigmaPositiveSum([spec_from_dict(s) for s in d["levels"]])
    if variant == "mollified":
        return Mollified(spec_from_dict(d["base"]), Mollifier.from_dict(d["mollifier"]), float(d["epsilon"]))
    raise ValueError(f"unknown kernel variant {variant!r}")


def spec_to_json(spec: KernelSpec) -> str:
    return json.dumps(spec_to_dict(spec), sort_keys=True)


def spec_from_json(text: str) -> KernelSpec:
    return spec_from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# covariance matrices


@dataclass(frozen=True, eq=False)
class CovMatrix:
    """Symmetric covariance matrix on a grid and its Cholesky factor.

    ``factor @ factor.T == entries + jitter * I`` up to roundoff.
    """

    entries: np.ndarray = field(repr=False)
    factor: np.ndarray = field(repr=False)
    jitter: float = 0.0
    label: str = ""

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    @property
    def diag(self) -> np.ndarray:
        return np.diagonal(self.entries)

    @property
    def key(self) -> str:
        """Content hash identifying this matrix."""
        return hashlib.sha256(np.ascontiguousarray(self.entries).tobytes()).hexdigest()[:16]

    def to_csv(self) -> str:
        n = self.size
        i, j = np.divmod(np.arange(n * n), n)
        lines = ["i,j,value"]
        lines += [f"{a},{b},{float(v)!r}" for a, b, v in zip(i, j, self.entries.ravel())]
        return "\n".join(lines) + "\n"


def mirror_upper(a: np.ndarray) -> np.ndarray:
    """Exactly symmetric matrix built from the upper triangle of ``a``."""
    upper = np.triu(a)
    return upper + np.triu(a, 1).T


def factorize(entries: np.ndarray) -> tuple[np.ndarray, float]:
    """Cholesky with the first jitter from :data:`JITTER_LADDER` that works.

    Jitter levels are relative to the largest diagonal entry. An all-zero
    matrix has the zero factor.
    """
    n = entries.shape[0]
    if not np.any(entries):
        return np.zeros((n, n)), 0.0
    scale = float(np.max(np.diagonal(entries)))
    for rel in JITTER_LADDER:
        jitter = rel * scale
        try:
            return np.linalg.cholesky(entries + jitter * np.eye(n)), jitter
        except np.linalg.LinAlgError:
            continue
    raise KernelNotPSDError(float(np.linalg.eigvalsh(entries)[0]))


def cov_from_entries(entries, label: str = "") -> CovMatrix:
    k = mirror_upper(np.asarray(entries, dtype=float))
    if np.any(np.diagonal(k) < 0):
        raise ValueError("covariance diagonal must be nonnegative")
    factor, jitter = factorize(k)
    k.setflags(write=False)
    factor.setflags(write=False)
    if jitter:
        log.debug("factorized %s with jitter %g", label or "kernel", jitter)
    return CovMatrix(k, factor, jitter, label)


def _gauss_legendre(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    return x, w


_GL20 = _gauss_legendre(20)
_GL10 = _gauss_legendre(10)


def _panel(f, a: float, b: float, rule) -> np.ndarray:
    x, w = rule
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return half * (f(mid + half * x) @ w)


def log_u_integral(r: np.ndarray, lo: float, hi: float, tol: float = QUAD_TOL) -> np.ndarray:
    """``int_lo^hi exp(-u r) du / u`` for every distance in ``r``.

    Substituting ``u = e^v`` gives the smooth integrand ``exp(-r e^v)`` on
    ``[log lo, log hi]``, integrated by adaptive Gauss-Legendre: a panel is
    accepted when its 10- and 20-point rules agree to ``tol`` scaled by the
    panel's share of the interval, otherwise it is bisected.
    """
    r = np.asarray(r, dtype=float)
    if hi < lo:
        raise ValueError("integration limits out of order")
    if hi == lo:
        return np.zeros_like(r)

    def f(v):
        return np.exp(-np.multiply.outer(r, np.exp(v)))

    a0, b0 = math.log(lo), math.log(hi)
    total = np.zeros_like(r)
    stack = [(a0, b0)]
    while stack:
        a, b = stack.pop()
        fine = _panel(f, a, b, _GL20)
        coarse = _panel(f, a, b, _GL10)
        if np.max(np.abs(fine - coarse), initial=0.0) <= tol * (b - a) / (b0 - a0) or b - a < 1e-6:
            total += fine
        else:
            m = 0.5 * (a + b)
            stack.extend([(a, m), (m, b)])
    return total


def _pairwise_distances(centers: np.ndarray) -> np.ndarray:
    diff = centers[:, None, :] - centers[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=-1))


def _kahane_matrix(gamma: float, lo: float, hi: float, centers: np.ndarray) -> np.ndarray:
    dist = _pairwise_distances(centers)
    iu = np.triu_indices(dist.shape[0])
    uniq, inv = np.unique(dist[iu], return_inverse=True)
    vals = log_u_integral(uniq, lo, hi)
    # exact value on the diagonal
    vals[uniq == 0] = math.log(hi / lo)
    out = np.zeros_like(dist)
    out[iu] = gamma**2 * vals[inv]
    return out


def _log_matrix(spec: LogKernel, grid: DomainGrid) -> np.ndarray:
    dist = _pairwise_distances(grid.centers)
    with np.errstate(divide="ignore"):
        k = np.maximum(-np.log(dist), 0.0)
    # the diagonal is overwritten by the cap below; keep it finite before scaling
    np.fill_diagonal(k, 0.0)
    k = spec.gamma**2 * k
    cap = spec.gamma**2 * max(math.log(2.0 / grid.cell_scale), 0.0)
    np.fill_diagonal(k, cap)
    t = grid.centers
    k = k + CORRECTIONS[spec.g](t[:, None, :], t[None, :, :])
    return k


def kernel_entries(spec: KernelSpec, grid: DomainGrid) -> np.ndarray:
    """Raw (unfactorized) kernel matrix of ``spec`` on ``grid``."""
    if grid.size == 0:
        raise ValueError("grid is empty")
    if isinstance(spec, Explicit):
        m = np.array(spec.matrix, dtype=float)
        if m.shape[0] != grid.size:
            raise ValueError(f"explicit kernel is {m.shape[0]}x{m.shape[0]} but grid has {grid.size} cells")
        return mirror_upper(m)
    if isinstance(spec, LogKernel):
        return mirror_upper(_log_matrix(spec, grid))
    if isinstance(spec, KahaneFamily):
        return mirror_upper(_kahane_matrix(spec.gamma, 1.0, spec.C, grid.centers))
    if isinstance(spec, SigmaPositiveSum):
        total = np.zeros((grid.size, grid.size))
        for level in spec.levels:
            k = kernel_entries(level, grid)
            if np.any(k < 0):
                raise ValueError("sigma-positive levels must be entrywise nonnegative")
            total += k
        return mirror_upper(total)
    if isinstance(spec, Mollified):
        w = mollifier_weights(grid, grid, spec.mollifier, spec.epsilon)
        return mirror_upper(w @ kernel_entries(spec.base, grid) @ w.T)
    raise TypeError(f"not a kernel spec: {spec!r}")


def eval_kernel(spec: KernelSpec, grid: DomainGrid) -> CovMatrix:
    """Evaluate ``spec`` on ``grid`` and factorize it.

    Log kernels are infinite on the diagonal; there the cell-scale cap
    ``gamma**2 * log+(2 / h) + g(t, t)`` is used, with ``h`` the grid spacing.

    Raises
    ------
    KernelNotPSDError
        If Cholesky fails even at the largest jitter.
    """
    return cov_from_entries(kernel_entries(spec, grid), label=type(spec).__name__)


def zero_cov(n: int) -> CovMatrix:
    return cov_from_entries(np.zeros((n, n)), label="zero")


def geometric_cutoffs(C: float, levels: int) -> np.ndarray:
    cuts = C ** (np.arange(levels + 1) / levels)
    cuts[0], cuts[-1] = 1.0, C
    return cuts


def sigma_positive_decompose(spec: KahaneFamily, grid: DomainGrid, levels: int,
                             cutoffs: Optional[Sequence[float]] = None) -> list[CovMatrix]:
    """Split a Kahane kernel into pointwise-nonnegative PSD levels.

    Level ``k`` integrates ``exp(-u|t-s|) du/u`` over ``[C_{k-1}, C_k]``;
    the levels add up to the full kernel. Cutoffs default to ``C**(k/L)``.
    """
    if not isinstance(spec, KahaneFamily):
        raise TypeError("sigma-positive decomposition is defined for KahaneFamily kernels")
    if levels < 1:
        raise ValueError("need at least one level")
    if cutoffs is None:
        cuts = geometric_cutoffs(spec.C, levels)
    else:
        cuts = np.asarray(cutoffs, dtype=float)
        if cuts.shape != (levels + 1,):
            raise ValueError(f"need {levels + 1} cutoffs, got {cuts.size}")
        if cuts[0] != 1.0 or cuts[-1] != spec.C or np.any(np.diff(cuts) <= 0):
            raise ValueError("cutoffs must increase strictly from 1 to C")
    out = []
    for k in range(levels):
        entries = mirror_upper(_kahane_matrix(spec.gamma, cuts[k], cuts[k + 1], grid.centers))
        out.append(cov_from_entries(entries, label=f"level{k + 1}"))
    return out


# ---------------------------------------------------------------------------
# mollification


def mollifier_weights(target: DomainGrid, source: DomainGrid, moll: Mollifier, eps: float) -> np.ndarray:
    """Row-stochastic smoothing weights from ``source`` cells to ``target`` centers.

    ``W[i, j]`` is proportional to ``psi_eps(t_i - s_j) * mu_j`` and every row
    is renormalized to sum to one over the domain. A row whose support
    contains no source center falls back to the nearest source cell.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if eps < min(source.spacing):
        warnings.warn(
            f"mollifier under-resolved: eps={eps:g} below grid spacing {min(source.spacing):g}",
            RuntimeWarning,
            stacklevel=2,
        )
    diff = target.centers[:, None, :] - source.centers[None, :, :]
    w = moll.scaled(diff, eps) * source.cell_measure[None, :]
    sums = w.sum(axis=1)
    empty = sums <= 0
    if np.any(empty):
        nearest = np.argmin(np.sum(diff[empty] ** 2, axis=-1), axis=1)
        w[empty] = 0.0
        w[np.flatnonzero(empty), nearest] = 1.0
        sums = w.sum(axis=1)
    return w / sums[:, None]


def mollify_kernel(K: CovMatrix, grid: DomainGrid, moll: Mollifier, eps: float) -> CovMatrix:
    """Covariance of the mollified field, ``W K W^T``."""
    w = mollifier_weights(grid, grid, moll, eps)
    if w.shape[1] != K.size:
        raise ValueError("kernel and grid sizes differ")
    return cov_from_entries(w @ K.entries @ w.T, label=f"{K.label}*{moll.profile}")


def offdiag_max_gap(a: CovMatrix, b: CovMatrix) -> float:
    """``max |a - b|`` over off-diagonal pairs."""
    d = np.abs(a.entries - b.entries)
    np.fill_diagonal(d, 0.0)
    return float(d.max(initial=0.0))


# ---------------------------------------------------------------------------
# moments


def kernel_moment(K: CovMatrix, grid: DomainGrid, n: int) -> float:
    """``sum_ij K_ij**n mu_i mu_j``."""
    if n < 1:
        raise ValueError("moment order must be at least 1")
    mu = grid.cell_measure
    return float(mu @ (K.entries**n) @ mu)


def kahane_bound_gap(K: CovMatrix, spec: KahaneFamily, grid: DomainGrid) -> float:
    """Largest ``|K - gamma**2 log(C ^ 1/|t-s|)|`` over the grid."""
    dist = _pairwise_distances(grid.centers)
    with np.errstate(divide="ignore"):
        ref = spec.gamma**2 * np.log(np.minimum(spec.C, 1.0 / dist))
    return float(np.max(np.abs(K.entries - ref)))


def _window_max(a: np.ndarray, m: int) -> float:
    """Largest mean of ``a`` over ``m x m`` windows."""
    s = np.zeros((a.shape[0] + 1, a.shape[1] + 1))
    s[1:, 1:] = a.cumsum(0).cumsum(1)
    win = s[m:, m:] - s[:-m, m:] - s[m:, :-m] + s[:-m, :-m]
    return float(win.max()) / (m * m)


def kernel_moment_scaling(spec: LogKernel, grid: DomainGrid, n: int, eps_ladder: Sequence[float],
                          cells_per_window: int = 8) -> list[tuple[float, float, float]]:
    """Sup over window pairs of the box-smoothed ``K**n``, per window width.

    For each ``eps`` the base grid is refined until a window of width ``eps``
    covers ``cells_per_window`` cells. The box average over
    ``[a, a+eps] x [b, b+eps]`` is then a mean over an ``m x m`` block and the
    sup over aligned ``(a, b)`` is a sliding-window max.

    Returns ``(eps, sup_value, |log eps|**n)`` triples.
    """
    if not isinstance(spec, LogKernel):
        raise TypeError("moment scaling is defined for LogKernel specs")
    if grid.dim != 1:
        raise ValueError("moment scaling is defined on a one-dimensional domain")
    if grid.density is not None:
        raise ValueError("moment scaling needs the uniform reference measure")
    length = grid.bounds[0][1] - grid.bounds[0][0]
    out = []
    for eps in eps_ladder:
        cells = cells_per_window * length / eps
        ncells = int(round(cells))
        if abs(cells - ncells) > 1e-9 * cells or ncells % grid.n_per_axis:
            raise ValueError(f"eps={eps} does not align with refinements of the base grid")
        g = grid if ncells == grid.n_per_axis else refine(grid, ncells // grid.n_per_axis)
        k = kernel_entries(spec, g)
        out.append((float(eps), _window_max(k**n, cells_per_window), abs(math.log(eps)) ** n))
    return out


def uniform_unit_grid(n: int, dim: int = 1) -> DomainGrid:
    return build_grid(dim, (0.0, 1.0), n)


__all__ = [
    "BOX", "TRIANGLE", "CovMatrix", "Explicit", "KahaneFamily", "KernelNotPSDError", "KernelSpec",
    "LogKernel", "Mollified", "Mollifier", "SigmaPositiveSum", "eval_kernel", "factorize",
    "kernel_entries", "kernel_moment", "kernel_moment_scaling", "log_u_integral", "mollifier",
    "mollifier_weights", "mollify_kernel", "same_grid", "sigma_positive_decompose", "spec_from_dict",
    "spec_to_dict", "zero_cov",
]
