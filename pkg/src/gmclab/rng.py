"""Counter-based, replica-addressable normal streams.

Every random number in the package is drawn from a ``numpy`` Philox
generator keyed by ``(seed, namespace, block)``. Replicas are laid out in
fixed-size blocks so that replica ``r`` of an ensemble is always the same
row of the same block, whichever order (or thread) the blocks are
generated in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BLOCK = 1024
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SeedRecord:
    """Master seed plus the replica index (``stream``) it addresses.

    ``namespace`` separates independent uses of one master seed, for
    instance the levels of a martingale filtration.
    """

    seed: int
    stream: int = 0
    namespace: int = 0

    def __post_init__(self):
        if not 0 <= self.seed <= _MASK64:
            raise ValueError(f"seed must fit in 64 bits, got {self.seed}")
        if self.stream < 0 or self.namespace < 0:
            raise ValueError("stream and namespace must be nonnegative")

    def child(self, namespace: int) -> "SeedRecord":
        return SeedRecord(self.seed, self.stream, namespace)

    def to_dict(self) -> dict:
        return {"seed": self.seed, "stream": self.stream, "namespace": self.namespace}

    @classmethod
    def from_dict(cls, d: dict) -> "SeedRecord":
        return cls(int(d["seed"]), int(d.get("stream", 0)), int(d.get("namespace", 0)))


def _block_generator(seed: int, namespace: int, block: int) -> np.random.Generator:
    key = np.array([seed & _MASK64, ((namespace & 0xFFFFFFFF) << 32) | block], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _block_normals(seed: int, namespace: int, block: int, width: int) -> np.ndarray:
    return _block_generator(seed, namespace, block).standard_normal((BLOCK, width))


def replica_normals(seed: SeedRecord, replicas: int, width: int) -> np.ndarray:
    """Standard normals for replicas ``seed.stream .. seed.stream + replicas - 1``.

    Returns an array of shape ``(replicas, width)``. Row ``k`` is identical to
    ``replica_normals(SeedRecord(seed.seed, seed.stream + k, ...), 1, width)[0]``.
    """
    if replicas < 0:
        raise ValueError("replicas must be nonnegative")
    out = np.empty((replicas, width))
    if replicas == 0 or width == 0:
        return out
    start = seed.stream
    stop = start + replicas
    pos = 0
    for block in range(start // BLOCK, (stop - 1) // BLOCK + 1):
        lo = max(start, block * BLOCK) - block * BLOCK
        hi = min(stop, (block + 1) * BLOCK) - block * BLOCK
        out[pos:pos + hi - lo] = _block_normals(seed.seed, seed.namespace, block, width)[lo:hi]
        pos += hi - lo
    return out


def replica_uniforms(seed: SeedRecord, replicas: int) -> np.ndarray:
    """One uniform on [0, 1) per replica, same block layout as the normals."""
    out = np.empty(replicas)
    start = seed.stream
    stop = start + replicas
    pos = 0
    for block in range(start // BLOCK, (stop - 1) // BLOCK + 1) if replicas else ():
        lo = max(start, block * BLOCK) - block * BLOCK
        hi = min(stop, (block + 1) * BLOCK) - block * BLOCK
        u = _block_generator(seed.seed, seed.namespace, block).random(BLOCK)
        out[pos:pos + hi - lo] = u[lo:hi]
        pos += hi - lo
    return out
