"""Block vectors: elements of product spaces like Y = Y_1 x ... x Y_p.

A :class:`BlockVec` is an ordered tuple of ndarrays (each part may be a
vector or a matrix).  Arithmetic is elementwise across parts, so solver
code can treat plain ndarrays and block vectors uniformly through the
module-level helpers ``vdot``, ``vnorm``, ``zeros_like`` etc.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "BlockVec",
    "vdot",
    "vnorm",
    "zeros_like",
    "copy_vec",
    "all_finite",
    "ravel_vec",
    "unravel_like",
]


class BlockVec:
    """Immutable-by-convention tuple of ndarrays with vector-space arithmetic."""

    __slots__ = ("parts",)

    def __init__(self, parts):
        self.parts = tuple(np.asarray(p, dtype=float) for p in parts)

    def __len__(self):
        return len(self.parts)

    def __getitem__(self, i):
        return self.parts[i]

    def __iter__(self):
        return iter(self.parts)

    def _zip(self, other, op):
        if not isinstance(other, BlockVec) or len(other) != len(self):
            return NotImplemented
        return BlockVec([op(a, b) for a, b in zip(self.parts, other.parts)])

    def __add__(self, other):
        return self._zip(other, lambda a, b: a + b)

    def __sub__(self, other):
        return self._zip(other, lambda a, b: a - b)

    def __mul__(self, s):
        if not np.isscalar(s):
            return NotImplemented
        return BlockVec([s * p for p in self.parts])

    __rmul__ = __mul__

    def __truediv__(self, s):
        return BlockVec([p / s for p in self.parts])

    def __neg__(self):
        return BlockVec([-p for p in self.parts])

    def copy(self):
        return BlockVec([p.copy() for p in self.parts])

    def __repr__(self):
        return f"BlockVec({[p.shape for p in self.parts]})"


def vdot(a, b) -> float:
    """Euclidean inner product, BlockVec-aware."""
    if isinstance(a, BlockVec):
        return float(sum(np.vdot(p, q) for p, q in zip(a.parts, b.parts)))
    return float(np.vdot(a, b))


def vnorm(a) -> float:
    """Euclidean norm (Frobenius for matrix parts)."""
    return float(np.sqrt(max(vdot(a, a), 0.0)))


def zeros_like(v):
    if isinstance(v, BlockVec):
        return BlockVec([np.zeros_like(p) for p in v.parts])
    return np.zeros_like(np.asarray(v, dtype=float))


def copy_vec(v):
    if isinstance(v, BlockVec):
        return v.copy()
    return np.array(v, dtype=float, copy=True)


def all_finite(v) -> bool:
    if isinstance(v, BlockVec):
        return all(np.all(np.isfinite(p)) for p in v.parts)
    return bool(np.all(np.isfinite(v)))


def ravel_vec(v) -> np.ndarray:
    """Flatten to a 1-d array (concatenating BlockVec parts in order)."""
    if isinstance(v, BlockVec):
        return np.concatenate([np.ravel(p) for p in v.parts])
    return np.ravel(np.asarray(v, dtype=float))


def unravel_like(flat, template):
    """Inverse of :func:`ravel_vec` for a given template element."""
    flat = np.asarray(flat, dtype=float)
    if isinstance(template, BlockVec):
        parts, k = [], 0
        for p in template.parts:
            parts.append(flat[k : k + p.size].reshape(p.shape))
            k += p.size
        return BlockVec(parts)
    return flat.reshape(np.shape(template))
