"""Sum/max segment tree for proportional prioritized sampling.

The two inner loops (leaf update with parent recomputation, and batched
prefix-sum descent) run in a compiled extension when it was built, and in
vectorised numpy otherwise. Both backends perform the same floating-point
operations in the same order and return identical results.
"""

from __future__ import annotations

import numpy as np

try:
    from . import _sumtree as _kernels

    BACKEND = "cython"
except ImportError:  # extension not built
    _kernels = None
    BACKEND = "numpy"


def numpy_update(sums: np.ndarray, maxes: np.ndarray, size: int,
                 index: np.ndarray, values: np.ndarray) -> None:
    # sequential semantics: with repeated indices the last value wins
    for i, v in zip(index.tolist(), values.tolist()):
        sums[i + size] = v
        maxes[i + size] = v
    nodes = np.unique((index + size) >> 1)
    while nodes.size and nodes[0] >= 1:
        sums[nodes] = sums[2 * nodes] + sums[2 * nodes + 1]
        maxes[nodes] = np.maximum(maxes[2 * nodes], maxes[2 * nodes + 1])
        nodes = np.unique(nodes >> 1)
        if nodes[0] == 0:
            nodes = nodes[1:]


def numpy_find(sums: np.ndarray, size: int, mass: np.ndarray, out: np.ndarray) -> None:
    m = mass.copy()
    node = np.ones(len(m), dtype=np.int64)
    while len(node) and node[0] < size:
        left = sums[2 * node]
        right = m >= left
        m = np.where(right, m - left, m)
        node = 2 * node + right
    out[:] = node - size


class SumTree:
    """Leaf values with O(log n) update, total, max and prefix search."""

    def __init__(self, capacity: int, backend: str | None = None):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.size = 1 << max(0, (capacity - 1).bit_length())
        self.sums = np.zeros(2 * self.size)
        self.maxes = np.zeros(2 * self.size)
        backend = backend or BACKEND
        if backend == "cython":
            if _kernels is None:
                raise ImportError("compiled sum-tree extension is not available")
            self._update, self._find = _kernels.update, _kernels.find
        elif backend == "numpy":
            self._update, self._find = numpy_update, numpy_find
        else:
            raise ValueError(f"unknown backend {backend!r}")
        self.backend = backend

    def update(self, index, values) -> None:
        index = np.ascontiguousarray(index, dtype=np.int64).reshape(-1)
        values = np.ascontiguousarray(values, dtype=np.float64).reshape(-1)
        if index.size and (index.min() < 0 or index.max() >= self.capacity):
            raise IndexError(f"leaf index out of range [0, {self.capacity})")
        self._update(self.sums, self.maxes, self.size, index, values)

    def find(self, mass) -> np.ndarray:
        """Leftmost leaf whose inclusive prefix sum exceeds each ``mass``."""
        mass = np.ascontiguousarray(mass, dtype=np.float64).reshape(-1)
        out = np.empty(len(mass), dtype=np.int64)
        self._find(self.sums, self.size, mass, out)
        return out

    def leaves(self, index) -> np.ndarray:
        return self.sums[np.asarray(index, dtype=np.int64) + self.size]

    def total(self) -> float:
        return float(self.sums[1])

    def max(self) -> float:
        return float(self.maxes[1])
