"""Uniform partition of the unit cube into ``n**d`` half-open cells.

Cells and multi-indices are 0-based. Along each axis cell ``i`` is
``[i/n, (i+1)/n)`` except the last, which is closed at 1. Flat indices follow
C (row-major) order over the multi-index.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DomainError, InvalidArgumentError, ResourceError

DEFAULT_MAX_CELLS = 2**20


@dataclass(frozen=True)
class FinePartition:
    n: int
    d: int

    @property
    def num_cells(self) -> int:
        return self.n**self.d

    @property
    def cell_volume(self) -> float:
        return float(self.n) ** (-self.d)

    @property
    def diameter(self) -> float:
        """Largest cell diameter, ``sqrt(d) / n``."""
        return math.sqrt(self.d) / self.n

    def flat_index(self, multi) -> np.ndarray | int:
        multi = np.asarray(multi, dtype=np.int64)
        if multi.shape[-1] != self.d or np.any(multi < 0) or np.any(multi >= self.n):
            raise InvalidArgumentError(f"invalid multi-index {multi.tolist()}")
        flat = np.ravel_multi_index(tuple(np.moveaxis(multi, -1, 0)), (self.n,) * self.d)
        return int(flat) if np.ndim(flat) == 0 else flat

    def multi_index(self, k) -> tuple | np.ndarray:
        k = np.asarray(k, dtype=np.int64)
        if np.any(k < 0) or np.any(k >= self.num_cells):
            raise InvalidArgumentError(f"cell index out of range: {k.tolist()}")
        idx = np.stack(np.unravel_index(k, (self.n,) * self.d), axis=-1)
        return tuple(int(i) for i in idx) if k.ndim == 0 else idx

    def cell_bounds(self, k) -> tuple[np.ndarray, np.ndarray]:
        multi = np.asarray(self.multi_index(k), dtype=np.float64)
        return multi / self.n, (multi + 1.0) / self.n

    @cached_property
    def representatives(self) -> np.ndarray:
        """Cell centers, shape ``(n**d, d)``, in flat-index order."""
        mids = (np.arange(self.n) + 0.5) / self.n
        mesh = np.meshgrid(*([mids] * self.d), indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=-1)

    def multi_cell_of(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.d:
            raise InvalidArgumentError(f"point dimension {x.shape[-1]} != {self.d}")
        if not np.all((x >= 0.0) & (x <= 1.0)):
            raise DomainError("point lies outside the unit cube")
        return np.minimum(np.floor(self.n * x).astype(np.int64), self.n - 1)

    def cell_of(self, x):
        """Flat index of the cell holding each point (last axis is the coordinate)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 0:
            x = x.reshape(1)
        elif x.ndim == 1 and self.d == 1 and x.shape[0] != 1:
            x = x.reshape(-1, 1)
        multi = self.multi_cell_of(x)
        flat = np.ravel_multi_index(tuple(np.moveaxis(multi, -1, 0)), (self.n,) * self.d)
        return int(flat) if np.ndim(flat) == 0 else flat

    def indicator(self, k: int, x):
        if not (0 <= int(k) < self.num_cells):
            raise InvalidArgumentError(f"cell index {k} out of range")
        hit = np.asarray(self.cell_of(x)) == int(k)
        return hit.astype(np.float64) if hit.ndim else float(hit)

    def indicator_matrix(self, x) -> np.ndarray:
        """One-hot membership, shape ``(N, n**d)``."""
        cells = np.atleast_1d(self.cell_of(np.asarray(x).reshape(-1, self.d)))
        out = np.zeros((cells.shape[0], self.num_cells))
        out[np.arange(cells.shape[0]), cells] = 1.0
        return out


def build_partition(n: int, d: int, max_cells: int = DEFAULT_MAX_CELLS) -> FinePartition:
    if int(n) != n or int(d) != d or n < 1 or d < 1:
        raise InvalidArgumentError(f"n and d must be positive integers, got n={n!r}, d={d!r}")
    n, d = int(n), int(d)
    if n**d > max_cells:
        raise ResourceError(f"{n}**{d} cells exceed the budget of {max_cells}")
    return FinePartition(n, d)


def cell_of(p: FinePartition, x):
    return p.cell_of(x)


def indicator(p: FinePartition, k: int, x):
    return p.indicator(k, x)
