"""Fixed-radius neighbour search on a uniform grid.

Every estimator sums over an epsilon-ball, so the index is built for a single
radius.  Cells are slightly larger than the radius so that floating-point
rounding in the cell assignment can never separate a pair at distance exactly
``radius`` by more than one cell.
"""

from __future__ import annotations

import itertools

import numpy as np

_CELL_PAD = 1.0 + 1e-9


class QueryRadiusError(ValueError):
    pass


class GridError(ValueError):
    pass


def _expand_ranges(lo: np.ndarray, counts: np.ndarray) -> np.ndarray:
    total = int(counts.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    starts = np.repeat(lo - (np.cumsum(counts) - counts), counts)
    return starts + np.arange(total)


class SpatialIndex:
    """Uniform-grid index over an immutable point set.

    ``query`` returns sorted indices ``j`` with ``0 < |x_j - x| <= r``.
    """

    def __init__(self, points, radius: float):
        if not radius > 0:
            raise ValueError(f"radius must be positive, got {radius}")
        pts = np.array(points, dtype=float, copy=True)
        if pts.ndim != 2:
            pts = pts.reshape(len(pts), -1) if pts.size else np.zeros((0, 1))
        if not np.all(np.isfinite(pts)):
            raise GridError("points must be finite")
        pts.setflags(write=False)
        self.points = pts
        self.radius = float(radius)
        self.cell = self.radius * _CELL_PAD
        self.n = pts.shape[1]
        if len(pts):
            self.origin = pts.min(axis=0)
            cells = np.floor((pts - self.origin) / self.cell).astype(np.int64)
            self.shape = cells.max(axis=0) + 1
        else:
            self.origin = np.zeros(self.n)
            cells = np.zeros((0, self.n), dtype=np.int64)
            self.shape = np.ones(self.n, dtype=np.int64)
        self._cells = cells
        # mixed-radix key with a one-cell margin on each side
        dims = [int(s) + 2 for s in self.shape]
        if float(np.prod(np.array(dims, dtype=float))) >= 2.0**62:
            raise GridError("grid too fine for this extent; increase the radius")
        self._strides = np.array([int(np.prod(dims[k + 1:])) for k in range(self.n)], dtype=np.int64)
        self._offsets = np.array(list(itertools.product((-1, 0, 1), repeat=self.n)), dtype=np.int64)
        keys = self._key(cells)
        self._order = np.argsort(keys, kind="stable")
        self._sorted_keys = keys[self._order]

    def __len__(self):
        return len(self.points)

    def _key(self, cells: np.ndarray) -> np.ndarray:
        return (cells + 1) @ self._strides

    def _check_radius(self, r):
        r = self.radius if r is None else float(r)
        if r > self.radius:
            raise QueryRadiusError(f"query radius {r} exceeds build radius {self.radius}")
        return r

    def _candidates(self, cells: np.ndarray):
        """(row, point index) candidate arrays over the 3^n neighbour cells, grouped by row."""
        nb = cells[:, None, :] + self._offsets[None, :, :]
        ok = np.all((nb >= -1) & (nb <= self.shape), axis=2)
        keys = self._key(nb)
        lo = np.searchsorted(self._sorted_keys, keys, side="left")
        hi = np.searchsorted(self._sorted_keys, keys, side="right")
        counts = np.where(ok, hi - lo, 0).ravel()
        rows = np.repeat(np.repeat(np.arange(len(cells)), len(self._offsets)), counts)
        return rows, self._order[_expand_ranges(lo.ravel(), counts)]

    def query(self, center, r: float | None = None) -> np.ndarray:
        """Indices within ``r`` of a point (array) or of cloud point ``center`` (int)."""
        r = self._check_radius(r)
        if len(self.points) == 0:
            return np.zeros(0, dtype=np.int64)
        if isinstance(center, (int, np.integer)):
            x = self.points[int(center)]
        else:
            x = np.asarray(center, dtype=float).reshape(self.n)
        cell = np.floor((x - self.origin) / self.cell).astype(np.int64)[None, :]
        _, idx = self._candidates(cell)
        diff = self.points[idx] - x
        d2 = np.einsum("ij,ij->i", diff, diff)
        keep = (d2 > 0) & (d2 <= r * r)
        return np.sort(idx[keep])

    def pairs(self, r: float | None = None, rows=None, coincident: bool = False):
        """All ordered pairs ``(i, j)``, ``i != j``, with ``|x_i - x_j| <= r``.

        ``rows`` restricts ``i`` to a subset.  Pairs at distance zero are only
        returned with ``coincident=True``.  Output is sorted by ``(i, j)``.
        """
        r = self._check_radius(r)
        if rows is None:
            rows = np.arange(len(self.points))
        rows = np.asarray(rows, dtype=np.int64)
        if len(rows) == 0 or len(self.points) == 0:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty.copy()
        sub, j = self._candidates(self._cells[rows])
        i = rows[sub]
        diff = self.points[j] - self.points[i]
        d2 = np.einsum("ij,ij->i", diff, diff)
        keep = (i != j) & (d2 <= r * r)
        if not coincident:
            keep &= d2 > 0
        i, j = i[keep], j[keep]
        order = np.argsort(i * len(self.points) + j, kind="stable")
        return i[order], j[order]


def build_index(points, radius: float) -> SpatialIndex:
    return SpatialIndex(points, radius)


def query_radius(index: SpatialIndex, center, r: float | None = None) -> np.ndarray:
    return index.query(center, r)

