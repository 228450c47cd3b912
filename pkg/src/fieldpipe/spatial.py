"""Exact nearest-neighbor and bounding-box acceleration structures.

knn results are exact (brute-force equivalent) with ties broken by lower
point index, because Shepard-type weights are sensitive to the realized
maximal distance.  Indices are immutable after build.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree


class IndexError_(Exception):
    pass


class PointIndex:
    """Balanced k-d tree over a snapshot of 3D points; exact queries only."""

    def __init__(self, points):
        pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64))
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise IndexError_(f"points must be (N, 3), got {pts.shape}")
        self.points = pts
        self._tree = cKDTree(pts, balanced_tree=True)

    def __len__(self):
        return len(self.points)

    def knn(self, p, k: int):
        """k nearest points to p: (indices, distances), distance-ascending.

        Ties are broken by lower point index, which makes results
        order-independent of how the points were enumerated.
        """
        n = len(self.points)
        if k < 1 or k > n:
            raise IndexError_(f"k={k} out of range [1, {n}]")
        p = np.asarray(p, dtype=np.float64)
        dist, idx = self._tree.query(p, k=k)
        dist = np.atleast_1d(dist)
        idx = np.atleast_1d(idx)
        # Re-resolve the boundary distance exactly so ties at the k-th
        # neighbor obey the index rule regardless of tree internals.
        d_k = float(dist[-1])
        cand = self._tree.query_ball_point(p, d_k * (1.0 + 1e-12) + 1e-300)
        cand = np.asarray(cand, dtype=np.int64)
        if len(cand) >= k:
            cd = np.linalg.norm(self.points[cand] - p, axis=1)
            order = np.lexsort((cand, cd))
            cand, cd = cand[order], cd[order]
            return cand[:k], cd[:k]
        # Floating-point radius landed short of the tree result; trust it.
        cd = np.linalg.norm(self.points[idx] - p, axis=1)
        order = np.lexsort((idx, cd))
        return idx[order], cd[order]


class BoxIndex:
    """Uniform-grid index over axis-aligned element bounding boxes.

    candidates() returns a superset of the elements containing a point.
    """

    def __init__(self, lo: np.ndarray, hi: np.ndarray, groups=None):
        """lo/hi: (n, 3) box corners. groups: optional per-box group id."""
        self.lo = np.asarray(lo, dtype=np.float64)
        self.hi = np.asarray(hi, dtype=np.float64)
        n = len(self.lo)
        self.groups = (np.zeros(n, dtype=np.int64) if groups is None
                       else np.asarray(groups, dtype=np.int64))
        if n == 0:
            self._gmin = np.zeros(3)
            self._gmax = np.zeros(3)
            self._res = np.ones(3, dtype=np.int64)
            self._cells = {}
            return
        pad = 1e-10 * max(float((self.hi - self.lo).max(initial=0.0)), 1.0)
        self.lo = self.lo - pad
        self.hi = self.hi + pad
        self._gmin = self.lo.min(axis=0)
        self._gmax = self.hi.max(axis=0)
        span = np.maximum(self._gmax - self._gmin, 1e-300)
        res = max(1, int(round(n ** (1.0 / 3.0))))
        self._res = np.full(3, res, dtype=np.int64)
        self._cell_size = span / self._res
        self._cells: dict[tuple[int, int, int], list[int]] = {}
        ilo = self._cell_of(self.lo)
        ihi = self._cell_of(self.hi)
        for b in range(n):
            for i in range(ilo[b, 0], ihi[b, 0] + 1):
                for j in range(ilo[b, 1], ihi[b, 1] + 1):
                    for kk in range(ilo[b, 2], ihi[b, 2] + 1):
                        self._cells.setdefault((i, j, kk), []).append(b)

    def _cell_of(self, pts: np.ndarray) -> np.ndarray:
        frac = (np.atleast_2d(pts) - self._gmin) / self._cell_size
        cell = np.floor(frac).astype(np.int64)
        return np.clip(cell, 0, self._res - 1)

    def candidates(self, p) -> np.ndarray:
        """Sorted box indices whose bounding box contains p."""
        p = np.asarray(p, dtype=np.float64)
        if len(self.lo) == 0 or np.any(p < self._gmin) or np.any(p > self._gmax):
            return np.empty(0, dtype=np.int64)
        cell = tuple(self._cell_of(p)[0])
        cand = self._cells.get(cell)
        if not cand:
            return np.empty(0, dtype=np.int64)
        cand = np.asarray(cand, dtype=np.int64)
        inside = np.all((self.lo[cand] <= p) & (p <= self.hi[cand]), axis=1)
        return np.sort(cand[inside])

    @classmethod
    def for_mesh(cls, mesh, regions) -> "BoxIndex":
        """Index over the elements of the given regions, in region order.

        Group id = position in `regions`; box index within a group equals
        the region-wide element index.
        """
        lo, hi, groups, offsets = [], [], [], []
        for gi, region in enumerate(regions):
            count = 0
            for blk in mesh.region(region):
                x = mesh.nodes[blk.connectivity]  # (n_el, n_nodes, 3)
                lo.append(x.min(axis=1))
                hi.append(x.max(axis=1))
                groups.append(np.full(blk.num_elements, gi, dtype=np.int64))
                count += blk.num_elements
            offsets.append(count)
        if lo:
            idx = cls(np.vstack(lo), np.vstack(hi), np.concatenate(groups))
        else:
            idx = cls(np.empty((0, 3)), np.empty((0, 3)))
        # Map global box index back to per-region element index.
        starts = np.zeros(len(regions), dtype=np.int64)
        if len(regions) > 1:
            starts[1:] = np.cumsum(offsets[:-1])
        idx._region_starts = starts
        return idx

    def candidates_in_region(self, region_pos: int, p) -> np.ndarray:
        """Element indices (region-local, sorted) whose box contains p."""
        cand = self.candidates(p)
        cand = cand[self.groups[cand] == region_pos]
        return cand - self._region_starts[region_pos]
