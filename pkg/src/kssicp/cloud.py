"""Point cloud data model and exact nearest-neighbour queries."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateCloud, EmptyCloud, FormatError, SizeMismatch, TooFewPoints

NORMAL_TOL = 1e-6


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PointCloud:
    """An ordered set of 3D points with optional unit normals.

    Arrays are copied and made read-only on construction, so a cloud can be
    shared between threads without locking.
    """

    points: np.ndarray
    normals: Optional[np.ndarray] = None
    name: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1 and pts.size == 3:
            pts = pts.reshape(1, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise FormatError(f"points must have shape (n, 3), got {pts.shape}")
        if pts.shape[0] == 0:
            raise EmptyCloud("point cloud has no points")
        if not np.all(np.isfinite(pts)):
            raise FormatError("non-finite coordinate in point cloud")
        object.__setattr__(self, "points", _frozen(pts))
        if self.normals is not None:
            nrm = np.asarray(self.normals, dtype=np.float64)
            if nrm.shape != pts.shape:
                raise SizeMismatch(f"normals shape {nrm.shape} != points shape {pts.shape}")
            if not np.all(np.isfinite(nrm)):
                raise FormatError("non-finite normal in point cloud")
            lengths = np.linalg.norm(nrm, axis=1)
            if np.any(np.abs(lengths - 1.0) > NORMAL_TOL):
                raise FormatError("normals must have unit length")
            object.__setattr__(self, "normals", _frozen(nrm))

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def has_normals(self) -> bool:
        return self.normals is not None

    def subset(self, indices, name: Optional[str] = None) -> "PointCloud":
        idx = np.asarray(indices, dtype=np.int64)
        normals = None if self.normals is None else self.normals[idx]
        return PointCloud(self.points[idx], normals, self.name if name is None else name)

    def with_normals(self, normals) -> "PointCloud":
        return PointCloud(self.points, normals, self.name)

    def transformed(self, matrix: np.ndarray) -> "PointCloud":
        """Apply a 4x4 similarity; normals are rotated and renormalised."""
        m = np.asarray(matrix, dtype=np.float64)
        lin = m[:3, :3]
        pts = self.points @ lin.T + m[:3, 3]
        normals = None
        if self.normals is not None:
            normals = self.normals @ lin.T
            normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        return PointCloud(pts, normals, self.name)


@dataclass(frozen=True)
class BoundingBox:
    min: np.ndarray
    max: np.ndarray

    @property
    def extent(self) -> np.ndarray:
        return self.max - self.min

    @property
    def longest_edge(self) -> float:
        return float(np.max(self.extent))

    @property
    def diagonal(self) -> float:
        return float(np.linalg.norm(self.extent))


def bounding_box(cloud: PointCloud) -> BoundingBox:
    pts = cloud.points
    return BoundingBox(_frozen(pts.min(axis=0)), _frozen(pts.max(axis=0)))


class SpatialIndex:
    """Exact nearest and k-nearest neighbour queries over one point set.

    Backed by :class:`scipy.spatial.cKDTree`. Equal distances are resolved
    in favour of the lowest point index, which the tree alone does not
    guarantee.
    """

    def __init__(self, points):
        if isinstance(points, PointCloud):
            points = points.points
        pts = _frozen(points)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] == 0:
            raise EmptyCloud("cannot index an empty point set")
        self.points = pts
        self._tree = cKDTree(pts)

    def __len__(self) -> int:
        return self.points.shape[0]

    def nearest(self, queries):
        """Return ``(distances, indices)`` of the closest point to each query."""
        q = np.asarray(queries, dtype=np.float64)
        single = q.ndim == 1
        q = np.atleast_2d(q)
        d, i = self.knn(q, 1)
        d, i = d[:, 0], i[:, 0]
        if single:
            return float(d[0]), int(i[0])
        return d, i

    def knn(self, queries, k: int):
        """Return ``(distances, indices)`` of shape (m, k), sorted by (distance, index)."""
        q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        n = len(self)
        if not 1 <= k <= n:
            raise TooFewPoints(f"k={k} neighbours requested from {n} points")
        kq = min(k + 1, n)
        d, idx = self._tree.query(q, k=kq)
        d = d.reshape(len(q), kq)
        idx = idx.reshape(len(q), kq)
        # exact distances, so ties compare equal regardless of tree internals
        d = np.linalg.norm(self.points[idx] - q[:, None, :], axis=2)
        order = _rowwise_lexsort(d, idx)
        d = np.take_along_axis(d, order, axis=1)
        idx = np.take_along_axis(idx, order, axis=1)
        if kq > k:
            tied = np.nonzero(d[:, k - 1] == d[:, k])[0]
            for row in tied:
                d[row, :k], idx[row, :k] = self._resolve_ties(q[row], k, d[row, k - 1])
        return d[:, :k].copy(), idx[:, :k].copy()

    def _resolve_ties(self, query, k, radius):
        cand = np.array(self._tree.query_ball_point(query, radius * (1 + 1e-9) + 1e-300), dtype=np.int64)
        dist = np.linalg.norm(self.points[cand] - query, axis=1)
        order = np.lexsort((cand, dist))[:k]
        return dist[order], cand[order]


def _rowwise_lexsort(primary: np.ndarray, secondary: np.ndarray) -> np.ndarray:
    # stable argsort on the secondary key, then stable on the primary
    first = np.argsort(secondary, axis=1, kind="stable")
    p = np.take_along_axis(primary, first, axis=1)
    second = np.argsort(p, axis=1, kind="stable")
    return np.take_along_axis(first, second, axis=1)


def build_index(cloud: PointCloud) -> SpatialIndex:
    return SpatialIndex(cloud.points)


def _self_excluded_knn(cloud: PointCloud, k: int, index: Optional[SpatialIndex] = None):
    n = len(cloud)
    if n <= k:
        raise TooFewPoints(f"need more than k={k} points, got {n}")
    index = index or build_index(cloud)
    d, idx = index.knn(cloud.points, k + 1)
    own = idx == np.arange(n)[:, None]
    # drop the point itself; if a duplicate displaced it, drop the farthest instead
    missing = ~own.any(axis=1)
    own[missing, k] = True
    keep = ~own
    return d[keep].reshape(n, k), idx[keep].reshape(n, k)


def average_knn_distance(cloud: PointCloud, k: int = 12) -> float:
    """Mean over points of the mean distance to their k nearest other points."""
    d, _ = _self_excluded_knn(cloud, k)
    return float(d.mean(axis=1).mean())


def estimate_normals(cloud: PointCloud, k: int = 12) -> PointCloud:
    """PCA normals over k neighbours, oriented away from the cloud centroid."""
    n = len(cloud)
    if n < 3:
        raise TooFewPoints("normal estimation needs at least 3 points")
    k = min(k, n - 1)
    _, idx = _self_excluded_knn(cloud, k)
    pts = cloud.points
    nbh = np.concatenate([pts[:, None, :], pts[idx]], axis=1)
    centered = nbh - nbh.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered)
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]
    outward = pts - pts.mean(axis=0)
    flip = np.einsum("ij,ij->i", normals, outward) < 0
    normals[flip] *= -1.0
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    if not np.all(np.isfinite(normals)):
        raise DegenerateCloud("normal estimation produced non-finite vectors")
    return cloud.with_normals(normals)


def ensure_normals(cloud: PointCloud, k: int = 12) -> PointCloud:
    return cloud if cloud.has_normals else estimate_normals(cloud, k)
