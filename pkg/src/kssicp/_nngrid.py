"""Exact nearest-neighbour lookups for dense batched queries in a bounded region.

Space is cut into a regular grid of cubic cells. For a cell with centre c
whose nearest data point lies at distance r, every query q inside the cell
has its nearest point within |q - c| + r <= hd + r of q (hd = half cell
diagonal), so that nearest point lies within r + 2 hd of c. Storing, per
cell, all data points inside that radius (sorted by distance to c) turns a
query into a short scan that can stop as soon as the triangle-inequality
bound |p - c| - |q - c| exceeds the best distance found.

Queries outside the gridded region, or in cells that were not built,
fall back to a full scan, so answers are exact everywhere.
"""

from __future__ import annotations

import math

import numba
import numpy as np

_JIT = dict(nopython=True, nogil=True, cache=True)


@numba.jit(**_JIT)
def _query(x, y, z, pts, lo, h, g, start, cand, cand_d, want_index):
    fx = (x - lo[0]) / h
    fy = (y - lo[1]) / h
    fz = (z - lo[2]) / h
    best = np.inf
    best_i = -1
    if 0.0 <= fx < g and 0.0 <= fy < g and 0.0 <= fz < g:
        cx = int(fx)
        cy = int(fy)
        cz = int(fz)
        cell = (cx * g + cy) * g + cz
        s = start[cell]
        e = start[cell + 1]
        if e > s:
            ox = lo[0] + (cx + 0.5) * h - x
            oy = lo[1] + (cy + 0.5) * h - y
            oz = lo[2] + (cz + 0.5) * h - z
            dq = math.sqrt(ox * ox + oy * oy + oz * oz)
            slack = 1e-9 * h
            best_d = np.inf
            for t in range(s, e):
                if cand_d[t] - dq > best_d + slack:
                    break
                j = cand[t]
                dx = pts[j, 0] - x
                dy = pts[j, 1] - y
                dz = pts[j, 2] - z
                d2 = dx * dx + dy * dy + dz * dz
                if d2 < best or (want_index and d2 == best and j < best_i):
                    best = d2
                    best_i = j
                    best_d = math.sqrt(d2)
            return best, best_i
    for j in range(pts.shape[0]):
        dx = pts[j, 0] - x
        dy = pts[j, 1] - y
        dz = pts[j, 2] - z
        d2 = dx * dx + dy * dy + dz * dz
        if d2 < best:
            best = d2
            best_i = j
    return best, best_i


@numba.jit(**_JIT)
def _nearest_batch(q, pts, lo, h, g, start, cand, cand_d):
    m = q.shape[0]
    dist = np.empty(m)
    idx = np.empty(m, dtype=np.int64)
    for i in range(m):
        d2, j = _query(q[i, 0], q[i, 1], q[i, 2], pts, lo, h, g, start, cand, cand_d, True)
        dist[i] = math.sqrt(d2)
        idx[i] = j
    return dist, idx


@numba.jit(**_JIT)
def _rotated_surface(rots, b, pts, lo, h, g, start, cand, cand_d, use_max):
    """Directed energy of R b -> pts for every rotation R (mean or max of NN distances)."""
    m_rot = rots.shape[0]
    n = b.shape[0]
    out = np.empty(m_rot)
    for m in range(m_rot):
        r = rots[m]
        acc = 0.0
        for i in range(n):
            bx = b[i, 0]
            by = b[i, 1]
            bz = b[i, 2]
            x = r[0, 0] * bx + r[0, 1] * by + r[0, 2] * bz
            y = r[1, 0] * bx + r[1, 1] * by + r[1, 2] * bz
            z = r[2, 0] * bx + r[2, 1] * by + r[2, 2] * bz
            d2, _ = _query(x, y, z, pts, lo, h, g, start, cand, cand_d, False)
            d = math.sqrt(d2)
            if use_max:
                if d > acc:
                    acc = d
            else:
                acc += d
        out[m] = acc if use_max else acc / n
    return out


@numba.jit(**_JIT)
def _rotated_sums_pruned(rots, b, pts, lo, h, g, start, cand, cand_d, bound, prune):
    """Sum of NN distances of R b -> pts, abandoned (inf) once it exceeds ``bound``.

    ``bound`` tightens to the best completed sum as the scan proceeds; with
    ``prune`` false every sum is completed. Sums
    are accumulated in the same order as :func:`_rotated_surface`, so any
    completed value is bitwise equal to the exhaustive one.
    """
    m_rot = rots.shape[0]
    n = b.shape[0]
    out = np.empty(m_rot)
    for m in range(m_rot):
        r = rots[m]
        acc = 0.0
        done = True
        for i in range(n):
            bx = b[i, 0]
            by = b[i, 1]
            bz = b[i, 2]
            x = r[0, 0] * bx + r[0, 1] * by + r[0, 2] * bz
            y = r[1, 0] * bx + r[1, 1] * by + r[1, 2] * bz
            z = r[2, 0] * bx + r[2, 1] * by + r[2, 2] * bz
            d2, _ = _query(x, y, z, pts, lo, h, g, start, cand, cand_d, False)
            acc += math.sqrt(d2)
            if prune and acc > bound:
                done = False
                break
        if done:
            out[m] = acc
            if acc < bound:
                bound = acc
        else:
            out[m] = np.inf
    return out


@numba.jit(**_JIT)
def _count_candidates(cc, pts, pad):
    """Per cell: nearest data distance, and how many points lie within it plus ``pad``."""
    m = cc.shape[0]
    n = pts.shape[0]
    radius = np.empty(m)
    counts = np.zeros(m, dtype=np.int64)
    d2 = np.empty(n)
    for c in range(m):
        best = np.inf
        for j in range(n):
            dx = pts[j, 0] - cc[c, 0]
            dy = pts[j, 1] - cc[c, 1]
            dz = pts[j, 2] - cc[c, 2]
            d2[j] = dx * dx + dy * dy + dz * dz
            if d2[j] < best:
                best = d2[j]
        r = (math.sqrt(best) + pad) * (1.0 + 1e-9)
        radius[c] = r
        r2 = r * r
        k = 0
        for j in range(n):
            if d2[j] <= r2:
                k += 1
        counts[c] = k
    return radius, counts


@numba.jit(**_JIT)
def _fill_candidates(cc, pts, radius, start, cand, cand_d):
    for c in range(cc.shape[0]):
        s = start[c]
        k = 0
        r2 = radius[c] * radius[c]
        for j in range(pts.shape[0]):
            dx = pts[j, 0] - cc[c, 0]
            dy = pts[j, 1] - cc[c, 1]
            dz = pts[j, 2] - cc[c, 2]
            d2 = dx * dx + dy * dy + dz * dz
            if d2 <= r2:
                cand[s + k] = j
                cand_d[s + k] = math.sqrt(d2)
                k += 1
        # stable sort keeps ascending index order among equal distances
        order = np.argsort(cand_d[s:s + k], kind="mergesort")
        cand[s:s + k] = cand[s:s + k][order]
        cand_d[s:s + k] = cand_d[s:s + k][order]


def default_resolution(n_points: int) -> int:
    return int(np.clip(round(2.0 * np.cbrt(n_points)), 8, 48))


class NearestGrid:
    """Exact nearest-neighbour structure over ``points`` for queries near the origin.

    Parameters
    ----------
    points : (n, 3) array
    half_width : float
        Cells cover the cube ``centre +- half_width``.
    ball_radius : float, optional
        Only cells meeting the ball of this radius about ``centre`` get
        candidate lists. Queries elsewhere are still answered exactly, by
        a linear scan.
    resolution : int, optional
        Cells per axis.
    """

    def __init__(self, points, half_width: float, centre=(0.0, 0.0, 0.0),
                 ball_radius: float | None = None, resolution: int | None = None):
        pts = np.ascontiguousarray(points, dtype=np.float64)
        self.points = pts
        g = resolution or default_resolution(len(pts))
        half_width = float(half_width)
        if not half_width > 0:
            half_width = 1.0
        half_width *= 1.0 + 1e-9
        centre = np.asarray(centre, dtype=np.float64).reshape(3)
        self.g = int(g)
        self.h = 2.0 * half_width / self.g
        self.lo = np.ascontiguousarray(centre - half_width)
        axis = (np.arange(self.g) + 0.5) * self.h
        cc = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3) + self.lo
        active = np.ones(len(cc), dtype=bool)
        if ball_radius is not None:
            # distance from the ball centre to each cell box
            rel = np.abs(cc - centre) - self.h / 2.0
            gap = np.linalg.norm(np.maximum(rel, 0.0), axis=1)
            active = gap <= float(ball_radius) * (1.0 + 1e-9)
        act_idx = np.nonzero(active)[0]
        act_cc = np.ascontiguousarray(cc[act_idx])
        half_diag = self.h * math.sqrt(3.0) / 2.0
        radius, act_counts = _count_candidates(act_cc, pts, 2.0 * half_diag)
        counts = np.zeros(len(cc), dtype=np.int64)
        counts[act_idx] = act_counts
        start = np.zeros(len(cc) + 1, dtype=np.int64)
        np.cumsum(counts, out=start[1:])
        cand = np.empty(int(start[-1]), dtype=np.int64)
        cand_d = np.empty(int(start[-1]))
        _fill_candidates(act_cc, pts, radius, start[act_idx], cand, cand_d)
        self.start = start
        self.cand = cand
        self.cand_d = cand_d

    def _args(self):
        return self.points, self.lo, self.h, self.g, self.start, self.cand, self.cand_d

    def nearest(self, queries):
        """``(distances, indices)``; ties resolve to the lowest index."""
        q = np.ascontiguousarray(np.atleast_2d(queries), dtype=np.float64)
        return _nearest_batch(q, *self._args())

    def rotated_surface(self, rotations, b, use_max: bool = False) -> np.ndarray:
        rots = np.ascontiguousarray(rotations, dtype=np.float64).reshape(-1, 3, 3)
        return _rotated_surface(rots, np.ascontiguousarray(b, dtype=np.float64), *self._args(), bool(use_max))

    def rotated_sums(self, rotations, b, bound: float = np.inf, prune: bool = True) -> np.ndarray:
        """Per-rotation sums of NN distances; pruned entries come back as inf."""
        rots = np.ascontiguousarray(rotations, dtype=np.float64).reshape(-1, 3, 3)
        return _rotated_sums_pruned(rots, np.ascontiguousarray(b, dtype=np.float64), *self._args(),
                                    float(bound), bool(prune))
