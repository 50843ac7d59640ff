"""Voxel-partitioned farthest point simplification.

The bounding box is cut into cubic cells, each cell receives a share of the
target count proportional to its population, and cells are sampled with
greedy farthest point sampling in eight rounds. Cells of one round never
touch each other, and every cell sees the samples already committed in its
26 neighbours, which keeps the density even across cell faces.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .cloud import PointCloud, bounding_box
from .errors import QuotaExceedsPoints, TooFewPoints

Cell = Tuple[int, int, int]

_NEIGHBOUR_OFFSETS = [o for o in itertools.product((-1, 0, 1), repeat=3) if o != (0, 0, 0)]


@dataclass(frozen=True)
class SimplifyParams:
    target_count: int
    seed_rule: str = "nearest_to_cell_centroid"

    def __post_init__(self):
        if self.target_count < 4:
            raise ValueError("target_count must be at least 4")
        if self.seed_rule != "nearest_to_cell_centroid":
            raise ValueError(f"unknown seed rule {self.seed_rule!r}")


@dataclass(frozen=True)
class VoxelGrid:
    cell_size: float
    origin: np.ndarray
    dims: Tuple[int, int, int]
    cells: Dict[Cell, np.ndarray]  # keys in lexicographic order, values ascending point indices

    def round_of(self, cell: Cell) -> int:
        return round_of_cell(cell)

    def rounds(self) -> List[List[Cell]]:
        out: List[List[Cell]] = [[] for _ in range(8)]
        for cell in self.cells:
            out[round_of_cell(cell)].append(cell)
        return out


def round_of_cell(cell: Cell) -> int:
    """Parity colouring: 26-adjacent cells always land in different rounds."""
    i, j, k = cell
    return (i & 1) | ((j & 1) << 1) | ((k & 1) << 2)


def _cells_per_edge(n_points: int) -> int:
    # floor(cbrt(n) / 2) computed exactly: largest m with 8 m^3 <= n
    m = int(np.floor(np.cbrt(n_points) / 2.0))
    while 8 * (m + 1) ** 3 <= n_points:
        m += 1
    while m > 0 and 8 * m**3 > n_points:
        m -= 1
    return m


def voxel_scale(cloud: PointCloud) -> float:
    """Edge length of a voxel cell: longest bbox edge over floor(cbrt(|P|)/2).

    When the divisor is zero (fewer than 8 points) the longest edge itself
    is returned, i.e. the whole cloud fits in one cell.
    """
    longest = bounding_box(cloud).longest_edge
    m = _cells_per_edge(len(cloud))
    return longest if m == 0 else longest / m


def build_voxel_grid(cloud: PointCloud, cell_size: float | None = None) -> VoxelGrid:
    box = bounding_box(cloud)
    size = voxel_scale(cloud) if cell_size is None else float(cell_size)
    pts = cloud.points
    if size <= 0.0:
        dims = (1, 1, 1)
        ijk = np.zeros((len(pts), 3), dtype=np.int64)
        size = 0.0
    else:
        dims_arr = np.maximum(1, np.ceil(box.extent / size - 1e-9).astype(np.int64))
        ijk = np.floor((pts - box.min) / size).astype(np.int64)
        ijk = np.clip(ijk, 0, dims_arr - 1)
        dims = tuple(int(d) for d in dims_arr)
    order = np.lexsort((np.arange(len(pts)), ijk[:, 2], ijk[:, 1], ijk[:, 0]))
    sorted_ijk = ijk[order]
    breaks = np.nonzero(np.any(np.diff(sorted_ijk, axis=0) != 0, axis=1))[0] + 1
    starts = np.concatenate([[0], breaks])
    ends = np.concatenate([breaks, [len(pts)]])
    cells = {}
    for s, e in zip(starts, ends):
        key = tuple(int(v) for v in sorted_ijk[s])
        members = order[s:e].copy()
        members.setflags(write=False)
        cells[key] = members
    return VoxelGrid(size, box.min, dims, cells)


def per_cell_quota(grid: VoxelGrid, k: int, total: int) -> Dict[Cell, int]:
    """Integer per-cell sample counts proportional to population, summing to ``k``.

    Each cell gets round(pop * k / total); the surplus or deficit is then
    settled one point at a time on the cells whose exact share was rounded
    the most (largest fractional part for additions, smallest for removals,
    ties by cell order). Shares never exceed the population of a cell.
    """
    if k > total:
        raise TooFewPoints(f"cannot choose {k} of {total} points")
    keys = list(grid.cells)
    pops = np.array([len(grid.cells[c]) for c in keys], dtype=np.int64)
    if pops.sum() != total:
        raise ValueError("grid population does not match total")
    num = pops * k
    quota = (2 * num + total) // (2 * total)  # round half up, exact in integers
    quota = np.minimum(quota, pops)
    rem = num % total  # fractional part times total
    order_idx = np.arange(len(keys))
    diff = k - int(quota.sum())
    while diff != 0:
        if diff > 0:
            room = quota < pops
            cand = order_idx[room]
            # largest remainder first; cells already rounded up come last
            rounded_down = (num[cand] - quota[cand] * total) > 0
            key = np.where(rounded_down, rem[cand], -1)
            pick = cand[np.lexsort((cand, -key))][:diff]
            quota[pick] += 1
        else:
            room = quota > 0
            cand = order_idx[room]
            over = (quota[cand] * total - num[cand]) >= 0
            key = np.where(over & (rem[cand] > 0), rem[cand], total + 1)
            pick = cand[np.lexsort((cand, key))][:-diff]
            quota[pick] -= 1
        diff = k - int(quota.sum())
    return {c: int(q) for c, q in zip(keys, quota)}


def fps_in_cell(cell_points, quota: int, boundary_samples=None) -> List[int]:
    """Greedy farthest point sampling inside one cell.

    Every pick maximises its distance to the union of earlier picks and
    ``boundary_samples``. Without boundary samples the first pick is the
    point nearest the centroid of ``cell_points``. Ties go to the lowest
    index.
    """
    pts = np.asarray(cell_points, dtype=np.float64).reshape(-1, 3)
    n = len(pts)
    if quota > n:
        raise QuotaExceedsPoints(f"quota {quota} exceeds {n} points in cell")
    if quota <= 0:
        return []
    if quota == n:
        return list(range(n))
    selected: List[int] = []
    bnd = None if boundary_samples is None else np.asarray(boundary_samples, dtype=np.float64).reshape(-1, 3)
    if bnd is not None and len(bnd):
        diff = pts[:, None, :] - bnd[None, :, :]
        mind = np.einsum("ijk,ijk->ij", diff, diff).min(axis=1)
    else:
        centre = pts.mean(axis=0)
        seed = int(np.argmin(np.einsum("ij,ij->i", pts - centre, pts - centre)))
        selected.append(seed)
        d = pts - pts[seed]
        mind = np.einsum("ij,ij->i", d, d)
    while len(selected) < quota:
        pick = int(np.argmax(mind))
        selected.append(pick)
        d = pts - pts[pick]
        np.minimum(mind, np.einsum("ij,ij->i", d, d), out=mind)
    return selected


def _neighbour_samples(cell: Cell, chosen: Dict[Cell, np.ndarray]) -> List[np.ndarray]:
    i, j, k = cell
    out = []
    for di, dj, dk in _NEIGHBOUR_OFFSETS:
        got = chosen.get((i + di, j + dj, k + dk))
        if got is not None and len(got):
            out.append(got)
    return out


def simplify_indices(cloud: PointCloud, k: int, workers: int = 1) -> np.ndarray:
    """Indices (ascending) of the ``k`` points kept by :func:`simplify`."""
    n = len(cloud)
    if k > n:
        raise TooFewPoints(f"cannot simplify {n} points to {k}")
    if k == n:
        return np.arange(n)
    grid = build_voxel_grid(cloud)
    quota = per_cell_quota(grid, k, n)
    pts = cloud.points
    chosen: Dict[Cell, np.ndarray] = {}

    def run(cell: Cell) -> np.ndarray:
        members = grid.cells[cell]
        q = quota[cell]
        if q == 0:
            return members[:0]
        nb = _neighbour_samples(cell, chosen)
        boundary = pts[np.concatenate(nb)] if nb else None
        local = fps_in_cell(pts[members], q, boundary)
        return members[np.asarray(local, dtype=np.int64)]

    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for round_cells in grid.rounds():
            # samples of this round become visible only after the whole round commits
            if pool is None:
                results = [run(c) for c in round_cells]
            else:
                results = list(pool.map(run, round_cells))
            for cell, sel in zip(round_cells, results):
                chosen[cell] = sel
    finally:
        if pool is not None:
            pool.shutdown()
    picked = np.concatenate(list(chosen.values())) if chosen else np.empty(0, np.int64)
    picked.sort()
    if len(picked) != k:
        raise AssertionError(f"simplification produced {len(picked)} points, expected {k}")
    return picked


def simplify(cloud: PointCloud, params: SimplifyParams | int, workers: int = 1) -> PointCloud:
    """Reduce ``cloud`` to exactly ``params.target_count`` of its own points.

    Point order of the input is preserved and normals follow their points.
    The result does not depend on ``workers``.
    """
    k = params.target_count if isinstance(params, SimplifyParams) else int(params)
    if len(cloud) < k:
        raise TooFewPoints(f"cannot simplify {len(cloud)} points to {k}")
    idx = simplify_indices(cloud, k, workers)
    return cloud.subset(idx)


def nearest_neighbour_cv(points: Sequence) -> float:
    """Coefficient of variation of nearest-neighbour spacing (uniformity score)."""
    from .cloud import SpatialIndex, _self_excluded_knn

    cloud = points if isinstance(points, PointCloud) else PointCloud(points)
    d, _ = _self_excluded_knn(cloud, 1, SpatialIndex(cloud.points))
    d = d[:, 0]
    return float(d.std() / d.mean())
