"""Registration of a partial scan onto a complete shape.

A partial cloud's centroid is biased toward the part that survived, so the
pre-shape is rebuilt about each of 125 candidate centres laid out on a
5x5x5 lattice in a frame derived from the cloud itself. Centre and rotation
are chosen jointly by directed mean energy (partial into complete).
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from ._nngrid import NearestGrid
from .align import (AlignmentResult, EnergyParams, RotationGrid, _chunks, parallel_map,
                    prepare_pair, refine_with_retry, GridSearchResult, similarity_matrix)
from .cloud import PointCloud
from .config import Config
from .errors import DegenerateFrame
from .preshape import PreShape, recenter_preshape, to_preshape

COLLINEAR_TOL_DEG = 5.0
CENTRE_STEPS = (-2, -1, 0, 1, 2)
CENTRE_OF_FRAME = 62  # all-zero offsets


@dataclass(frozen=True)
class LocalFrame:
    origin: np.ndarray
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    r_s: float
    p_y: np.ndarray
    p_x: np.ndarray

    @property
    def axes(self) -> np.ndarray:
        """Rows X, Y, Z."""
        return np.stack([self.x, self.y, self.z])


@dataclass(frozen=True)
class CenterSet:
    frame: LocalFrame
    centers: np.ndarray  # (125, 3); index (a*5 + b)*5 + c for steps along X, Y, Z
    offsets: np.ndarray  # (125, 3) lattice steps in {-2..2}

    def __len__(self) -> int:
        return len(self.centers)

    def __getitem__(self, i) -> np.ndarray:
        return self.centers[i]


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def local_frame(cloud, collinear_tol_deg: float = COLLINEAR_TOL_DEG) -> LocalFrame:
    """Frame anchored at the centroid with Y toward the farthest point.

    ``p_x`` is the point closest to the centroid among those whose direction
    leaves the Y line by more than ``collinear_tol_deg``.
    """
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    c = pts.mean(axis=0)
    rel = pts - c
    dist = np.linalg.norm(rel, axis=1)
    iy = int(np.argmax(dist))
    if not dist[iy] > 0:
        raise DegenerateFrame("all points coincide")
    y = rel[iy] / dist[iy]
    with np.errstate(invalid="ignore", divide="ignore"):
        cos_to_line = np.abs(rel @ y) / dist
    ok = (dist > 0) & (cos_to_line < np.cos(np.deg2rad(collinear_tol_deg)))
    if not ok.any():
        raise DegenerateFrame("every point lies within the collinearity tolerance of the Y line")
    cand = np.nonzero(ok)[0]
    ix = int(cand[np.argmin(dist[cand])])
    z = _unit(np.cross(rel[ix], rel[iy]))
    x = np.cross(y, z)
    return LocalFrame(c, x, y, z, float(dist[iy] / 4.0), pts[iy].copy(), pts[ix].copy())


def candidate_centers(frame: LocalFrame) -> CenterSet:
    steps = np.array(CENTRE_STEPS, dtype=np.float64)
    offsets = np.array([(a, b, c) for a in steps for b in steps for c in steps])
    half = frame.r_s / 2.0
    centers = frame.origin + (offsets * half) @ frame.axes
    centers[CENTRE_OF_FRAME] = frame.origin
    return CenterSet(frame, centers, offsets.astype(int))


@dataclass
class JointSearch:
    center_index: int
    entry: Tuple[int, int, int]
    energy: float  # directed mean at the optimum
    evaluated: int  # (centre, rotation) pairs scored to completion


def joint_search(a: PreShape, sources: List[PreShape], grid: RotationGrid,
                 workers: int = 1, prune: bool = True, first: int = CENTRE_OF_FRAME) -> JointSearch:
    """Joint argmin over (centre, rotation) of the summed NN distance of R b_c into ``a``.

    Ties go to the lowest centre index, then the lowest grid entry. With
    ``prune`` a pair is abandoned as soon as its running sum exceeds the
    best completed one; the optimum is never abandoned, so the answer is
    the same as without pruning.
    """
    rng = np.random.default_rng(0)
    n = len(sources[0])
    perm = rng.permutation(n)
    pts = [np.ascontiguousarray(s.points[perm]) for s in sources]
    reach = max(float(np.linalg.norm(p, axis=1).max()) for p in pts)
    nn = NearestGrid(a.points, reach, ball_radius=reach)
    mats = grid.matrices

    def scan(ci: int, bound: float) -> np.ndarray:
        return nn.rotated_sums(mats, pts[ci], bound, prune)

    sums = np.full((len(sources), len(mats)), np.inf)
    sums[first] = scan(first, np.inf)
    rest = [i for i in range(len(sources)) if i != first]
    seed_bound = float(sums[first].min())

    def run_chunk(sl: slice):
        bound = seed_bound
        out = []
        for ci in rest[sl]:
            row = scan(ci, bound)
            bound = min(bound, float(row.min()))
            out.append((ci, row))
        return out

    for chunk in parallel_map(run_chunk, _chunks(len(rest), workers), workers):
        for ci, row in chunk:
            sums[ci] = row
    flat = int(np.argmin(sums.reshape(-1)))  # first occurrence: lowest (centre, entry)
    ci, ei = divmod(flat, len(mats))
    return JointSearch(ci, grid.entry_of(ei), float(sums[ci, ei] / n), int(np.isfinite(sums).sum()))


def register_partial(source_partial: PointCloud, target_complete: PointCloud,
                     config: Config = Config(), exhaustive: bool = False) -> AlignmentResult:
    """Register a partial scan onto a complete cloud.

    The returned similarity uses the chosen candidate centre in place of
    the partial cloud's centroid. ``exhaustive`` disables early abandoning
    (same answer, slower).
    """
    t0 = time.perf_counter()
    workers = config.workers
    s_simple, t_simple = prepare_pair(source_partial, target_complete, config.k, workers)
    a = to_preshape(t_simple, config.scale_def)
    frame = local_frame(s_simple)
    centres = candidate_centers(frame)
    sources = [recenter_preshape(s_simple, c, config.scale_def) for c in centres.centers]
    t1 = time.perf_counter()
    grid = RotationGrid(np.deg2rad(config.theta_deg))
    found = joint_search(a, sources, grid, workers, prune=not exhaustive)
    b = sources[found.center_index]
    eparams = EnergyParams("directed_mean", config.threshold, config.kernel)
    reach = float(np.linalg.norm(b.points, axis=1).max())
    nn = NearestGrid(a.points, reach, ball_radius=reach)
    surface = nn.rotated_surface(grid.matrices, b.points).reshape((grid.size,) * 3)
    search = GridSearchResult(found.entry, grid.rotation_of(found.entry), found.energy, surface)
    t2 = time.perf_counter()
    res, e_final, e_plain, used, n_min = refine_with_retry(a, b, grid, search, eparams,
                                                           config.icp_params(), workers)
    t3 = time.perf_counter()
    return AlignmentResult(
        o_init=search.rotation, o_init_entry=search.entry,
        rotation=res.transform.rotation, translation=res.transform.translation,
        energy=e_final, energy_init=found.energy, energy_plain=e_plain,
        similarity=similarity_matrix(b, a, res.transform), used_additional_process=used,
        n_local_minima=n_min, candidate_center=b.centroid.copy(), center_index=found.center_index,
        frame=frame,
        timings_ms={"simplify": 1e3 * (t1 - t0), "grid": 1e3 * (t2 - t1),
                    "icp": 1e3 * (t3 - t2), "total": 1e3 * (t3 - t0)},
        icp_iterations=res.iterations,
    )
