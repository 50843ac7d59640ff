"""Global alignment: exhaustive Euler-grid rotation search in pre-shape space,
ICP refinement, and a retry from every local minimum of the energy surface
when the refined energy stays above a threshold.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage

from ._nngrid import NearestGrid
from .cloud import PointCloud, SpatialIndex
from .config import Config
from .errors import DegenerateCloud
from .icp import IcpParams, IcpResult, RigidTransform, icp_align
from .preshape import PreShape, to_preshape
from .simplify import simplify

log = logging.getLogger(__name__)

Entry = Tuple[int, int, int]
ENERGY_VARIANTS = ("directed_mean", "directed_max", "symmetric_max")
_VARIANT_ALIASES = {"mean": "directed_mean", "max": "directed_max", "symmetric": "symmetric_max"}


def _unit_circle(n: int, step: float) -> Tuple[np.ndarray, np.ndarray]:
    """cos/sin of i*step, i < n, with exact symmetry when the steps tile the circle.

    Equivalent Euler triples then produce bitwise identical matrices, so
    their energies tie exactly and the lexicographic tie rule decides.
    """
    idx = np.arange(n)
    c, s = np.cos(idx * step), np.sin(idx * step)
    if n % 4 or not np.isclose(n * step, 2 * np.pi, rtol=0, atol=1e-12):
        return c, s
    q = n // 4
    base_c, base_s = np.empty(q), np.empty(q)
    for r in range(q):
        if 2 * r <= q:
            base_c[r], base_s[r] = np.cos(r * step), np.sin(r * step)
        else:
            base_c[r], base_s[r] = np.sin((q - r) * step), np.cos((q - r) * step)
    base_c[0], base_s[0] = 1.0, 0.0
    for i in range(n):
        k, r = divmod(i, q)
        cc, ss = base_c[r], base_s[r]
        for _ in range(k):
            cc, ss = -ss, cc
        c[i], s[i] = cc, ss
    return c, s


@dataclass(frozen=True)
class RotationGrid:
    """Euler-angle lattice ``Rz(iz*step) @ Ry(iy*step) @ Rx(ix*step)``."""

    step: float = np.pi / 6

    def __post_init__(self):
        if not 0 < self.step <= 2 * np.pi:
            raise ValueError("step must be in (0, 2*pi]")

    @property
    def size(self) -> int:
        """Samples per axis."""
        return int(np.ceil(2 * np.pi / self.step - 1e-9))

    @property
    def entries(self) -> List[Entry]:
        n = self.size
        return [(i, j, k) for i in range(n) for j in range(n) for k in range(n)]

    def __len__(self) -> int:
        return self.size ** 3

    @cached_property
    def _trig(self):
        return _unit_circle(self.size, self.step)

    def rotation_of(self, entry: Entry) -> np.ndarray:
        c, s = self._trig
        ix, iy, iz = entry
        rx = np.array([[1.0, 0.0, 0.0], [0.0, c[ix], -s[ix]], [0.0, s[ix], c[ix]]])
        ry = np.array([[c[iy], 0.0, s[iy]], [0.0, 1.0, 0.0], [-s[iy], 0.0, c[iy]]])
        rz = np.array([[c[iz], -s[iz], 0.0], [s[iz], c[iz], 0.0], [0.0, 0.0, 1.0]])
        return rz @ ry @ rx

    @cached_property
    def matrices(self) -> np.ndarray:
        """All rotations, shape (size**3, 3, 3), in lexicographic entry order."""
        mats = np.stack([self.rotation_of(e) for e in self.entries])
        mats.setflags(write=False)
        return mats

    def entry_of(self, flat_index: int) -> Entry:
        n = self.size
        return tuple(int(v) for v in np.unravel_index(flat_index, (n, n, n)))


@dataclass(frozen=True)
class EnergyParams:
    variant: str = "directed_mean"
    threshold: float = 1e-3
    kernel: int = 5

    def __post_init__(self):
        object.__setattr__(self, "variant", _VARIANT_ALIASES.get(self.variant, self.variant))
        if self.variant not in ENERGY_VARIANTS:
            raise ValueError(f"unknown energy variant {self.variant!r}")
        if not self.threshold > 0:
            raise ValueError("threshold must be > 0")
        if self.kernel < 3 or self.kernel % 2 == 0:
            raise ValueError("kernel must be odd and >= 3")


def _pts(x) -> np.ndarray:
    if isinstance(x, (PreShape, PointCloud)):
        return x.points
    return np.asarray(x, dtype=np.float64).reshape(-1, 3)


def energy(a, b_rotated, index_a: Optional[SpatialIndex] = None,
           params: EnergyParams = EnergyParams()) -> float:
    """Hausdorff-type energy between ``a`` and an already rotated ``b``.

    ``directed_mean`` and ``directed_max`` measure b -> a nearest distances;
    ``symmetric_max`` is the classical two-sided Hausdorff distance.
    """
    pa, pb = _pts(a), _pts(b_rotated)
    index_a = index_a or SpatialIndex(pa)
    d_ba, _ = index_a.nearest(pb)
    if params.variant == "directed_mean":
        return float(np.mean(d_ba))
    if params.variant == "directed_max":
        return float(np.max(d_ba))
    d_ab, _ = SpatialIndex(pb).nearest(pa)
    return float(max(d_ba.max(), d_ab.max()))


def _chunks(total: int, workers: int) -> List[slice]:
    workers = max(1, min(workers, total))
    bounds = np.linspace(0, total, workers + 1).round().astype(int)
    return [slice(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def parallel_map(fn: Callable, items: Sequence, workers: int) -> list:
    """``[fn(x) for x in items]`` on a thread pool, results in input order."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def evaluate_surface(grid_a: NearestGrid, b: np.ndarray, rotations: np.ndarray,
                     use_max: bool, workers: int = 1) -> np.ndarray:
    """Directed energy of every rotation of ``b`` against the points behind ``grid_a``.

    Rotations are split into contiguous blocks, one per worker; each block
    is an independent nogil kernel call and results are concatenated in
    order, so the output is identical for any worker count.
    """
    parts = parallel_map(lambda sl: grid_a.rotated_surface(rotations[sl], b, use_max),
                         _chunks(len(rotations), workers), workers)
    return np.concatenate(parts)


def _grid_for(target_points: np.ndarray, query_points: np.ndarray) -> NearestGrid:
    reach = float(np.linalg.norm(query_points, axis=1).max())
    reach = reach if reach > 0 else 1.0
    return NearestGrid(target_points, reach, ball_radius=reach)


@dataclass
class GridSearchResult:
    entry: Entry
    rotation: np.ndarray
    energy: float
    surface: np.ndarray  # shape (n, n, n), indexed by entry

    def __iter__(self):
        return iter((self.rotation, self.surface))


def energy_surface(a, b, grid: RotationGrid, params: EnergyParams = EnergyParams(),
                   workers: int = 1) -> np.ndarray:
    pa = np.ascontiguousarray(_pts(a))
    pb = np.ascontiguousarray(_pts(b))
    mats = grid.matrices
    n = grid.size
    if params.variant == "symmetric_max":
        fwd = evaluate_surface(_grid_for(pa, pb), pb, mats, True, workers)
        # a -> R b distances equal R^T a -> b distances
        back = evaluate_surface(_grid_for(pb, pa), pa, np.ascontiguousarray(mats.transpose(0, 2, 1)),
                                True, workers)
        flat = np.maximum(fwd, back)
    else:
        flat = evaluate_surface(_grid_for(pa, pb), pb, mats, params.variant == "directed_max", workers)
    return flat.reshape(n, n, n)


def grid_search(a, b, grid: RotationGrid = RotationGrid(), params: EnergyParams = EnergyParams(),
                workers: int = 1) -> GridSearchResult:
    """Evaluate the energy of every grid rotation applied to ``b``; keep the smallest.

    Ties resolve to the lexicographically first entry. The full surface is
    returned for the local-minimum retry.
    """
    surface = energy_surface(a, b, grid, params, workers)
    flat = int(np.argmin(surface.reshape(-1)))
    entry = grid.entry_of(flat)
    return GridSearchResult(entry, grid.rotation_of(entry), float(surface.reshape(-1)[flat]), surface)


def local_minima(surface: np.ndarray, kernel: int = 5) -> List[Entry]:
    """Entries minimal within their periodic ``kernel``^3 neighbourhood.

    Values are compared as (energy, lexicographic position), so a flat
    plateau contributes only its first entry.
    """
    surface = np.asarray(surface)
    if kernel < 1 or kernel % 2 == 0:
        raise ValueError("kernel must be odd")
    flat = surface.reshape(-1)
    order = np.lexsort((np.arange(flat.size), flat))
    rank = np.empty(flat.size, dtype=np.int64)
    rank[order] = np.arange(flat.size)
    rank = rank.reshape(surface.shape)
    low = ndimage.minimum_filter(rank, size=kernel, mode="wrap")
    hits = np.argwhere(rank == low)
    return [tuple(int(v) for v in h) for h in hits]


@dataclass
class AlignmentResult:
    """Outcome of a registration.

    ``similarity`` maps points of the original source cloud onto the
    original target cloud. ``rotation`` is the final pre-shape rotation
    (ICP motion composed with the grid start ``o_init``); ``translation``
    is the residual ICP shift in pre-shape units.
    """

    o_init: np.ndarray
    o_init_entry: Entry
    rotation: np.ndarray
    translation: np.ndarray
    energy: float
    energy_init: float
    energy_plain: float
    similarity: np.ndarray
    used_additional_process: bool
    n_local_minima: int = 0
    candidate_center: Optional[np.ndarray] = None
    center_index: Optional[int] = None
    frame: Optional[object] = None
    timings_ms: Dict[str, float] = field(default_factory=dict)
    icp_iterations: int = 0

    @property
    def o_r(self) -> np.ndarray:
        return self.rotation

    @property
    def scale(self) -> float:
        return float(np.cbrt(np.linalg.det(self.similarity[:3, :3])))

    def apply(self, cloud: PointCloud) -> PointCloud:
        return cloud.transformed(self.similarity)


def similarity_matrix(src: PreShape, tgt: PreShape, rigid: RigidTransform) -> np.ndarray:
    """4x4 map x -> c_t + s_t * (R (x - c_s) / s_s + t)."""
    ratio = tgt.scale / src.scale
    lin = ratio * rigid.rotation
    m = np.eye(4)
    m[:3, :3] = lin
    m[:3, 3] = tgt.centroid + tgt.scale * rigid.translation - lin @ src.centroid
    return m


def _reduce(cloud: PointCloud, k: int, workers: int) -> PointCloud:
    if len(cloud) < 4:
        raise DegenerateCloud("registration needs at least four points per cloud")
    if len(cloud) <= k:
        if len(cloud) < k:
            log.warning("%s has %d points (< k=%d); simplification skipped",
                        cloud.name or "cloud", len(cloud), k)
        return cloud
    return simplify(cloud, k, workers)


def prepare_pair(source: PointCloud, target: PointCloud, k: int, workers: int = 1):
    """Simplify both clouds to ``k`` points; clouds already at or below ``k`` pass through."""
    return _reduce(source, k, workers), _reduce(target, k, workers)


def refine(b: PreShape, a: PreShape, index_a: SpatialIndex, start_rotation: np.ndarray,
           icp: IcpParams, eparams: EnergyParams) -> Tuple[IcpResult, float]:
    res = icp_align(b, a, index_a, icp, RigidTransform(start_rotation))
    e = energy(a, res.transform.apply(b.points), index_a, eparams)
    return res, e


def refine_with_retry(a: PreShape, b: PreShape, grid: RotationGrid, search: GridSearchResult,
                      eparams: EnergyParams, icp: IcpParams, workers: int = 1):
    """ICP from the grid optimum, then from every local minimum if still above threshold.

    Returns ``(icp_result, energy, energy_plain, used_retry, n_minima)``.
    """
    index_a = SpatialIndex(a.points)
    best, e_plain = refine(b, a, index_a, search.rotation, icp, eparams)
    best_e = e_plain
    if e_plain <= eparams.threshold:
        return best, best_e, e_plain, False, 0
    minima = local_minima(search.surface, eparams.kernel)
    starts, seen = [], set()
    for entry in minima:
        rot = grid.rotation_of(entry)
        key = rot.tobytes()
        if key in seen:
            continue
        seen.add(key)
        starts.append(rot)
    outcomes = parallel_map(lambda r: refine(b, a, index_a, r, icp, eparams), starts, workers)
    for res, e in outcomes:
        if e < best_e:
            best, best_e = res, e
    return best, best_e, e_plain, True, len(minima)


def register(source: PointCloud, target: PointCloud, config: Config = Config()) -> AlignmentResult:
    """Register ``source`` onto ``target`` (both complete shapes).

    Steps: simplify both to ``config.k`` points, normalise to pre-shapes,
    exhaustive grid search over rotations, ICP from the best grid rotation,
    and the local-minimum retry when the refined energy exceeds
    ``config.threshold``.
    """
    t0 = time.perf_counter()
    workers = config.workers
    s_simple, t_simple = prepare_pair(source, target, config.k, workers)
    b = to_preshape(s_simple, config.scale_def)
    a = to_preshape(t_simple, config.scale_def)
    t1 = time.perf_counter()
    grid = RotationGrid(np.deg2rad(config.theta_deg))
    eparams = config.energy_params()
    search = grid_search(a, b, grid, eparams, workers)
    t2 = time.perf_counter()
    res, e_final, e_plain, used, n_min = refine_with_retry(a, b, grid, search, eparams,
                                                           config.icp_params(), workers)
    t3 = time.perf_counter()
    sim = similarity_matrix(b, a, res.transform)
    return AlignmentResult(
        o_init=search.rotation, o_init_entry=search.entry,
        rotation=res.transform.rotation, translation=res.transform.translation,
        energy=e_final, energy_init=search.energy, energy_plain=e_plain,
        similarity=sim, used_additional_process=used, n_local_minima=n_min,
        timings_ms={"simplify": 1e3 * (t1 - t0), "grid": 1e3 * (t2 - t1),
                    "icp": 1e3 * (t3 - t2), "total": 1e3 * (t3 - t0)},
        icp_iterations=res.iterations,
    )
