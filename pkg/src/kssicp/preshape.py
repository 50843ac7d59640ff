"""Pre-shape normalisation (translation and scale removed) and Procrustes fitting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud
from .errors import DegenerateCloud, SizeMismatch

SCALE_DEFINITIONS = ("frobenius", "as-printed")


@dataclass(frozen=True, eq=False)
class PreShape:
    """Centred, size-normalised copy of a cloud plus what is needed to undo it.

    ``points = (x - centroid) / scale``. For clouds built by
    :func:`to_preshape` the stored points have zero mean and unit
    Frobenius norm.
    """

    points: np.ndarray
    centroid: np.ndarray
    scale: float
    source_name: str = ""

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True)
        pts.setflags(write=False)
        c = np.array(self.centroid, dtype=np.float64, copy=True).reshape(3)
        c.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "centroid", c)
        object.__setattr__(self, "scale", float(self.scale))

    def __len__(self) -> int:
        return self.points.shape[0]


def size_about(points: np.ndarray, centre: np.ndarray, scale_def: str = "frobenius") -> float:
    """Size of a configuration about ``centre``.

    ``frobenius`` is the usual centroid size sqrt(sum |x - c|^2). ``as-printed``
    is sqrt(sum |x - c|), which is homogeneous of degree 1/2 only, so clouds
    normalised with it keep a residual dependence on their scale.
    """
    diff = points - centre
    if scale_def == "frobenius":
        return float(np.sqrt(np.einsum("ij,ij->", diff, diff)))
    if scale_def == "as-printed":
        return float(np.sqrt(np.linalg.norm(diff, axis=1).sum()))
    raise ValueError(f"unknown scale definition {scale_def!r}")


def _points_of(cloud) -> np.ndarray:
    if isinstance(cloud, PointCloud):
        return cloud.points
    return np.asarray(cloud, dtype=np.float64).reshape(-1, 3)


def recenter_preshape(cloud, centre, scale_def: str = "frobenius") -> PreShape:
    """Normalise ``cloud`` about an arbitrary ``centre`` instead of its centroid."""
    pts = _points_of(cloud)
    centre = np.asarray(centre, dtype=np.float64).reshape(3)
    s = size_about(pts, centre, scale_def)
    if not s > 0.0:
        raise DegenerateCloud("all points coincide with the centre; size is zero")
    name = cloud.name if isinstance(cloud, PointCloud) else ""
    return PreShape((pts - centre) / s, centre, s, name)


def centroid(cloud) -> np.ndarray:
    return _points_of(cloud).mean(axis=0)


def to_preshape(cloud, scale_def: str = "frobenius") -> PreShape:
    pts = _points_of(cloud)
    if len(pts) < 2:
        raise DegenerateCloud("a pre-shape needs at least two points")
    return recenter_preshape(cloud, pts.mean(axis=0), scale_def)


def from_preshape(ps: PreShape, points=None) -> PointCloud:
    """Map pre-shape coordinates back to the original frame of ``ps``."""
    pts = ps.points if points is None else np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return PointCloud(pts * ps.scale + ps.centroid, None, ps.source_name)


@dataclass(frozen=True)
class ProcrustesResult:
    distance: float
    rotation: np.ndarray


def kabsch(source: np.ndarray, target: np.ndarray):
    """Proper rotation R minimising sum |R s_i - t_i|^2 for centred inputs.

    Returns ``(R, singular_values)`` where the last singular value carries
    the sign flip used to force det(R) = +1.
    """
    h = target.T @ source
    u, sv, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(u @ vt))
    if d == 0:
        d = 1.0
    fix = np.array([1.0, 1.0, d])
    rot = (u * fix) @ vt
    return rot, sv * fix


def procrustes(a: PreShape, b: PreShape) -> ProcrustesResult:
    """Ordered Procrustes fit between two pre-shapes of equal size.

    ``rotation`` is the proper rotation O minimising |O a - b| over
    index-matched points, so ``b == R a`` yields ``R``. ``distance`` is
    arccos of the sign-corrected trace of singular values, in [0, pi].
    """
    if len(a) != len(b):
        raise SizeMismatch(f"pre-shapes have {len(a)} and {len(b)} points")
    rot, sv = kabsch(a.points, b.points)
    # singular values of a^T b scaled by the pre-shape sizes (1 for unit pre-shapes)
    norm = np.linalg.norm(a.points) * np.linalg.norm(b.points)
    trace = float(sv.sum() / norm) if norm > 0 else 1.0
    return ProcrustesResult(float(np.arccos(np.clip(trace, -1.0, 1.0))), rot)
