"""Point-to-point ICP used as the fine stage after the rotation search."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .cloud import SpatialIndex
from .errors import DegenerateInput
from .preshape import PreShape, kabsch


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    def apply(self, points) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation

    def compose(self, inner: "RigidTransform") -> "RigidTransform":
        """``self ∘ inner``: apply ``inner`` first."""
        return RigidTransform(self.rotation @ inner.rotation,
                              self.rotation @ inner.translation + self.translation)

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m


@dataclass(frozen=True)
class IcpParams:
    max_iterations: int = 60
    convergence_eps: float = 1e-7
    reject_distance: Optional[float] = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.convergence_eps > 0:
            raise ValueError("convergence_eps must be > 0")
        if self.reject_distance is not None and not self.reject_distance > 0:
            raise ValueError("reject_distance must be > 0")


@dataclass
class IcpResult:
    transform: RigidTransform
    mse: float
    iterations: int
    history: List[float]

    def __iter__(self):
        # unpacks as (transform, final_mse, iterations)
        return iter((self.transform, self.mse, self.iterations))


def _points(x) -> np.ndarray:
    return x.points if isinstance(x, PreShape) else np.asarray(x, dtype=np.float64).reshape(-1, 3)


def icp_align(source, target, target_index: Optional[SpatialIndex] = None,
              params: IcpParams = IcpParams(), initial: Optional[RigidTransform] = None) -> IcpResult:
    """Refine ``initial`` so that ``transform.apply(source)`` lies on ``target``.

    Each iteration matches every moved source point to its nearest target
    point, then solves the best rigid motion for those pairs. Iteration
    stops when the mean squared match distance falls by no more than
    ``convergence_eps`` relative to the previous iteration, reaches zero, or
    after ``max_iterations``. ``history`` holds the match MSE seen at each
    iteration and never increases when no rejection gate is set.
    """
    src = _points(source)
    tgt = _points(target)
    if len(src) < 3 or len(tgt) < 3:
        raise DegenerateInput("ICP needs at least three points on each side")
    if np.linalg.matrix_rank(src - src.mean(axis=0)) < 2:
        raise DegenerateInput("source points are collinear")
    index = target_index if target_index is not None else SpatialIndex(tgt)
    current = initial or RigidTransform()
    history: List[float] = []
    iterations = 0
    for iterations in range(1, params.max_iterations + 1):
        moved = current.apply(src)
        dist, idx = index.nearest(moved)
        mse = float(np.mean(dist * dist))
        if history:
            prev = history[-1]
            if prev - mse <= params.convergence_eps * prev:
                history.append(mse)
                break
        history.append(mse)
        if mse == 0.0:
            break
        keep = slice(None)
        if params.reject_distance is not None:
            keep = dist <= params.reject_distance
            if np.count_nonzero(keep) < 3:
                break
        p = moved[keep]
        q = index.points[idx[keep]]
        pc, qc = p.mean(axis=0), q.mean(axis=0)
        rot, _ = kabsch(p - pc, q - qc)
        step = RigidTransform(rot, qc - rot @ pc)
        current = step.compose(current)
    moved = current.apply(src)
    dist, _ = index.nearest(moved)
    final = float(np.mean(dist * dist))
    return IcpResult(current, final, iterations, history)
