"""Synthetic point clouds for demos, benchmarks and tests."""

from __future__ import annotations

import numpy as np

from .cloud import PointCloud, estimate_normals
from .errors import BadFraction


def fibonacci_directions(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    phi = np.arccos(1.0 - 2.0 * i / n)
    theta = np.pi * (1.0 + 5.0 ** 0.5) * i
    return np.column_stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)])


def fibonacci_sphere(n: int = 2000, radius: float = 1.0) -> PointCloud:
    u = fibonacci_directions(n)
    return PointCloud(radius * u, u, "sphere")


def blob(n: int = 20000, seed: int = 0, n_bumps: int = 10) -> PointCloud:
    """Star-shaped, lumpy, anisotropic surface with no rotational symmetry."""
    rng = np.random.default_rng(seed)
    u = rng.normal(size=(n, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    axes = rng.uniform(0.6, 1.4, 3)
    bumps = rng.normal(size=(n_bumps, 3))
    bumps /= np.linalg.norm(bumps, axis=1, keepdims=True)
    height = rng.uniform(0.2, 0.5, n_bumps)
    width = rng.uniform(0.2, 0.45, n_bumps)
    d2 = ((u[:, None, :] - bumps[None, :, :]) ** 2).sum(axis=2)
    r = 1.0 + (height * np.exp(-d2 / width ** 2)).sum(axis=1)
    pts = (r[:, None] * u) * axes
    return estimate_normals(PointCloud(pts, None, f"blob{seed}"))


def cube_surface(per_edge: int = 24, bump: float = 0.0, bump_half=(0.5, 0.5),
                 bump_centre=(0.3, -0.2)) -> PointCloud:
    """Regular samples on the surface of [-1, 1]^3.

    ``bump`` > 0 lifts a rectangular patch of the +z face (half sizes
    ``bump_half`` around ``bump_centre``) by that height, leaving the cube
    almost, but not exactly, symmetric.
    """
    t = (np.arange(per_edge) + 0.5) / per_edge * 2.0 - 1.0
    a, b = np.meshgrid(t, t, indexing="ij")
    a, b = a.ravel(), b.ravel()
    one = np.ones_like(a)
    pts, nrm = [], []
    for axis in range(3):
        for sign in (-1.0, 1.0):
            face = np.empty((len(a), 3))
            o1, o2 = [k for k in range(3) if k != axis]
            face[:, axis] = sign * one
            face[:, o1] = a
            face[:, o2] = b
            normal = np.zeros((len(a), 3))
            normal[:, axis] = sign
            if bump > 0 and axis == 2 and sign > 0:
                patch = ((np.abs(face[:, 0] - bump_centre[0]) < bump_half[0])
                         & (np.abs(face[:, 1] - bump_centre[1]) < bump_half[1]))
                face[patch, 2] += bump
            pts.append(face)
            nrm.append(normal)
    return PointCloud(np.concatenate(pts), np.concatenate(nrm), "cube")


def lattice(nx: int, ny: int, nz: int, spacing: float = 1.0) -> PointCloud:
    g = np.stack(np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij"), axis=-1)
    return PointCloud(g.reshape(-1, 3).astype(np.float64) * spacing, None, "lattice")


def slab_delete(cloud: PointCloud, fraction: float, axis: int = 2) -> PointCloud:
    """Drop the ``fraction`` of points with the largest coordinate along ``axis``."""
    if not 0.0 <= fraction < 1.0:
        raise BadFraction("fraction must be in [0, 1)")
    n = len(cloud)
    drop = int(round(fraction * n))
    order = np.lexsort((np.arange(n), cloud.points[:, axis]))
    keep = np.sort(order[: n - drop])
    return cloud.subset(keep)


def named(spec: str) -> PointCloud:
    """Build a fixture from ``name[:size[:seed]]`` (``blob:3000:7``, ``sphere:2000``, ``cube:24``)."""
    parts = spec.split(":")
    name = parts[0]
    size = int(parts[1]) if len(parts) > 1 else None
    seed = int(parts[2]) if len(parts) > 2 else 0
    if name == "blob":
        return blob(size or 20000, seed)
    if name == "sphere":
        return fibonacci_sphere(size or 2000)
    if name == "cube":
        return cube_surface(size or 24, bump=0.4 if seed else 0.0)
    raise ValueError(f"unknown synthetic shape {name!r}")
