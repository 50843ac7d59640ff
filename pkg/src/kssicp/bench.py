"""Perturbation generators, error metrics and a resumable batch runner."""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from .cloud import PointCloud, average_knn_distance, bounding_box, ensure_normals
from .config import Config
from .errors import BadFraction, SizeMismatch

PERTURBATION_KINDS = ("similarity", "gaussian_noise", "nonzero_mean_noise", "density", "defect")
CSV_COLUMNS = ["pair_id", "mse", "rmse", "mae", "mse_r", "rmse_r", "mae_r", "e_d_init",
               "e_d_final", "used_additional", "ms_simplify", "ms_grid", "ms_icp", "ms_total"]
TIMING_COLUMNS = CSV_COLUMNS[-4:]


@dataclass(frozen=True)
class Perturbation:
    kind: str
    params: Dict[str, float] = field(default_factory=dict)
    rng_seed: int = 0

    def __post_init__(self):
        if self.kind not in PERTURBATION_KINDS:
            raise ValueError(f"unknown perturbation kind {self.kind!r}")


def euler_zyx(ax: float, ay: float, az: float) -> np.ndarray:
    """Rz(az) @ Ry(ay) @ Rx(ax), angles in radians."""
    cx, sx, cy, sy, cz, sz = np.cos(ax), np.sin(ax), np.cos(ay), np.sin(ay), np.cos(az), np.sin(az)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rz @ ry @ rx


def draw_similarity(seed: int, diagonal: float, scale_lo: float = 0.8, scale_hi: float = 1.2,
                    min_rot_deg: float = 30.0) -> Tuple[np.ndarray, dict]:
    """Random 4x4 similarity and the parameters it was built from."""
    rng = np.random.default_rng(seed)
    scale = rng.uniform(scale_lo, scale_hi)
    angles = rng.uniform(min_rot_deg, 360.0 - min_rot_deg, 3)
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    shift = direction * rng.uniform(0.0, 1.0) * diagonal
    m = np.eye(4)
    m[:3, :3] = scale * euler_zyx(*np.deg2rad(angles))
    m[:3, 3] = shift
    return m, {"scale": float(scale), "angles_deg": angles.tolist(), "translation": shift.tolist()}


def perturb_similarity(cloud: PointCloud, seed: int, scale_lo: float = 0.8, scale_hi: float = 1.2,
                       min_rot_deg: float = 30.0) -> Tuple[PointCloud, np.ndarray]:
    """Apply a random scale, per-axis rotations of at least ``min_rot_deg`` and a shift.

    Returns the moved cloud and the exact 4x4 ground truth that produced it.
    """
    gt, _ = draw_similarity(seed, bounding_box(cloud).diagonal, scale_lo, scale_hi, min_rot_deg)
    return cloud.transformed(gt), gt


def noise_magnitudes(n: int, kind: str, sigma: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    if kind in ("gaussian", "gaussian_noise"):
        return rng.normal(0.0, sigma, n)
    if kind in ("nonzero_mean", "nonzero_mean_noise"):
        return rng.uniform(0.0, sigma, n)
    raise ValueError(f"unknown noise kind {kind!r}")


def add_noise(cloud: PointCloud, kind: str, r: float, k: int = 12, seed: int = 0) -> PointCloud:
    """Move every point along its normal by a random amount scaled by ``r`` times
    the mean distance to the ``k`` nearest neighbours.

    ``gaussian`` draws N(0, sigma^2); ``nonzero_mean`` draws U(0, sigma).
    """
    if r == 0:
        return cloud
    cloud = ensure_normals(cloud, k)
    sigma = r * average_knn_distance(cloud, k)
    m = noise_magnitudes(len(cloud), kind, sigma, seed)
    return PointCloud(cloud.points + m[:, None] * cloud.normals, cloud.normals, cloud.name)


def perturb_density(cloud: PointCloud, seed: int, strength: float = 0.6) -> PointCloud:
    """Random dropout whose probability ramps linearly along a random direction.

    Points at the far end survive with probability ``1 - strength``.
    """
    if not 0.0 <= strength < 1.0:
        raise BadFraction("strength must be in [0, 1)")
    rng = np.random.default_rng(seed)
    u = rng.normal(size=3)
    u /= np.linalg.norm(u)
    t = cloud.points @ u
    span = t.max() - t.min()
    t = (t - t.min()) / span if span > 0 else np.zeros_like(t)
    keep = rng.uniform(size=len(cloud)) >= strength * t
    return cloud.subset(np.nonzero(keep)[0])


def defect_plane(cloud: PointCloud, fraction: float, seed: int) -> Tuple[np.ndarray, float]:
    """Plane ``x . normal = offset`` bounding the region :func:`delete_defect` removes."""
    if not 0.0 < fraction < 0.5:
        raise BadFraction("fraction must be in (0, 0.5)")
    rng = np.random.default_rng(seed)
    pts = cloud.points
    anchor = pts[rng.integers(len(pts))]
    normal = anchor - pts.mean(axis=0)
    if not np.linalg.norm(normal) > 0:
        normal = rng.normal(size=3)
    normal = normal / np.linalg.norm(normal)
    score = pts @ normal
    n_drop = len(pts) - int(round((1.0 - fraction) * len(pts)))
    order = np.lexsort((np.arange(len(pts)), -score))
    offset = float(score[order[n_drop - 1]]) if n_drop else float(score.max())
    return normal, offset


def delete_defect(cloud: PointCloud, fraction: float, seed: int) -> PointCloud:
    """Cut away a contiguous cap holding ``fraction`` of the points.

    The cap faces a randomly chosen surface point; the cut plane is
    perpendicular to the direction from the centroid to that point.
    """
    normal, offset = defect_plane(cloud, fraction, seed)
    score = cloud.points @ normal
    n = len(cloud)
    n_drop = n - int(round((1.0 - fraction) * n))
    order = np.lexsort((np.arange(n), -score))
    keep = np.sort(order[n_drop:])
    return cloud.subset(keep)


@dataclass
class BenchReport:
    mse: float
    rmse: float
    mae: float
    mse_r: float
    rmse_r: float
    mae_r: float
    pair_id: str = ""
    wall_ms_per_stage: Dict[str, float] = field(default_factory=dict)


def evaluate(registered_source: PointCloud, ground_truth_target: PointCloud) -> BenchReport:
    """Index-matched residual metrics: point distances and normal angles (radians)."""
    if len(registered_source) != len(ground_truth_target):
        raise SizeMismatch(f"{len(registered_source)} vs {len(ground_truth_target)} points")
    res = np.linalg.norm(registered_source.points - ground_truth_target.points, axis=1)
    ns = ensure_normals(registered_source).normals
    nt = ensure_normals(ground_truth_target).normals
    # atan2 form: exactly 0 for equal normals and pi for opposite ones
    ang = np.arctan2(np.linalg.norm(np.cross(ns, nt), axis=1), np.einsum("ij,ij->i", ns, nt))
    mse, mse_r = float(np.mean(res ** 2)), float(np.mean(ang ** 2))
    return BenchReport(mse, float(np.sqrt(mse)), float(np.mean(res)),
                       mse_r, float(np.sqrt(mse_r)), float(np.mean(ang)))


def residual_colors(residuals: np.ndarray) -> np.ndarray:
    """Red for the largest residual through blue for the smallest."""
    r = np.asarray(residuals, dtype=np.float64)
    span = r.max() - r.min() if len(r) else 0.0
    t = (r - r.min()) / span if span > 0 else np.zeros_like(r)
    return np.column_stack([255 * t, np.zeros_like(t), 255 * (1 - t)]).round().astype(np.uint8)


def transform_record(result, theta_deg: float, config: Optional[Config] = None) -> dict:
    rec = {
        "similarity": result.similarity.tolist(),
        "o_init_entry": list(result.o_init_entry),
        "o_init_euler_deg": [i * theta_deg for i in result.o_init_entry],
        "o_init": result.o_init.tolist(),
        "o_r": result.rotation.tolist(),
        "e_d_init": result.energy_init,
        "e_d_plain": result.energy_plain,
        "e_d_final": result.energy,
        "used_additional_process": bool(result.used_additional_process),
        "timings_ms": result.timings_ms,
    }
    if result.candidate_center is not None:
        rec["c_init"] = result.candidate_center.tolist()
        rec["center_index"] = result.center_index
        rec["frame_axes"] = result.frame.axes.tolist()
        rec["frame_origin"] = result.frame.origin.tolist()
        rec["r_s"] = result.frame.r_s
    if config is not None:
        rec["config_digest"] = config.digest()
    return rec


# ---- suite ---------------------------------------------------------------

def _seed_for(seed: int, i: int) -> int:
    return int(np.random.SeedSequence([seed, i]).generate_state(1)[0])


def _load_source(spec: str, base: Path) -> PointCloud:
    from .io import load_cloud
    from .synthetic import named

    if spec.startswith("synthetic:"):
        return named(spec[len("synthetic:"):])
    p = Path(spec)
    return load_cloud(p if p.is_absolute() else base / p)


def apply_perturbations(cloud: PointCloud, perturbations: Iterable[dict], seed: int):
    """Apply a manifest perturbation list.

    Shape perturbations (noise, density, defect) act first in the cloud's own
    frame; similarity entries compose into one ground-truth map applied last.
    Returns ``(perturbed, ground_truth)``.
    """
    shaped = cloud
    gt = np.eye(4)
    diag = bounding_box(cloud).diagonal
    for i, p in enumerate(perturbations):
        p = dict(p)
        kind = p.pop("kind")
        s = int(p.pop("seed", _seed_for(seed, i)))
        if kind == "similarity":
            m, _ = draw_similarity(s, diag, p.get("scale_lo", 0.8), p.get("scale_hi", 1.2),
                                   p.get("min_rot_deg", 30.0))
            gt = m @ gt
        elif kind in ("gaussian_noise", "nonzero_mean_noise"):
            shaped = add_noise(shaped, kind, float(p.get("r", 0.0)), int(p.get("k", 12)), s)
        elif kind == "density":
            shaped = perturb_density(shaped, s, float(p.get("strength", 0.6)))
        elif kind == "defect":
            shaped = delete_defect(shaped, float(p.get("fraction", 0.25)), s)
        else:
            raise ValueError(f"unknown perturbation kind {kind!r}")
    return shaped.transformed(gt), gt


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _completed(csv_path: Path) -> set:
    if not csv_path.exists():
        return set()
    with csv_path.open(newline="") as fh:
        return {row["pair_id"] for row in csv.DictReader(fh)}


def run_pair(entry: dict, base: Path, config: Config):
    """Register one manifest pair; returns ``(row, record, registered, target)``."""
    from .align import register
    from .partial import register_partial

    seed = int(entry.get("seed", config.seed))
    clean = ensure_normals(_load_source(entry["source"], base))
    target = ensure_normals(_load_source(entry["target"], base)) if entry.get("target") else clean
    moved, gt = apply_perturbations(clean, entry.get("perturbations", []), seed)
    fn = register_partial if entry.get("partial") else register
    result = fn(moved, target, config)
    # score the estimated map on the noise-free, index-matched copy of the source
    registered = clean.transformed(gt).transformed(result.similarity)
    report = evaluate(registered, target)
    row = {
        "pair_id": entry["pair_id"], "mse": report.mse, "rmse": report.rmse, "mae": report.mae,
        "mse_r": report.mse_r, "rmse_r": report.rmse_r, "mae_r": report.mae_r,
        "e_d_init": result.energy_init, "e_d_final": result.energy,
        "used_additional": bool(result.used_additional_process),
        "ms_simplify": result.timings_ms["simplify"], "ms_grid": result.timings_ms["grid"],
        "ms_icp": result.timings_ms["icp"], "ms_total": result.timings_ms["total"],
    }
    rec = transform_record(result, config.theta_deg, config)
    rec["ground_truth"] = gt.tolist()
    return row, rec, registered, target


def read_manifest(path) -> List[dict]:
    path = Path(path)
    entries = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        entry = json.loads(line)
        entry.setdefault("pair_id", f"pair{lineno:04d}")
        if "source" not in entry:
            raise ValueError(f"{path}:{lineno}: entry has no source")
        entries.append(entry)
    return entries


def run_suite(manifest, out, config: Config = Config(), timings: bool = True,
              log=None) -> Path:
    """Run every manifest pair and write ``results.csv`` plus per-pair artefacts.

    Pairs already listed in the CSV (with their transform file present) are
    skipped, so an interrupted run can simply be restarted. With
    ``timings=False`` the ``ms_*`` columns are left empty, which makes the
    CSV a pure function of the manifest, the inputs and the config.
    """
    from .io import save_cloud

    manifest = Path(manifest)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "results.csv"
    entries = read_manifest(manifest)
    done = {p for p in _completed(csv_path) if (out / f"{p}.transform.json").exists()}
    if not csv_path.exists():
        csv_path.write_text(",".join(CSV_COLUMNS) + "\n")
    for entry in entries:
        pid = entry["pair_id"]
        if pid in done:
            if log:
                log(f"{pid}: already done, skipped")
            continue
        row, rec, registered, target = run_pair(entry, manifest.parent, config)
        residual = np.linalg.norm(registered.points - target.points, axis=1)
        save_cloud(registered, out / f"{pid}.residual.ply", colors=residual_colors(residual))
        tmp = out / f"{pid}.transform.json.tmp"
        tmp.write_text(json.dumps(rec, indent=2, sort_keys=True) + "\n")
        os.replace(tmp, out / f"{pid}.transform.json")
        if not timings:
            for col in TIMING_COLUMNS:
                row[col] = ""
        with csv_path.open("a", newline="") as fh:
            fh.write(",".join(_fmt(row[c]) for c in CSV_COLUMNS) + "\n")
        if log:
            log(f"{pid}: mse={row['mse']:.3e} e_d={row['e_d_final']:.3e}")
    return csv_path
