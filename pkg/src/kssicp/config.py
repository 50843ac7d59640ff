"""Run configuration shared by the library entry points and the ``kss`` tool.

Config files are flat ``key = value`` text; ``#`` starts a comment.
"""

from __future__ import annotations

import dataclasses
import hashlib
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from .icp import IcpParams

HELP = {
    "theta_deg": "rotation grid step in degrees (360/theta_deg samples per axis)",
    "k": "points kept per cloud after simplification",
    "energy": "energy variant: directed_mean | directed_max | symmetric_max (aliases mean, max, symmetric)",
    "threshold": "post-ICP energy above which local minima are also refined",
    "kernel": "edge of the cubic neighbourhood used to find local minima (odd)",
    "icp_max_iterations": "ICP iteration cap",
    "icp_eps": "ICP stops when the match MSE falls by less than this fraction",
    "icp_reject": "drop ICP matches farther than this (pre-shape units); 0 disables",
    "threads": "worker threads; 0 uses every available core",
    "scale_def": "pre-shape size: frobenius | as-printed",
    "seed": "seed for randomised steps (perturbations, suites)",
}


@dataclass(frozen=True)
class Config:
    theta_deg: float = 30.0
    k: int = 2000
    energy: str = "directed_mean"
    threshold: float = 0.001
    kernel: int = 5
    icp_max_iterations: int = 60
    icp_eps: float = 1e-7
    icp_reject: float = 0.0
    threads: int = 0
    scale_def: str = "frobenius"
    seed: int = 0

    def __post_init__(self):
        # validates energy/threshold/kernel eagerly
        self.energy_params()
        self.icp_params()
        if not 0 < self.theta_deg <= 360:
            raise ValueError("theta_deg must be in (0, 360]")
        if self.k < 4:
            raise ValueError("k must be at least 4")
        if self.threads < 0:
            raise ValueError("threads must be >= 0")
        if self.scale_def not in ("frobenius", "as-printed"):
            raise ValueError(f"unknown scale_def {self.scale_def!r}")

    @property
    def workers(self) -> int:
        if self.threads:
            return self.threads
        try:
            return max(1, len(os.sched_getaffinity(0)))
        except AttributeError:
            return os.cpu_count() or 1

    def energy_params(self):
        from .align import EnergyParams

        return EnergyParams(self.energy, self.threshold, self.kernel)

    def icp_params(self) -> IcpParams:
        return IcpParams(self.icp_max_iterations, self.icp_eps, self.icp_reject or None)

    def replace(self, **changes) -> "Config":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:12]


def _coerce(name: str, raw: Any) -> Any:
    kind = {f.name: f.type for f in fields(Config)}[name]
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    if kind in ("int", int):
        return int(raw)
    if kind in ("float", float):
        return float(raw)
    return raw


def parse_config_text(text: str, origin: str = "<config>") -> Dict[str, Any]:
    known = {f.name for f in fields(Config)}
    out: Dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{origin}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in known:
            raise ValueError(f"{origin}:{lineno}: unknown key {key!r}")
        out[key] = _coerce(key, value)
    return out


def load_config(path: Optional[os.PathLike] = None,
                overrides: Optional[Mapping[str, Any]] = None) -> Config:
    """Defaults, then the file (if any), then ``overrides`` whose value is not None."""
    values: Dict[str, Any] = {}
    if path is not None:
        p = Path(path)
        values.update(parse_config_text(p.read_text(), str(p)))
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = _coerce(key, value)
    return Config(**values)
