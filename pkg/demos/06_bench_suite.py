"""Benchmark harness: a JSONL manifest in, results.csv and per-pair files out.

Each pair starts from a clean cloud, applies shape perturbations (noise
along normals, density dropout, cut-away defects) and then a random
similarity. The recovered map is scored on the clean, index-matched copy.
Rerunning with the same manifest and config reproduces the CSV exactly;
an interrupted run resumes where it stopped.
"""

import json
import sys
import tempfile
from pathlib import Path

from kssicp import Config
from kssicp.bench import run_suite

pairs = [{"pair_id": "clean", "source": "synthetic:blob:8000:1", "perturbations": [{"kind": "similarity"}]}]
for kind, r in [("gaussian_noise", 0.33), ("gaussian_noise", 0.66),
                ("nonzero_mean_noise", 0.5), ("nonzero_mean_noise", 1.0)]:
    pairs.append({"pair_id": f"{kind}_{r}", "source": "synthetic:blob:8000:1",
                  "perturbations": [{"kind": kind, "r": r}, {"kind": "similarity"}]})
pairs.append({"pair_id": "density", "source": "synthetic:blob:8000:1",
              "perturbations": [{"kind": "density", "strength": 0.6}, {"kind": "similarity"}]})

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="kss-suite-"))
manifest = out / "manifest.jsonl"
out.mkdir(parents=True, exist_ok=True)
manifest.write_text("".join(json.dumps(p) + "\n" for p in pairs))

csv_path = run_suite(manifest, out / "results", Config(k=1000), log=print)
print()
print(csv_path.read_text())
