"""Retry from every local minimum of the energy surface.

A cube with a low raised patch on one face is nearly symmetric: several
grid rotations score almost the same and ICP from the best one can settle
on the wrong face. When the refined energy stays above the threshold, ICP
is restarted from every local minimum of the rotation-grid surface and the
lowest result is kept.
"""

from kssicp import Config, register
from kssicp.bench import perturb_similarity
from kssicp.synthetic import cube_surface

target = cube_surface(30, bump=0.4)
source, _ = perturb_similarity(target, seed=0)

result = register(source, target, Config())
print(f"E_d after ICP from the grid optimum: {result.energy_plain:.3e}")
print(f"E_d after the retry:                 {result.energy:.3e}")
print("retry used:", result.used_additional_process, " local minima:", result.n_local_minima)

# disabling the retry: a threshold above any attainable energy
plain = register(source, target, Config(threshold=1.0))
print("with the retry disabled:", f"{plain.energy:.3e}", plain.used_additional_process)
