"""Pre-shapes cancel translation and scale; Procrustes recovers the rotation.

For ordered clouds (known correspondences) the whole similarity problem is
closed form. Unordered clouds need the grid search of 03_register.py.
"""

import numpy as np

from kssicp import PointCloud, procrustes, to_preshape
from kssicp.bench import euler_zyx

rng = np.random.default_rng(7)
pts = rng.normal(size=(500, 3)) * [3.0, 1.0, 0.5]
rot = euler_zyx(*np.deg2rad([40.0, -75.0, 130.0]))
moved = 2.5 * pts @ rot.T + [10.0, -4.0, 7.0]

a = to_preshape(PointCloud(pts))
b = to_preshape(PointCloud(moved))
print("pre-shape sizes:", round(float(np.linalg.norm(a.points)), 12), round(float(np.linalg.norm(b.points)), 12))
print("recovered scale ratio:", b.scale / a.scale)

fit = procrustes(a, b)
print("rotation error |O - R|_F:", np.linalg.norm(fit.rotation - rot))
print("shape distance d_K:", fit.distance)

# a genuinely different shape has a positive distance
other = to_preshape(PointCloud(rng.normal(size=(500, 3))))
print("distance to an unrelated cloud:", procrustes(a, other).distance)
