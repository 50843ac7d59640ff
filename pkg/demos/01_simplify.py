"""Voxel-parallel farthest point simplification.

Reduces a 20k-point surface to 2,000 of its own points and compares the
spacing regularity with a random subset of the same size.
"""

import time

import numpy as np

from kssicp import simplify
from kssicp.simplify import nearest_neighbour_cv
from kssicp.synthetic import blob

cloud = blob(20000, seed=3)
t0 = time.perf_counter()
small = simplify(cloud, 2000)
print(f"simplified {len(cloud)} -> {len(small)} points in {time.perf_counter() - t0:.2f} s")

rng = np.random.default_rng(0)
random_subset = cloud.points[np.sort(rng.choice(len(cloud), 2000, replace=False))]
print(f"nearest-neighbour CV, simplified: {nearest_neighbour_cv(small.points):.3f}")
print(f"nearest-neighbour CV, random:     {nearest_neighbour_cv(random_subset):.3f}")

# the result does not depend on the thread count
assert np.array_equal(simplify(cloud, 2000, workers=4).points, small.points)
