"""Scale- and rotation-invariant point cloud registration.

Clouds are mapped to pre-shapes (centred, unit size), a coarse rotation is
found by exhaustive search over an Euler-angle grid, and ICP refines it.
"""

__version__ = "0.1.0"

from .errors import (BadFraction, DegenerateCloud, DegenerateFrame, DegenerateInput, EmptyCloud,
                     FormatError, KSSError, QuotaExceedsPoints, SizeMismatch, TooFewPoints)
from .cloud import (BoundingBox, PointCloud, SpatialIndex, average_knn_distance, bounding_box,
                    build_index, ensure_normals, estimate_normals)
from .io import load_cloud, save_cloud
from .simplify import SimplifyParams, VoxelGrid, build_voxel_grid, simplify, voxel_scale
from .preshape import PreShape, ProcrustesResult, from_preshape, procrustes, recenter_preshape, to_preshape
from .icp import IcpParams, IcpResult, RigidTransform, icp_align
from .config import Config, load_config
from .align import (AlignmentResult, EnergyParams, RotationGrid, energy, grid_search,
                    local_minima, register)
from .partial import CenterSet, LocalFrame, candidate_centers, local_frame, register_partial
from .bench import (BenchReport, Perturbation, add_noise, delete_defect, evaluate,
                    perturb_density, perturb_similarity, run_suite)
