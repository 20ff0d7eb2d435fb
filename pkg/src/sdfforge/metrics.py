"""Point-cloud and mesh evaluation metrics.

Chamfer and earth mover's distances over sampled point sets, plus mesh
accuracy, completion, and normal cosine similarity computed against full
faces (exact point-to-triangle distances through a BVH, never just
vertices).
"""

from __future__ import annotations

import logging

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree

from .errors import EmptyInputError
from .geometry import TriangleBvh, TriangleMesh

log = logging.getLogger(__name__)

EMD_MAX_POINTS = 2000


def _as_points(s) -> np.ndarray:
    arr = np.asarray(s, dtype=np.float64).reshape(-1, 3)
    if len(arr) == 0:
        raise EmptyInputError("metric input point set is empty")
    return arr


def _as_mesh(mesh) -> TriangleMesh:
    if isinstance(mesh, TriangleMesh):
        return mesh
    return TriangleMesh(mesh.vertices, mesh.triangles)


def chamfer(s1, s2) -> float:
    """Symmetric sum of squared nearest-neighbor distances, per point.

    Both sets must have the same size n; the two directional sums are each
    normalized by n.
    """
    p1 = _as_points(s1)
    p2 = _as_points(s2)
    if len(p1) != len(p2):
        raise ValueError(f"point sets must match in size: {len(p1)} vs {len(p2)}")
    d12, _ = cKDTree(p2).query(p1)
    d21, _ = cKDTree(p1).query(p2)
    n = len(p1)
    return float(np.sum(d12**2) / n + np.sum(d21**2) / n)


def emd(s1, s2) -> float:
    """Exact earth mover's distance: optimal one-to-one matching cost, per point.

    Solved as an assignment problem over the Euclidean cost matrix; capped at
    2,000 points per set to keep the exact solver tractable.
    """
    p1 = _as_points(s1)
    p2 = _as_points(s2)
    if len(p1) != len(p2):
        raise ValueError(f"point sets must match in size: {len(p1)} vs {len(p2)}")
    if len(p1) > EMD_MAX_POINTS:
        raise ValueError(f"exact assignment capped at {EMD_MAX_POINTS} points")
    cost = np.linalg.norm(p1[:, None, :] - p2[None, :, :], axis=-1)
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum() / len(p1))


def point_mesh_distances(points, mesh) -> np.ndarray:
    """Exact distance from each point to the closest point on any face."""
    bvh = TriangleBvh(_as_mesh(mesh))
    d, _, _ = bvh.query(_as_points(points))
    return d


def mesh_accuracy(generated_points, gt_mesh, percentile: float = 90.0) -> float:
    """Minimum distance d such that the given percentile of generated points
    lies within d of the ground-truth mesh (nearest-rank percentile)."""
    d = np.sort(point_mesh_distances(generated_points, gt_mesh))
    k = int(np.ceil(percentile / 100.0 * len(d)))
    return float(d[max(k - 1, 0)])


def mesh_completion(gen_mesh, gt_points, delta: float = 0.01) -> float:
    """Fraction of ground-truth points within delta of the generated mesh.

    An empty generated mesh scores 0 by definition (logged as a warning).
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    gt = _as_points(gt_points)
    gen = _as_mesh(gen_mesh)
    if gen.n_triangles == 0:
        log.warning("mesh_completion: generated mesh is empty, scoring 0")
        return 0.0
    d = point_mesh_distances(gt, gen)
    return float(np.mean(d <= delta))


def cosine_similarity(gen_mesh, gt_points, gt_normals) -> float:
    """Mean orientation-agnostic cosine between ground-truth point normals
    and the normals of the nearest generated faces."""
    gt = _as_points(gt_points)
    if gt_normals is None:
        raise ValueError("cosine similarity needs ground-truth normals")
    normals = np.asarray(gt_normals, dtype=np.float64).reshape(-1, 3)
    if len(normals) != len(gt):
        raise ValueError("points and normals must have equal length")
    gen = _as_mesh(gen_mesh)
    if gen.n_triangles == 0:
        raise EmptyInputError("generated mesh is empty")
    bvh = TriangleBvh(gen)
    _, _, tri_idx = bvh.query(gt)
    face_normals = gen.face_normals()[tri_idx]
    return float(np.mean(np.abs(np.sum(face_normals * normals, axis=-1))))
