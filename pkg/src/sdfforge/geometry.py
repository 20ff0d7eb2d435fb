"""Core geometric types and operations.

Meshes, analytic shapes with exact signed distance, oriented point clouds,
nearest-neighbor search, and point-to-triangle/mesh distance queries. All
coordinates live in the normalized unit-sphere frame unless stated otherwise.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    DegenerateGeometryError,
    EmptyInputError,
    MeshStructureError,
    ObjParseError,
)

# Meshes are rescaled so the bounding sphere has this radius, leaving a small
# margin inside the unit sphere.
NORMALIZED_RADIUS = 1.0 / 1.03

_DEGENERATE_AREA = 1e-12


def as_point3(p) -> np.ndarray:
    """Coerce to a finite float64 vector of shape (3,)."""
    q = np.asarray(p, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(q)):
        raise ValueError(f"non-finite point: {q}")
    return q


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / n


# ---------------------------------------------------------------------------
# Triangle meshes
# ---------------------------------------------------------------------------


@dataclass
class TriangleMesh:
    """Indexed triangle mesh with optional per-triangle unit normals."""

    vertices: np.ndarray  # (V, 3) float64
    triangles: np.ndarray  # (T, 3) int64
    normals: np.ndarray | None = None  # (T, 3) unit vectors

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.triangles.size:
            lo, hi = self.triangles.min(), self.triangles.max()
            if lo < 0 or hi >= len(self.vertices):
                raise MeshStructureError(
                    f"triangle index {hi if hi >= len(self.vertices) else lo} "
                    f"out of range for {len(self.vertices)} vertices"
                )

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def corners(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-triangle corner arrays (a, b, c), each (T, 3)."""
        v, t = self.vertices, self.triangles
        return v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]

    def face_normals(self) -> np.ndarray:
        """Unit normals from winding order, (T, 3)."""
        if self.normals is not None:
            return self.normals
        a, b, c = self.corners()
        n = np.cross(b - a, c - a)
        return _unit(n)

    def face_areas(self) -> np.ndarray:
        a, b, c = self.corners()
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=-1)


def _drop_degenerate(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    if len(triangles) == 0:
        return triangles
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    areas = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=-1)
    return triangles[areas >= _DEGENERATE_AREA]


def load_obj(source) -> TriangleMesh:
    """Parse an ASCII OBJ stream (`v` and `f` records) into a TriangleMesh.

    Polygon faces are fan-triangulated; unsupported record types are skipped.
    Degenerate (zero-area) triangles are dropped. Raises ObjParseError with a
    line number on malformed records and MeshStructureError on bad indices.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8", errors="replace") as f:
            return load_obj(f)
    vertices: list[list[float]] = []
    faces: list[tuple[int, int, int]] = []
    for line_no, raw in enumerate(source, start=1):
        tokens = raw.split()
        if not tokens or tokens[0].startswith("#"):
            continue
        kind = tokens[0]
        if kind == "v":
            if len(tokens) < 4:
                raise ObjParseError(line_no, f"vertex needs 3 coordinates: {raw.strip()!r}")
            try:
                vertices.append([float(t) for t in tokens[1:4]])
            except ValueError:
                raise ObjParseError(line_no, f"bad vertex coordinate: {raw.strip()!r}")
        elif kind == "f":
            if len(tokens) < 4:
                raise ObjParseError(line_no, f"face needs at least 3 indices: {raw.strip()!r}")
            idx = []
            for tok in tokens[1:]:
                head = tok.split("/")[0]
                try:
                    i = int(head)
                except ValueError:
                    raise ObjParseError(line_no, f"bad face index {tok!r}")
                if i < 0:
                    raise MeshStructureError(
                        f"line {line_no}: negative face indices are unsupported"
                    )
                idx.append(i - 1)  # OBJ is 1-based
            for k in range(1, len(idx) - 1):
                faces.append((idx[0], idx[k], idx[k + 1]))
        # vn/vt/o/g/s/usemtl/mtllib etc. are intentionally ignored
    verts = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    tris = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    if tris.size and tris.max() >= len(verts):
        raise MeshStructureError(
            f"face index {tris.max() + 1} exceeds vertex count {len(verts)}"
        )
    tris = _drop_degenerate(verts, tris)
    return TriangleMesh(verts, tris)


def write_obj(path_or_stream, vertices: np.ndarray, triangles: np.ndarray,
              vertex_normals: np.ndarray | None = None) -> None:
    """Write an ASCII OBJ; with normals, faces use `f i//i j//j k//k`."""
    if isinstance(path_or_stream, (str, Path)):
        with open(path_or_stream, "w", encoding="utf-8") as f:
            write_obj(f, vertices, triangles, vertex_normals)
        return
    out = path_or_stream
    for v in np.asarray(vertices, dtype=np.float64):
        out.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
    if vertex_normals is not None:
        for n in np.asarray(vertex_normals, dtype=np.float64):
            out.write(f"vn {n[0]:.9g} {n[1]:.9g} {n[2]:.9g}\n")
        for t in np.asarray(triangles, dtype=np.int64) + 1:
            out.write(f"f {t[0]}//{t[0]} {t[1]}//{t[1]} {t[2]}//{t[2]}\n")
    else:
        for t in np.asarray(triangles, dtype=np.int64) + 1:
            out.write(f"f {t[0]} {t[1]} {t[2]}\n")


def normalize_to_unit_sphere(mesh: TriangleMesh) -> tuple[TriangleMesh, float, np.ndarray]:
    """Recenter and rescale so the bounding sphere radius is 1/1.03.

    The sphere is centered at the vertex bounding-box center. Returns
    (normalized mesh, scale, offset) with v_norm = (v - offset) * scale,
    so the inverse transform is v = v_norm / scale + offset.
    """
    if mesh.n_vertices == 0:
        raise EmptyInputError("cannot normalize an empty mesh")
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    center = 0.5 * (lo + hi)
    radius = float(np.linalg.norm(mesh.vertices - center, axis=1).max())
    if radius < 1e-12:
        raise DegenerateGeometryError("mesh has zero spatial extent")
    scale = NORMALIZED_RADIUS / radius
    verts = (mesh.vertices - center) * scale
    return TriangleMesh(verts, mesh.triangles.copy(), mesh.normals), scale, center


def farthest_point_thin(points: np.ndarray, n: int,
                        rng: np.random.Generator) -> np.ndarray:
    """Greedily keep n points maximizing mutual spacing.

    Turns an iid oversample into an evenly spread subset, which roughly
    halves the nearest-neighbor noise floor of point-set metrics.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if n >= len(pts):
        return pts.copy()
    chosen = np.empty(n, dtype=np.int64)
    chosen[0] = int(rng.integers(len(pts)))
    d2 = np.sum((pts - pts[chosen[0]]) ** 2, axis=1)
    for k in range(1, n):
        idx = int(np.argmax(d2))
        chosen[k] = idx
        np.minimum(d2, np.sum((pts - pts[idx]) ** 2, axis=1), out=d2)
    return pts[chosen]


def sample_mesh_surface_even(mesh: TriangleMesh, n: int, rng: np.random.Generator,
                             oversample: int = 10) -> np.ndarray:
    """n points spread evenly over the mesh surface (area-weighted candidates
    thinned by farthest-point selection)."""
    return farthest_point_thin(sample_mesh_surface(mesh, oversample * n, rng), n, rng)


def sample_mesh_surface(mesh: TriangleMesh, n: int, rng: np.random.Generator,
                        with_normals: bool = False):
    """Sample n points uniformly by area from the mesh surface.

    Returns (n, 3) points, or (points, normals) when with_normals is set;
    normals are the face normals of the sampled triangles.
    """
    if mesh.n_triangles == 0:
        raise EmptyInputError("cannot sample from a mesh without triangles")
    areas = mesh.face_areas()
    cum = np.cumsum(areas)
    face = np.searchsorted(cum, rng.uniform(0.0, cum[-1], size=n))
    face = np.clip(face, 0, len(areas) - 1)
    a, b, c = mesh.corners()
    u = rng.uniform(size=(n, 1))
    v = rng.uniform(size=(n, 1))
    flip = (u + v) > 1.0
    u = np.where(flip, 1.0 - u, u)
    v = np.where(flip, 1.0 - v, v)
    pts = a[face] + u * (b[face] - a[face]) + v * (c[face] - a[face])
    if with_normals:
        return pts, mesh.face_normals()[face]
    return pts


# ---------------------------------------------------------------------------
# Point-triangle distance
# ---------------------------------------------------------------------------


def closest_on_triangles(p: np.ndarray, a: np.ndarray, b: np.ndarray,
                         c: np.ndarray) -> np.ndarray:
    """Closest points on triangles (a, b, c) to p, broadcasting over (..., 3).

    Voronoi-region case analysis; assumes non-degenerate triangles.
    """
    p = np.asarray(p, dtype=np.float64)
    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.sum(ab * ap, axis=-1)
    d2 = np.sum(ac * ap, axis=-1)
    bp = p - b
    d3 = np.sum(ab * bp, axis=-1)
    d4 = np.sum(ac * bp, axis=-1)
    cp = p - c
    d5 = np.sum(ab * cp, axis=-1)
    d6 = np.sum(ac * cp, axis=-1)
    vc = d1 * d4 - d3 * d2
    vb = d5 * d2 - d1 * d6
    va = d3 * d6 - d5 * d4

    def safe_div(num, den):
        return num / np.where(np.abs(den) < 1e-300, 1.0, den)

    v_ab = np.clip(safe_div(d1, d1 - d3), 0.0, 1.0)[..., None]
    w_ac = np.clip(safe_div(d2, d2 - d6), 0.0, 1.0)[..., None]
    w_bc = np.clip(safe_div(d4 - d3, (d4 - d3) + (d5 - d6)), 0.0, 1.0)[..., None]
    denom = va + vb + vc
    v_in = safe_div(vb, denom)[..., None]
    w_in = safe_div(vc, denom)[..., None]

    result = a + ab * v_in + ac * w_in  # face interior default
    on_bc = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)
    result = np.where(on_bc[..., None], b + w_bc * (c - b), result)
    on_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    result = np.where(on_ac[..., None], a + w_ac * ac, result)
    at_c = (d6 >= 0) & (d5 <= d6)
    result = np.where(at_c[..., None], np.broadcast_to(c, result.shape), result)
    on_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    result = np.where(on_ab[..., None], a + v_ab * ab, result)
    at_b = (d3 >= 0) & (d4 <= d3)
    result = np.where(at_b[..., None], np.broadcast_to(b, result.shape), result)
    at_a = (d1 <= 0) & (d2 <= 0)
    result = np.where(at_a[..., None], np.broadcast_to(a, result.shape), result)
    return result


def point_triangle_distance(q, tri) -> tuple[float, np.ndarray]:
    """Distance from point q to one triangle, plus the closest point on it.

    tri is a (3, 3) array of corners. Raises DegenerateGeometryError when the
    triangle has (near-)zero area.
    """
    q = as_point3(q)
    tri = np.asarray(tri, dtype=np.float64).reshape(3, 3)
    a, b, c = tri
    if 0.5 * np.linalg.norm(np.cross(b - a, c - a)) < _DEGENERATE_AREA:
        raise DegenerateGeometryError("degenerate triangle in distance query")
    closest = closest_on_triangles(q, a, b, c)
    return float(np.linalg.norm(q - closest)), closest


# ---------------------------------------------------------------------------
# BVH for exact point-to-mesh distance
# ---------------------------------------------------------------------------


class TriangleBvh:
    """Axis-aligned median-split BVH over mesh faces.

    Supports exact nearest-point queries against the full face set (not just
    vertices) with branch-and-bound pruning.
    """

    _LEAF_SIZE = 8

    def __init__(self, mesh: TriangleMesh):
        if mesh.n_triangles == 0:
            raise EmptyInputError("cannot build a BVH over an empty mesh")
        a, b, c = mesh.corners()
        self._a, self._b, self._c = a, b, c
        centroids = (a + b + c) / 3.0
        self._order = np.arange(mesh.n_triangles)
        # nodes: (lo, hi, left, right, start, count); leaf iff left < 0
        self._lo: list[np.ndarray] = []
        self._hi: list[np.ndarray] = []
        self._left: list[int] = []
        self._right: list[int] = []
        self._span: list[tuple[int, int]] = []
        self._build(0, mesh.n_triangles, centroids)
        self._lo_arr = np.asarray(self._lo)
        self._hi_arr = np.asarray(self._hi)

    def _build(self, start: int, end: int, centroids: np.ndarray) -> int:
        idx = self._order[start:end]
        lo = np.minimum.reduce([self._a[idx].min(0), self._b[idx].min(0), self._c[idx].min(0)])
        hi = np.maximum.reduce([self._a[idx].max(0), self._b[idx].max(0), self._c[idx].max(0)])
        node = len(self._lo)
        self._lo.append(lo)
        self._hi.append(hi)
        self._left.append(-1)
        self._right.append(-1)
        self._span.append((start, end))
        if end - start <= self._LEAF_SIZE:
            return node
        cent = centroids[idx]
        axis = int(np.argmax(cent.max(0) - cent.min(0)))
        mid = (end - start) // 2
        part = np.argpartition(cent[:, axis], mid)
        self._order[start:end] = idx[part]
        self._left[node] = self._build(start, start + mid, centroids)
        self._right[node] = self._build(start + mid, end, centroids)
        return node

    def _box_dist2(self, node: int, p: np.ndarray) -> float:
        d = np.maximum(self._lo_arr[node] - p, 0.0) + np.maximum(p - self._hi_arr[node], 0.0)
        return float(np.dot(d, d))

    def query_one(self, p: np.ndarray) -> tuple[float, np.ndarray, int]:
        """Nearest point on any face: (distance, closest point, face index)."""
        p = as_point3(p)
        best_d2 = np.inf
        best_pt = None
        best_tri = -1
        stack = [0]
        while stack:
            node = stack.pop()
            if self._box_dist2(node, p) >= best_d2:
                continue
            if self._left[node] < 0:
                s, e = self._span[node]
                idx = self._order[s:e]
                cl = closest_on_triangles(p, self._a[idx], self._b[idx], self._c[idx])
                d2 = np.sum((cl - p) ** 2, axis=-1)
                k = int(np.argmin(d2))
                if d2[k] < best_d2:
                    best_d2 = float(d2[k])
                    best_pt = cl[k]
                    best_tri = int(idx[k])
            else:
                l, r = self._left[node], self._right[node]
                dl, dr = self._box_dist2(l, p), self._box_dist2(r, p)
                # visit nearer child first
                if dl < dr:
                    stack.append(r)
                    stack.append(l)
                else:
                    stack.append(l)
                    stack.append(r)
        return float(np.sqrt(best_d2)), best_pt, best_tri

    def query(self, points: np.ndarray):
        """Batched nearest-face query: (distances, closest points, face indices)."""
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        dists = np.empty(len(points))
        closest = np.empty((len(points), 3))
        tris = np.empty(len(points), dtype=np.int64)
        for i, p in enumerate(points):
            dists[i], closest[i], tris[i] = self.query_one(p)
        return dists, closest, tris


# ---------------------------------------------------------------------------
# Oriented point clouds and nearest-neighbor search
# ---------------------------------------------------------------------------


@dataclass
class OrientedPoint:
    """A surface point with an outward unit normal."""

    position: np.ndarray
    normal: np.ndarray

    def __post_init__(self):
        self.position = as_point3(self.position)
        self.normal = as_point3(self.normal)
        n = np.linalg.norm(self.normal)
        if abs(n - 1.0) > 1e-6:
            raise ValueError(f"normal must be unit length, got norm {n}")


@dataclass
class OrientedPointCloud:
    """Columnar set of oriented surface points."""

    points: np.ndarray  # (N, 3)
    normals: np.ndarray  # (N, 3), unit

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        if len(self.points) != len(self.normals):
            raise ValueError("points and normals must have equal length")
        if len(self.normals):
            norms = np.linalg.norm(self.normals, axis=1)
            if np.abs(norms - 1.0).max() > 1e-4:
                raise ValueError("normals must be unit length")

    def __len__(self) -> int:
        return len(self.points)


_OPC_MAGIC = b"OPC1"


def write_opc(path, cloud: OrientedPointCloud) -> None:
    """Binary oriented point cloud: magic OPC1, u32 count, f32 (p, n) records."""
    records = np.hstack([cloud.points, cloud.normals]).astype("<f4")
    with open(path, "wb") as f:
        f.write(_OPC_MAGIC)
        f.write(struct.pack("<I", len(cloud)))
        f.write(records.tobytes())


def read_opc(path) -> OrientedPointCloud:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _OPC_MAGIC:
            raise MeshStructureError(f"bad point-cloud magic {magic!r}")
        (count,) = struct.unpack("<I", f.read(4))
        data = np.frombuffer(f.read(count * 24), dtype="<f4").reshape(count, 6)
    pts = data[:, :3].astype(np.float64)
    normals = _unit(data[:, 3:].astype(np.float64))
    return OrientedPointCloud(pts, normals)


class KdTree3:
    """Nearest-neighbor index over a fixed 3D point set (scipy cKDTree)."""

    def __init__(self, points: np.ndarray):
        points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if len(points) == 0:
            raise EmptyInputError("cannot index an empty point set")
        self.points = points
        self._tree = cKDTree(points)

    def nearest(self, q):
        """Nearest point to q: (distance, index). q may be (3,) or (N, 3)."""
        d, i = self._tree.query(q)
        return d, i


def signed_distance_oracle(surface, q) -> np.ndarray | float:
    """Signed distance from q to a surface.

    For an AnalyticShape this is the exact closed-form SDF. For an
    OrientedPointCloud the magnitude is the distance to the nearest cloud
    point and the sign comes from the dot product of its normal with the
    offset vector (ties at zero dot count as outside). q may be a single
    point or an (N, 3) batch; the return matches.
    """
    if isinstance(surface, AnalyticShape):
        return surface.sdf(q)
    cloud = surface
    if len(cloud) == 0:
        raise EmptyInputError("oracle needs a non-empty surface")
    tree = _cloud_tree(cloud)
    q_arr = np.asarray(q, dtype=np.float64)
    single = q_arr.ndim == 1
    q2 = q_arr.reshape(-1, 3)
    d, idx = tree.nearest(q2)
    offset = q2 - cloud.points[idx]
    sign = np.where(np.sum(cloud.normals[idx] * offset, axis=-1) >= 0.0, 1.0, -1.0)
    s = sign * d
    return float(s[0]) if single else s


def _cloud_tree(cloud: OrientedPointCloud) -> KdTree3:
    tree = getattr(cloud, "_tree", None)
    if tree is None:
        tree = KdTree3(cloud.points)
        object.__setattr__(cloud, "_tree", tree)
    return tree


# ---------------------------------------------------------------------------
# Analytic shapes with exact signed distance
# ---------------------------------------------------------------------------


class AnalyticShape:
    """Base class for shapes with a closed-form metric SDF."""

    def sdf(self, q):
        raise NotImplementedError

    def sample_surface(self, n: int, rng: np.random.Generator):
        """(points, normals) sampled uniformly by area from the surface."""
        raise NotImplementedError

    def sample_surface_even(self, n: int, rng: np.random.Generator,
                            oversample: int = 10) -> np.ndarray:
        """n evenly spread surface points (farthest-point-thinned)."""
        candidates, _ = self.sample_surface(oversample * n, rng)
        return farthest_point_thin(candidates, n, rng)

    def bounding_radius(self) -> float:
        raise NotImplementedError

    def descriptor(self) -> dict:
        raise NotImplementedError

    @staticmethod
    def from_descriptor(d: dict) -> "AnalyticShape":
        kind = d["kind"]
        if kind == "sphere":
            return Sphere(d["center"], d["radius"])
        if kind == "box":
            return Box(d["half_extents"])
        if kind == "torus":
            return Torus(d["major_radius"], d["minor_radius"])
        if kind == "transformed":
            return Transformed(
                AnalyticShape.from_descriptor(d["child"]),
                rotation=np.asarray(d["rotation"], dtype=np.float64).reshape(3, 3),
                translation=np.asarray(d["translation"], dtype=np.float64),
                scale=float(d["scale"]),
            )
        raise ValueError(f"unknown shape kind {kind!r}")

    @staticmethod
    def _coerce(q):
        q_arr = np.asarray(q, dtype=np.float64)
        return q_arr, q_arr.ndim == 1


class Sphere(AnalyticShape):
    def __init__(self, center, radius: float):
        if radius <= 0:
            raise ValueError("sphere radius must be positive")
        self.center = as_point3(center)
        self.radius = float(radius)

    def sdf(self, q):
        q_arr, single = self._coerce(q)
        s = np.linalg.norm(q_arr.reshape(-1, 3) - self.center, axis=-1) - self.radius
        return float(s[0]) if single else s

    def sample_surface(self, n, rng):
        dirs = _unit(rng.standard_normal((n, 3)))
        return self.center + self.radius * dirs, dirs

    def bounding_radius(self):
        return float(np.linalg.norm(self.center)) + self.radius

    def descriptor(self):
        return {"kind": "sphere", "center": self.center.tolist(), "radius": self.radius}


class Box(AnalyticShape):
    """Axis-aligned box centered at the origin, given by half-extents."""

    def __init__(self, half_extents):
        self.half_extents = as_point3(half_extents)
        if np.any(self.half_extents <= 0):
            raise ValueError("box half-extents must be positive")

    def sdf(self, q):
        q_arr, single = self._coerce(q)
        d = np.abs(q_arr.reshape(-1, 3)) - self.half_extents
        outside = np.linalg.norm(np.maximum(d, 0.0), axis=-1)
        inside = np.minimum(d.max(axis=-1), 0.0)
        s = outside + inside
        return float(s[0]) if single else s

    def sample_surface(self, n, rng):
        h = self.half_extents
        # two faces per axis; weight by face area
        face_areas = np.array([h[1] * h[2], h[0] * h[2], h[0] * h[1]]) * 4.0
        weights = np.repeat(face_areas, 2)
        weights = weights / weights.sum()
        choice = rng.choice(6, size=n, p=weights)
        uv = rng.uniform(-1.0, 1.0, size=(n, 2))
        pts = np.empty((n, 3))
        normals = np.zeros((n, 3))
        for face in range(6):
            axis, side = divmod(face, 2)
            mask = choice == face
            others = [a for a in range(3) if a != axis]
            pts[mask, axis] = h[axis] * (1.0 if side == 0 else -1.0)
            pts[mask, others[0]] = uv[mask, 0] * h[others[0]]
            pts[mask, others[1]] = uv[mask, 1] * h[others[1]]
            normals[mask, axis] = 1.0 if side == 0 else -1.0
        return pts, normals

    def bounding_radius(self):
        return float(np.linalg.norm(self.half_extents))

    def descriptor(self):
        return {"kind": "box", "half_extents": self.half_extents.tolist()}


class Torus(AnalyticShape):
    """Torus around the +y axis: ring of the major radius in the xz-plane."""

    def __init__(self, major_radius: float, minor_radius: float):
        if not (0 < minor_radius < major_radius):
            raise ValueError("torus needs 0 < minor_radius < major_radius")
        self.major_radius = float(major_radius)
        self.minor_radius = float(minor_radius)

    def sdf(self, q):
        q_arr, single = self._coerce(q)
        q2 = q_arr.reshape(-1, 3)
        ring = np.hypot(q2[:, 0], q2[:, 2]) - self.major_radius
        s = np.hypot(ring, q2[:, 1]) - self.minor_radius
        return float(s[0]) if single else s

    def sample_surface(self, n, rng):
        R, r = self.major_radius, self.minor_radius
        theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
        # area element is proportional to R + r*cos(phi); rejection-sample phi
        phi = np.empty(n)
        filled = 0
        while filled < n:
            cand = rng.uniform(0.0, 2.0 * np.pi, size=2 * (n - filled))
            accept = rng.uniform(size=len(cand)) < (R + r * np.cos(cand)) / (R + r)
            take = cand[accept][: n - filled]
            phi[filled : filled + len(take)] = take
            filled += len(take)
        ring = R + r * np.cos(phi)
        pts = np.stack([ring * np.cos(theta), r * np.sin(phi), ring * np.sin(theta)], axis=1)
        normals = np.stack(
            [np.cos(phi) * np.cos(theta), np.sin(phi), np.cos(phi) * np.sin(theta)], axis=1
        )
        return pts, normals

    def bounding_radius(self):
        return self.major_radius + self.minor_radius

    def descriptor(self):
        return {
            "kind": "torus",
            "major_radius": self.major_radius,
            "minor_radius": self.minor_radius,
        }


class Transformed(AnalyticShape):
    """Rigid transform plus uniform scale of a child shape (still an exact SDF)."""

    def __init__(self, child: AnalyticShape, rotation=None, translation=None,
                 scale: float = 1.0):
        if scale <= 0:
            raise ValueError("scale must be positive")
        self.child = child
        self.rotation = (
            np.eye(3) if rotation is None else np.asarray(rotation, dtype=np.float64)
        )
        if not np.allclose(self.rotation @ self.rotation.T, np.eye(3), atol=1e-8):
            raise ValueError("rotation must be orthonormal")
        self.translation = (
            np.zeros(3) if translation is None else as_point3(translation)
        )
        self.scale = float(scale)

    def sdf(self, q):
        q_arr, single = self._coerce(q)
        local = (q_arr.reshape(-1, 3) - self.translation) @ self.rotation / self.scale
        s = self.scale * np.asarray(self.child.sdf(local))
        return float(s[0]) if single else s

    def sample_surface(self, n, rng):
        pts, normals = self.child.sample_surface(n, rng)
        world = (self.scale * pts) @ self.rotation.T + self.translation
        return world, normals @ self.rotation.T

    def bounding_radius(self):
        return float(np.linalg.norm(self.translation)) + self.scale * self.child.bounding_radius()

    def descriptor(self):
        return {
            "kind": "transformed",
            "child": self.child.descriptor(),
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
            "scale": self.scale,
        }


# ---------------------------------------------------------------------------
# Direction lattices
# ---------------------------------------------------------------------------


def fibonacci_sphere(n: int) -> np.ndarray:
    """n near-uniform unit directions on the golden-angle spiral lattice."""
    if n < 1:
        raise EmptyInputError("need at least one direction")
    i = np.arange(n, dtype=np.float64)
    y = 1.0 - 2.0 * (i + 0.5) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - y * y))
    theta = np.pi * (3.0 - np.sqrt(5.0)) * i
    return np.stack([r * np.cos(theta), y, r * np.sin(theta)], axis=1)


def cube_mesh(half_extent: float = 0.5, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Axis-aligned cube as 8 vertices / 12 triangles, outward winding."""
    c = as_point3(center)
    h = float(half_extent)
    corners = np.array(
        [[sx, sy, sz] for sx in (-h, h) for sy in (-h, h) for sz in (-h, h)]
    ) + c
    # index bits: x*4 + y*2 + z
    quads = [
        (0, 1, 3, 2),  # -x
        (4, 6, 7, 5),  # +x
        (0, 4, 5, 1),  # -y
        (2, 3, 7, 6),  # +y
        (0, 2, 6, 4),  # -z
        (1, 5, 7, 3),  # +z
    ]
    tris = []
    for a, b, cc, d in quads:
        tris.append((a, b, cc))
        tris.append((a, cc, d))
    return TriangleMesh(corners, np.asarray(tris, dtype=np.int64))
