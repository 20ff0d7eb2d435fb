"""Training-data preparation: depth rendering, shell extraction, SDF sampling.

A mesh is turned into a set of (point, signed distance) pairs by rendering it
from virtual cameras on a direction lattice, back-projecting the hit pixels
into an oriented shell point cloud, and assigning distances to near-surface
and uniform volume samples against that shell.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .cameras import PinholeCamera, make_camera
from .errors import DataError, EmptyInputError
from .geometry import (
    AnalyticShape,
    OrientedPointCloud,
    TriangleMesh,
    fibonacci_sphere,
    sample_mesh_surface,
    signed_distance_oracle,
)

# ---------------------------------------------------------------------------
# Sample containers
# ---------------------------------------------------------------------------


@dataclass
class SampleSet:
    """Spatial points paired with signed distance values for one shape."""

    shape_id: str
    positions: np.ndarray  # (N, 3) float32
    s: np.ndarray  # (N,) float32

    def __post_init__(self):
        if not self.shape_id:
            raise ValueError("shape_id must be non-empty")
        self.positions = np.asarray(self.positions, dtype=np.float32).reshape(-1, 3)
        self.s = np.asarray(self.s, dtype=np.float32).reshape(-1)
        if len(self.positions) != len(self.s):
            raise ValueError("positions and s must have equal length")
        if len(self.s):
            if not np.all(np.isfinite(self.positions)) or not np.all(np.isfinite(self.s)):
                raise ValueError("samples must be finite")
            if np.abs(self.s).max() > 2.0:
                raise ValueError("|s| exceeds the unit-sphere diameter bound")

    def __len__(self) -> int:
        return len(self.s)

    @property
    def n_positive(self) -> int:
        return int(np.count_nonzero(self.s >= 0.0))

    @property
    def n_negative(self) -> int:
        return int(np.count_nonzero(self.s < 0.0))


_SDFS_MAGIC = b"SDFS"
_SDFS_VERSION = 1


def write_samples(path, samples: SampleSet) -> None:
    """Binary sample file: magic SDFS, u32 version, u64 count, f32 xyzs records."""
    records = np.hstack([samples.positions, samples.s[:, None]]).astype("<f4")
    with open(path, "wb") as f:
        f.write(_SDFS_MAGIC)
        f.write(struct.pack("<IQ", _SDFS_VERSION, len(samples)))
        f.write(records.tobytes())


def read_samples(path, shape_id: str | None = None) -> SampleSet:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _SDFS_MAGIC:
            raise DataError(f"bad sample-file magic {magic!r} in {path}")
        version, count = struct.unpack("<IQ", f.read(12))
        if version != _SDFS_VERSION:
            raise DataError(f"unsupported sample-file version {version}")
        data = np.frombuffer(f.read(count * 16), dtype="<f4").reshape(count, 4)
    sid = shape_id if shape_id is not None else str(path)
    return SampleSet(sid, data[:, :3].copy(), data[:, 3].copy())


@dataclass
class PrepConfig:
    """Knobs for the mesh-to-samples pipeline.

    perturb_variances are per-axis Gaussian variances for the two
    near-surface sample bands (one spatial sample per variance per surface
    point). Counts default to production scale; desk-scale runs override.
    """

    n_cameras: int = 100
    depth_resolution: int = 128
    n_surface: int = 250_000
    perturb_variances: tuple[float, ...] = (0.0025, 0.00025)
    n_uniform: int = 25_000
    double_sided_reject_fraction: float = 0.02
    camera_distance: float = 2.0
    vfov_deg: float = 60.0

    def __post_init__(self):
        if min(self.n_cameras, self.depth_resolution, self.n_surface, self.n_uniform) < 1:
            raise ValueError("all prep counts must be >= 1")
        if any(v <= 0 for v in self.perturb_variances):
            raise ValueError("perturbation variances must be positive")
        if not 0.0 < self.double_sided_reject_fraction <= 1.0:
            raise ValueError("double_sided_reject_fraction must be in (0, 1]")


# ---------------------------------------------------------------------------
# Depth maps
# ---------------------------------------------------------------------------


@dataclass
class DepthMap:
    """Per-pixel range image with camera-facing surface normals.

    depth is the Euclidean distance from the camera center to the hit point
    along the pixel ray; 0 marks a miss. Normals at hits are unit length and
    satisfy dot(normal, toward-camera) >= 0.
    """

    camera: PinholeCamera
    depth: np.ndarray  # (H, W) float64
    normals: np.ndarray  # (H, W, 3) float64

    def __post_init__(self):
        self.depth = np.asarray(self.depth, dtype=np.float64)
        self.normals = np.asarray(self.normals, dtype=np.float64)
        if self.depth.shape != (self.camera.height, self.camera.width):
            raise ValueError("depth shape does not match camera resolution")
        if self.normals.shape != self.depth.shape + (3,):
            raise ValueError("normals shape does not match depth")
        hit = self.depth > 0
        if hit.any():
            norms = np.linalg.norm(self.normals[hit], axis=-1)
            if np.abs(norms - 1.0).max() > 1e-4:
                raise ValueError("hit normals must be unit length")

    @property
    def hit_mask(self) -> np.ndarray:
        return self.depth > 0

    def n_hits(self) -> int:
        return int(np.count_nonzero(self.depth > 0))


_DPTH_MAGIC = b"DPTH"


def write_depth(path, dm: DepthMap) -> None:
    """Binary depth file: magic, pose (R rows + t), intrinsics, size, pixels."""
    cam = dm.camera
    with open(path, "wb") as f:
        f.write(_DPTH_MAGIC)
        f.write(np.asarray(cam.rotation, dtype="<f4").tobytes())
        f.write(np.asarray(cam.translation, dtype="<f4").tobytes())
        f.write(np.asarray([cam.fx, cam.fy, cam.cx, cam.cy], dtype="<f4").tobytes())
        f.write(struct.pack("<II", cam.width, cam.height))
        px = np.concatenate([dm.depth[..., None], dm.normals], axis=-1)
        f.write(px.astype("<f4").tobytes())


def read_depth(path) -> DepthMap:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _DPTH_MAGIC:
            raise DataError(f"bad depth-file magic {magic!r} in {path}")
        pose = np.frombuffer(f.read(48), dtype="<f4").astype(np.float64)
        intr = np.frombuffer(f.read(16), dtype="<f4").astype(np.float64)
        width, height = struct.unpack("<II", f.read(8))
        px = np.frombuffer(f.read(width * height * 16), dtype="<f4")
    px = px.astype(np.float64).reshape(height, width, 4)
    cam = PinholeCamera(
        rotation=pose[:9].reshape(3, 3),
        translation=pose[9:],
        fx=float(intr[0]),
        fy=float(intr[1]),
        cx=float(intr[2]),
        cy=float(intr[3]),
        width=int(width),
        height=int(height),
    )
    normals = px[..., 1:]
    hit = px[..., 0] > 0
    if hit.any():  # renormalize after float32 round-trip
        normals[hit] /= np.linalg.norm(normals[hit], axis=-1, keepdims=True)
    return DepthMap(cam, px[..., 0], normals)


# ---------------------------------------------------------------------------
# Ray casting against meshes and analytic shapes
# ---------------------------------------------------------------------------

_RAY_CHUNK_BUDGET = 4_000_000  # ray-triangle pairs per vectorized block


def _trace_rays(mesh: TriangleMesh, origin: np.ndarray, dirs: np.ndarray):
    """Nearest-hit Moller-Trumbore: returns (t, tri index, facing sign).

    t = 0 marks a miss. facing sign is +1 when the triangle's winding normal
    points toward the camera, -1 otherwise.
    """
    n_rays = len(dirs)
    t_best = np.zeros(n_rays)
    tri_best = np.full(n_rays, -1, dtype=np.int64)
    if mesh.n_triangles == 0:
        return t_best, tri_best, np.zeros(n_rays)
    a, b, c = mesh.corners()
    e1 = b - a
    e2 = c - a
    tvec = origin - a  # shared origin: per-triangle
    qvec = np.cross(tvec, e1)
    t_num_base = np.sum(e2 * qvec, axis=-1)
    chunk = max(1, _RAY_CHUNK_BUDGET // mesh.n_triangles)
    eps = 1e-12
    bary_tol = 1e-9
    for start in range(0, n_rays, chunk):
        d = dirs[start : start + chunk]
        pvec = np.cross(d[:, None, :], e2[None, :, :])
        det = np.einsum("tk,rtk->rt", e1, pvec)
        valid = np.abs(det) > eps
        inv_det = np.where(valid, 1.0 / np.where(valid, det, 1.0), 0.0)
        u = np.einsum("tk,rtk->rt", tvec, pvec) * inv_det
        v = np.einsum("rk,tk->rt", d, qvec) * inv_det
        t = t_num_base[None, :] * inv_det
        hit = (
            valid
            & (u >= -bary_tol)
            & (v >= -bary_tol)
            & (u + v <= 1.0 + bary_tol)
            & (t > 1e-9)
        )
        t_masked = np.where(hit, t, np.inf)
        best = np.argmin(t_masked, axis=1)
        rows = np.arange(len(d))
        tmin = t_masked[rows, best]
        found = np.isfinite(tmin)
        sl = slice(start, start + len(d))
        t_best[sl] = np.where(found, tmin, 0.0)
        tri_best[sl] = np.where(found, best, -1)
    raw_normals = mesh.face_normals()
    facing = np.zeros(n_rays)
    hit_rays = tri_best >= 0
    if hit_rays.any():
        n = raw_normals[tri_best[hit_rays]]
        toward_cam = -dirs[hit_rays]
        dots = np.sum(n * toward_cam, axis=-1)
        facing[hit_rays] = np.where(dots >= 0, 1.0, -1.0)
    return t_best, tri_best, facing


def render_depth(mesh: TriangleMesh, camera: PinholeCamera) -> DepthMap:
    """Range image of the nearest triangle intersections.

    Hit normals are the triangle normals, flipped if needed so they face the
    camera. An all-miss image is valid output.
    """
    origin, dirs = camera.rays()
    t, tri, facing = _trace_rays(mesh, origin, dirs)
    h, w = camera.height, camera.width
    normals = np.zeros((h * w, 3))
    hit = tri >= 0
    if hit.any():
        normals[hit] = mesh.face_normals()[tri[hit]] * facing[hit, None]
    return DepthMap(camera, t.reshape(h, w), normals.reshape(h, w, 3))


def render_depth_sdf(shape: AnalyticShape, camera: PinholeCamera,
                     eps: float = 1e-7, max_steps: int = 256) -> DepthMap:
    """Range image of an analytic shape by marching its exact SDF.

    Normals come from central differences of the SDF at the hit points and
    are flipped toward the camera.
    """
    origin, dirs = camera.rays()
    bound = shape.bounding_radius() + 0.05
    t = np.zeros(len(dirs))
    active = np.ones(len(dirs), dtype=bool)
    hit = np.zeros(len(dirs), dtype=bool)
    # cheap far plane: ray leaves the bounding sphere
    t_far = np.linalg.norm(origin) + bound
    for _ in range(max_steps):
        if not active.any():
            break
        p = origin + t[active, None] * dirs[active]
        s = np.asarray(shape.sdf(p))
        newly_hit = s <= eps
        idx = np.flatnonzero(active)
        hit[idx[newly_hit]] = True
        t[idx] += np.maximum(s, 0.0)
        escaped = t[idx] > t_far
        active[idx[newly_hit | escaped]] = False
    h, w = camera.height, camera.width
    depth = np.where(hit, t, 0.0)
    normals = np.zeros((len(dirs), 3))
    if hit.any():
        p = origin + t[hit, None] * dirs[hit]
        fd = 1e-6
        grad = np.stack(
            [
                np.asarray(shape.sdf(p + off)) - np.asarray(shape.sdf(p - off))
                for off in (np.eye(3) * fd)
            ],
            axis=-1,
        )
        grad /= np.linalg.norm(grad, axis=-1, keepdims=True)
        dots = np.sum(grad * (-dirs[hit]), axis=-1)
        normals[hit] = grad * np.where(dots >= 0, 1.0, -1.0)[:, None]
    return DepthMap(camera, depth.reshape(h, w), normals.reshape(h, w, 3))


# ---------------------------------------------------------------------------
# Shell extraction and sample generation
# ---------------------------------------------------------------------------


def lattice_cameras(config: PrepConfig) -> list[PinholeCamera]:
    """Virtual cameras on the direction lattice, looking at the origin."""
    dirs = fibonacci_sphere(config.n_cameras)
    return [
        make_camera(d * config.camera_distance, config.depth_resolution,
                    config.depth_resolution, config.vfov_deg)
        for d in dirs
    ]


def extract_shell(mesh: TriangleMesh, config: PrepConfig,
                  threads: int = 1) -> tuple[OrientedPointCloud, float]:
    """Back-project all camera hits into an oriented shell point cloud.

    Also reports the fraction of mesh triangles that were observed from both
    orientations across the views (open-surface indicator).
    """
    cameras = lattice_cameras(config)
    raw_normals = mesh.face_normals()
    seen_front = np.zeros(mesh.n_triangles, dtype=bool)
    seen_back = np.zeros(mesh.n_triangles, dtype=bool)
    pts_parts = []
    normal_parts = []

    def trace(cam):
        origin, dirs = cam.rays()
        return origin, dirs, _trace_rays(mesh, origin, dirs)

    from .parallel import parallel_map

    for origin, dirs, (t, tri, facing) in parallel_map(trace, cameras, threads):
        hit = tri >= 0
        if not hit.any():
            continue
        pts_parts.append(origin + t[hit, None] * dirs[hit])
        normal_parts.append(raw_normals[tri[hit]] * facing[hit, None])
        seen_front[tri[hit][facing[hit] > 0]] = True
        seen_back[tri[hit][facing[hit] < 0]] = True
    if not pts_parts:
        raise EmptyInputError("no triangle visible from any virtual camera")
    double_sided = np.count_nonzero(seen_front & seen_back)
    fraction = double_sided / max(1, mesh.n_triangles)
    cloud = OrientedPointCloud(np.vstack(pts_parts), np.vstack(normal_parts))
    return cloud, float(fraction)


def accept_mesh(double_sided_fraction: float, config: PrepConfig) -> bool:
    """A mesh passes when at most the configured fraction is double-sided."""
    if not 0.0 <= double_sided_fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    return double_sided_fraction <= config.double_sided_reject_fraction


def uniform_ball_points(n: int, rng: np.random.Generator) -> np.ndarray:
    """n points uniform in the unit ball."""
    dirs = rng.standard_normal((n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = np.cbrt(rng.uniform(size=(n, 1)))
    return dirs * radii


def generate_samples(mesh: TriangleMesh, config: PrepConfig, seed: int,
                     shape_id: str = "shape",
                     shell: OrientedPointCloud | None = None) -> SampleSet:
    """Build the training SampleSet for an accepted, normalized mesh.

    Surface points are drawn area-weighted from the mesh, perturbed once per
    configured variance (isotropic per-axis Gaussian), and topped up with
    uniform unit-ball points. Signed distances come from the shell oracle.
    Deterministic for a fixed (mesh, config, seed).
    """
    rng = np.random.default_rng(seed)
    if shell is None:
        shell, _ = extract_shell(mesh, config)
    surface = sample_mesh_surface(mesh, config.n_surface, rng)
    parts = []
    for variance in config.perturb_variances:
        noise = rng.normal(0.0, np.sqrt(variance), size=surface.shape)
        parts.append(surface + noise)
    parts.append(uniform_ball_points(config.n_uniform, rng))
    positions = np.vstack(parts)
    s = signed_distance_oracle(shell, positions)
    return SampleSet(shape_id, positions.astype(np.float32), np.asarray(s, dtype=np.float32))


def sample_analytic(shape: AnalyticShape, config: PrepConfig, seed: int,
                    shape_id: str = "shape") -> SampleSet:
    """SampleSet with oracle-exact distances, drawn like the mesh pipeline."""
    rng = np.random.default_rng(seed)
    surface, _ = shape.sample_surface(config.n_surface, rng)
    parts = []
    for variance in config.perturb_variances:
        noise = rng.normal(0.0, np.sqrt(variance), size=surface.shape)
        parts.append(surface + noise)
    parts.append(uniform_ball_points(config.n_uniform, rng))
    positions = np.vstack(parts)
    s = np.asarray(shape.sdf(positions))
    return SampleSet(shape_id, positions.astype(np.float32), s.astype(np.float32))
