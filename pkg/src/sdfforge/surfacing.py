"""Zero-level-set extraction and rendering.

Marching cubes over a sampled voxel grid, sphere-traced raycasting with
analytic-normal Lambertian shading, and latent-space interpolation. Mesh and
image writers produce byte-identical output across runs and thread counts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._mc_tables import CORNERS, EDGE_AXIS, EDGE_OFFSET, TRI_TABLE
from .cameras import PinholeCamera
from .decoder import DecoderParams, backward_batch, forward_batch, spatial_gradient_batch
from .geometry import write_obj
from .parallel import parallel_map

DEFAULT_BOUNDS = (np.array([-1.0, -1.0, -1.0]), np.array([1.0, 1.0, 1.0]))
TRACE_REGION = 1.2  # rays are abandoned outside [-1.2, 1.2]^3


# ---------------------------------------------------------------------------
# Voxel grids and iso-meshes
# ---------------------------------------------------------------------------


@dataclass
class VoxelGrid:
    """Field values at the corners of a cubic lattice over axis-aligned bounds."""

    resolution: int
    bounds: tuple[np.ndarray, np.ndarray]
    values: np.ndarray  # (res+1, res+1, res+1)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        n = self.resolution + 1
        if self.values.shape != (n, n, n):
            raise ValueError(f"expected {(n, n, n)} values, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid values must be finite")

    def cell_size(self) -> np.ndarray:
        lo, hi = self.bounds
        return (hi - lo) / self.resolution

    def occupancy(self, iso: float = 0.0) -> int:
        """Number of lattice corners on the inside of the level set."""
        return int(np.count_nonzero(self.values < iso))


@dataclass
class IsoMesh:
    """Extracted level-set mesh with optional per-vertex normals."""

    vertices: np.ndarray  # (V, 3)
    triangles: np.ndarray  # (T, 3)
    normals: np.ndarray | None = None  # (V, 3)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.triangles.size and self.triangles.max() >= len(self.vertices):
            raise ValueError("triangle index out of range")

    def is_empty(self) -> bool:
        return len(self.triangles) == 0

    def write_obj(self, path) -> None:
        write_obj(path, self.vertices, self.triangles, self.normals)


def evaluate_grid(params: DecoderParams, z, resolution: int,
                  bounds=DEFAULT_BOUNDS, threads: int = 1) -> VoxelGrid:
    """Evaluate the decoder at every lattice corner (eval mode)."""
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    lo, hi = (np.asarray(b, dtype=np.float64) for b in bounds)
    n = resolution + 1
    axes = [np.linspace(lo[k], hi[k], n) for k in range(3)]
    yy, zz = np.meshgrid(axes[1], axes[2], indexing="ij")

    def eval_slab(ix: int) -> np.ndarray:
        pts = np.stack([np.full(yy.size, axes[0][ix]), yy.ravel(), zz.ravel()], axis=1)
        vals, _ = forward_batch(params, z, pts)
        return vals.reshape(n, n)

    slabs = parallel_map(eval_slab, range(n), threads)
    return VoxelGrid(resolution, (lo, hi), np.stack(slabs, axis=0))


def _trilinear(field: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Trilinear interpolation of a lattice field at fractional coordinates."""
    n = field.shape[0]
    c0 = np.clip(np.floor(coords).astype(np.int64), 0, n - 2)
    f = coords - c0
    out = np.zeros(len(coords))
    for dx in (0, 1):
        wx = f[:, 0] if dx else 1.0 - f[:, 0]
        for dy in (0, 1):
            wy = f[:, 1] if dy else 1.0 - f[:, 1]
            for dz in (0, 1):
                wz = f[:, 2] if dz else 1.0 - f[:, 2]
                out += wx * wy * wz * field[c0[:, 0] + dx, c0[:, 1] + dy, c0[:, 2] + dz]
    return out


def marching_cubes(grid: VoxelGrid, iso: float = 0.0) -> IsoMesh:
    """Triangulate the iso level set with the 256-case table.

    Vertices are welded by lattice edge, so shared cell edges produce shared
    vertices and the output is watertight wherever the field crosses the
    level transversally. Per-vertex normals come from the interpolated grid
    gradient. An empty mesh (no sign change) is valid output.
    """
    v = grid.values
    r = grid.resolution
    lo, hi = grid.bounds
    inside = v < iso
    case = np.zeros((r, r, r), dtype=np.int64)
    for k in range(8):
        cx, cy, cz = CORNERS[k]
        case |= inside[cx : r + cx, cy : r + cy, cz : r + cz].astype(np.int64) << k
    active = np.flatnonzero((case.ravel() != 0) & (case.ravel() != 255))
    if len(active) == 0:
        return IsoMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64),
                       np.zeros((0, 3)))
    case_flat = case.ravel()[active]
    cells = np.stack(np.unravel_index(active, (r, r, r)), axis=1)  # (A, 3)

    n = r + 1
    edge_keys_parts = []
    order = np.argsort(case_flat, kind="stable")
    case_sorted = case_flat[order]
    cells_sorted = cells[order]
    boundaries = np.flatnonzero(np.diff(case_sorted)) + 1
    groups = np.split(np.arange(len(case_sorted)), boundaries)
    for grp in groups:
        c = int(case_sorted[grp[0]])
        tris = TRI_TABLE[c]
        if not tris:
            continue
        edge_ids = np.asarray(tris, dtype=np.int64).ravel()  # (3*T,)
        cell_grp = cells_sorted[grp]  # (M, 3)
        # lattice edge = cell origin + per-edge offset, keyed with its axis
        coords = cell_grp[:, None, :] + EDGE_OFFSET[edge_ids][None, :, :]
        axis = EDGE_AXIS[edge_ids][None, :]
        keys = ((axis * n + coords[..., 0]) * n + coords[..., 1]) * n + coords[..., 2]
        edge_keys_parts.append(keys.reshape(-1, 3))
    tri_keys = np.vstack(edge_keys_parts)  # (T, 3) global edge keys
    uniq, inverse = np.unique(tri_keys.ravel(), return_inverse=True)
    triangles = inverse.reshape(-1, 3)

    # interpolate one vertex per unique lattice edge
    axis_u = uniq // (n * n * n)
    rem = uniq - axis_u * n * n * n
    ix = rem // (n * n)
    iy = (rem // n) % n
    iz = rem % n
    a_idx = np.stack([ix, iy, iz], axis=1)
    b_idx = a_idx.copy()
    b_idx[np.arange(len(uniq)), axis_u] += 1
    va = v[a_idx[:, 0], a_idx[:, 1], a_idx[:, 2]]
    vb = v[b_idx[:, 0], b_idx[:, 1], b_idx[:, 2]]
    t = (iso - va) / (vb - va)
    coords = a_idx.astype(np.float64)
    coords[np.arange(len(uniq)), axis_u] += t
    vertices = lo + coords * ((hi - lo) / r)

    # drop triangles collapsed by corner values exactly at the iso level
    ok = (
        (triangles[:, 0] != triangles[:, 1])
        & (triangles[:, 1] != triangles[:, 2])
        & (triangles[:, 0] != triangles[:, 2])
    )
    triangles = triangles[ok]

    gx, gy, gz = np.gradient(v)
    normals = np.stack(
        [_trilinear(g, coords) for g in (gx, gy, gz)], axis=1
    )
    lengths = np.linalg.norm(normals, axis=1, keepdims=True)
    normals = np.where(lengths > 1e-12, normals / np.where(lengths > 0, lengths, 1.0), 0.0)
    return IsoMesh(vertices, triangles, normals)


def extract_mesh(params: DecoderParams, z, resolution: int = 64,
                 bounds=DEFAULT_BOUNDS, iso: float = 0.0,
                 threads: int = 1) -> IsoMesh:
    """Grid-evaluate the decoder and extract the level set.

    Vertex normals are replaced by the decoder's analytic spatial gradient.
    """
    grid = evaluate_grid(params, z, resolution, bounds, threads)
    mesh = marching_cubes(grid, iso)
    if len(mesh.vertices):
        grad = spatial_gradient_batch(params, z, mesh.vertices)
        lengths = np.linalg.norm(grad, axis=1, keepdims=True)
        mesh.normals = np.where(lengths > 1e-12, grad / np.where(lengths > 0, lengths, 1.0), 0.0)
    return mesh


# ---------------------------------------------------------------------------
# Sphere tracing and rendering
# ---------------------------------------------------------------------------


def _ray_box_span(origins, dirs, half: float):
    """Entry/exit parameters of rays against [-half, half]^3 (slab method)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
    t1 = (-half - origins) * inv
    t2 = (half - origins) * inv
    t1, t2 = np.where(np.isnan(t1), -np.inf, t1), np.where(np.isnan(t2), np.inf, t2)
    t_near = np.max(np.minimum(t1, t2), axis=1)
    t_far = np.min(np.maximum(t1, t2), axis=1)
    return t_near, t_far


def sphere_trace_batch(params: DecoderParams, z, origins: np.ndarray,
                       dirs: np.ndarray, max_steps: int = 200,
                       surface_eps: float = 1e-3, min_step: float = 1e-4,
                       max_step: float = 0.1, refine_iters: int = 2):
    """March each ray by the (clamped) field value until the surface.

    Steps are clipped to [min_step, max_step]: the lower bound escapes the
    flat plateau the clamped training objective leaves far from the surface,
    the upper bound is the truncation band within which the field is
    trusted as a metric distance. Once a ray reaches f <= surface_eps the
    hit parameter is polished with Newton steps along the ray, removing the
    marching stop bias. Returns (hit mask, t, step counts).
    """
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    n = len(dirs)
    t_near, t_far = _ray_box_span(origins, dirs, TRACE_REGION)
    t = np.maximum(t_near, 0.0)
    alive = t_far > t
    hit = np.zeros(n, dtype=bool)
    steps = np.zeros(n, dtype=np.int64)
    for _ in range(max_steps):
        idx = np.flatnonzero(alive)
        if len(idx) == 0:
            break
        p = origins[idx] + t[idx, None] * dirs[idx]
        f, _ = forward_batch(params, z, p)
        f = f.astype(np.float64)
        steps[idx] += 1
        arrived = f <= surface_eps
        hit[idx[arrived]] = True
        alive[idx[arrived]] = False
        move = idx[~arrived]
        t[move] += np.clip(f[~arrived], min_step, max_step)
        alive[move] &= t[move] <= t_far[move]
    for _ in range(refine_iters if hit.any() else 0):
        p = origins[hit] + t[hit, None] * dirs[hit]
        f, tape = forward_batch(params, z, p)
        df = np.sum(backward_batch(tape, 1.0).x.astype(np.float64) * dirs[hit], axis=1)
        ok = np.abs(df) > 1e-6
        delta = np.where(ok, f.astype(np.float64) / np.where(ok, df, 1.0), 0.0)
        # never move past the last safe march interval
        t[hit] -= np.clip(delta, -max_step, max_step)
    return hit, t, steps


def sphere_trace(params: DecoderParams, z, origin, direction,
                 max_steps: int = 200, surface_eps: float = 1e-3,
                 min_step: float = 1e-4, max_step: float = 0.1):
    """Single-ray tracing: (hit point, steps) or None on a miss."""
    direction = np.asarray(direction, dtype=np.float64)
    if abs(np.linalg.norm(direction) - 1.0) > 1e-9:
        raise ValueError("ray direction must be unit length")
    hit, t, steps = sphere_trace_batch(
        params, z, np.reshape(origin, (1, 3)), direction.reshape(1, 3),
        max_steps, surface_eps, min_step, max_step,
    )
    if not hit[0]:
        return None
    point = np.asarray(origin, dtype=np.float64) + t[0] * direction
    return point, int(steps[0])


_RENDER_CHUNK = 4096  # fixed so output never depends on the thread count


def render(params: DecoderParams, z, camera: PinholeCamera,
           light_dir=None, threads: int = 1, surface_eps: float = 1e-3,
           max_steps: int = 200, max_step: float = 0.1) -> np.ndarray:
    """Sphere-traced Lambertian rendering, grayscale in [0, 1].

    Hit pixels are shaded with the analytic surface normal; misses are 0.
    Deterministic: two renders of the same inputs are bit-identical.
    """
    origin, dirs = camera.rays()
    if light_dir is None:
        light_dir = camera.position
    light = np.asarray(light_dir, dtype=np.float64)
    light = light / np.linalg.norm(light)

    chunks = [dirs[i : i + _RENDER_CHUNK] for i in range(0, len(dirs), _RENDER_CHUNK)]

    def shade(chunk: np.ndarray) -> np.ndarray:
        hit, t, _ = sphere_trace_batch(
            params, z, np.broadcast_to(origin, chunk.shape), chunk,
            max_steps, surface_eps, max_step=max_step,
        )
        values = np.zeros(len(chunk))
        if hit.any():
            pts = origin + t[hit, None] * chunk[hit]
            grad = spatial_gradient_batch(params, z, pts).astype(np.float64)
            lengths = np.linalg.norm(grad, axis=1, keepdims=True)
            normals = grad / np.where(lengths > 1e-12, lengths, 1.0)
            values[hit] = np.maximum(0.0, normals @ light)
        return values

    parts = parallel_map(shade, chunks, threads)
    return np.concatenate(parts).reshape(camera.height, camera.width)


def write_ppm(path, image: np.ndarray) -> None:
    """8-bit binary PPM (P6), grayscale replicated across RGB."""
    img = np.asarray(image, dtype=np.float64)
    u8 = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    rgb = np.repeat(u8[..., None], 3, axis=-1)
    with open(path, "wb") as f:
        f.write(f"P6\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        f.write(rgb.tobytes())


def interpolate_latents(z_a, z_b, t: float) -> np.ndarray:
    """Linear blend (1-t) * z_a + t * z_b of two codes of equal dimension."""
    z_a = np.asarray(z_a, dtype=np.float64)
    z_b = np.asarray(z_b, dtype=np.float64)
    if z_a.shape != z_b.shape:
        raise ValueError(f"latent dims differ: {z_a.shape} vs {z_b.shape}")
    if not 0.0 <= t <= 1.0:
        raise ValueError("t must lie in [0, 1]")
    return (1.0 - t) * z_a + t * z_b
