"""Level-set extraction, sphere tracing, rendering, interpolation."""

import numpy as np
import numpy.testing as npt
import pytest

from sdfforge.cameras import make_camera
from sdfforge.decoder import NetConfig, forward_batch, init_params
from sdfforge.geometry import Sphere, Torus
from sdfforge.metrics import chamfer
from sdfforge.geometry import TriangleMesh, sample_mesh_surface
from sdfforge.surfacing import (
    IsoMesh,
    VoxelGrid,
    evaluate_grid,
    interpolate_latents,
    marching_cubes,
    render,
    sphere_trace,
    sphere_trace_batch,
    write_ppm,
)

BOUNDS = (np.array([-1.0, -1.0, -1.0]), np.array([1.0, 1.0, 1.0]))


def analytic_grid(shape, res):
    lin = np.linspace(-1, 1, res + 1)
    X, Y, Z = np.meshgrid(lin, lin, lin, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    return VoxelGrid(res, BOUNDS, shape.sdf(pts).reshape(res + 1, res + 1, res + 1))


def constant_net(value: float, latent_dim: int = 2):
    """Decoder whose output is tanh(bias) = value everywhere."""
    cfg = NetConfig(latent_dim=latent_dim, hidden_width=8, n_layers=2, skip_layers=(),
                    dropout_rate=0.0, seed=0)
    params = init_params(cfg, dtype=np.float64)
    for g in params.g:
        g[:] = 0.0
    params.b[-1][0] = np.arctanh(value)
    return params


def plane_net(normal, offset: float):
    """Decoder computing tanh(dot(normal, x) - offset): a planar level set."""
    cfg = NetConfig(latent_dim=0, hidden_width=8, n_layers=2, skip_layers=(),
                    dropout_rate=0.0, seed=0)
    params = init_params(cfg, dtype=np.float64)
    n = np.asarray(normal, dtype=np.float64)
    for v, g, b in zip(params.v, params.g, params.b):
        v[:] = 1e-9
        g[:] = 0.0
        b[:] = 0.0
    # relu(u) - relu(-u) = u passes the signed plane coordinate through
    params.v[0][0] = n
    params.v[0][1] = -n
    params.g[0][:2] = np.linalg.norm(n)
    params.v[1][0, :2] = [1.0, -1.0]
    params.g[1][0] = np.sqrt(2.0)
    params.b[1][0] = -offset
    return params


def edge_counts(mesh: IsoMesh):
    t = mesh.triangles
    e = np.sort(np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
    return np.unique(e, axis=0, return_counts=True)


class TestVoxelGrid:
    def test_shape_validation(self):
        with pytest.raises(ValueError):
            VoxelGrid(4, BOUNDS, np.zeros((4, 4, 4)))

    def test_occupancy(self):
        values = np.ones((5, 5, 5))
        values[:2] = -1.0  # two full x-slabs inside
        grid = VoxelGrid(4, BOUNDS, values)
        assert grid.occupancy() == 2 * 25
        assert VoxelGrid(4, BOUNDS, np.ones((5, 5, 5))).occupancy() == 0


class TestEvaluateGrid:
    def test_constant_net(self):
        params = constant_net(0.25)
        grid = evaluate_grid(params, np.zeros(2), 8)
        npt.assert_allclose(grid.values, 0.25, atol=1e-7)
        assert grid.values.shape == (9, 9, 9)

    def test_thread_invariance(self):
        cfg = NetConfig(latent_dim=2, hidden_width=16, n_layers=3, skip_layers=(), seed=1)
        params = init_params(cfg)
        z = np.array([0.1, -0.2])
        g1 = evaluate_grid(params, z, 12, threads=1)
        g4 = evaluate_grid(params, z, 12, threads=4)
        npt.assert_array_equal(g1.values, g4.values)

    def test_resolution_floor(self):
        with pytest.raises(ValueError):
            evaluate_grid(constant_net(0.1), np.zeros(2), 1)


class TestMarchingCubes:
    def test_all_positive_empty(self):
        grid = VoxelGrid(4, BOUNDS, np.ones((5, 5, 5)))
        mesh = marching_cubes(grid)
        assert mesh.is_empty()

    def test_sphere_vertex_radii(self):
        mesh = marching_cubes(analytic_grid(Sphere((0, 0, 0), 0.5), 64))
        radii = np.linalg.norm(mesh.vertices, axis=1)
        cell_diag = np.sqrt(3) * (2 / 64)
        assert np.all(np.abs(radii - 0.5) <= cell_diag)

    def test_watertight_on_transverse_fields(self):
        for shape, res, chi in [
            (Sphere((0, 0, 0), 0.5), 24, 2),
            (Torus(0.55, 0.2), 40, 0),
        ]:
            mesh = marching_cubes(analytic_grid(shape, res))
            uniq, counts = edge_counts(mesh)
            assert set(counts.tolist()) == {2}  # closed surface
            euler = len(mesh.vertices) - len(uniq) + len(mesh.triangles)
            assert euler == chi

    def test_single_negative_corner_octahedron(self):
        values = np.ones((5, 5, 5))
        values[2, 2, 2] = -1.0
        mesh = marching_cubes(VoxelGrid(4, BOUNDS, values))
        assert len(mesh.triangles) == 8
        uniq, counts = edge_counts(mesh)
        assert len(mesh.vertices) - len(uniq) + len(mesh.triangles) == 2

    def test_vertex_residual_bounded_by_cell_gap(self):
        shape = Sphere((0, 0, 0), 0.5)
        grid = analytic_grid(shape, 32)
        mesh = marching_cubes(grid)
        v = grid.values
        gaps = np.zeros((32, 32, 32))
        for cx in (0, 1):
            for cy in (0, 1):
                for cz in (0, 1):
                    corner = v[cx : 32 + cx, cy : 32 + cy, cz : 32 + cz]
                    gaps = np.maximum(gaps, corner)
        mins = np.full((32, 32, 32), np.inf)
        for cx in (0, 1):
            for cy in (0, 1):
                for cz in (0, 1):
                    corner = v[cx : 32 + cx, cy : 32 + cy, cz : 32 + cz]
                    mins = np.minimum(mins, corner)
        max_gap = (gaps - mins).max()
        residual = np.abs(shape.sdf(mesh.vertices))
        assert residual.max() <= max_gap

    def test_normals_outward_on_sphere(self):
        mesh = marching_cubes(analytic_grid(Sphere((0, 0, 0), 0.5), 32))
        radial = mesh.vertices / np.linalg.norm(mesh.vertices, axis=1, keepdims=True)
        agree = np.sum(mesh.normals * radial, axis=1)
        assert np.min(agree) > 0.9

    def test_resolution_convergence(self):
        shape = Torus(0.5, 0.22)
        rng = np.random.default_rng(0)
        meshes = {
            res: marching_cubes(analytic_grid(shape, res)) for res in (16, 32, 64)
        }
        pts = {
            res: sample_mesh_surface(TriangleMesh(m.vertices, m.triangles), 2000,
                                     np.random.default_rng(1))
            for res, m in meshes.items()
        }
        coarse = chamfer(pts[16], pts[32])
        fine = chamfer(pts[32], pts[64])
        assert fine < coarse

    def test_obj_roundtrip(self, tmp_path):
        from sdfforge.geometry import load_obj

        mesh = marching_cubes(analytic_grid(Sphere((0, 0, 0), 0.4), 12))
        path = tmp_path / "iso.obj"
        mesh.write_obj(path)
        back = load_obj(path)
        assert back.n_vertices == len(mesh.vertices)
        npt.assert_allclose(back.vertices, mesh.vertices, atol=1e-6)


class TestSphereTrace:
    def test_plane_hit_position(self):
        # level set at x = 0.3, positive side x > 0.3; march down the x axis
        params = plane_net([1.0, 0.0, 0.0], 0.3)
        result = sphere_trace(params, None, [1.0, 0.05, 0.0], [-1.0, 0.0, 0.0],
                              max_steps=500, surface_eps=1e-4)
        assert result is not None
        point, steps = result
        assert point[0] == pytest.approx(0.3, abs=2e-4)
        assert steps <= 500

    def test_miss_leaves_region(self):
        params = plane_net([1.0, 0.0, 0.0], 0.9)
        # ray parallel to the plane on its positive side: constant field
        result = sphere_trace(params, None, [1.0, 0.5, 0.0], [0.0, 0.0, 1.0])
        assert result is None

    def test_hits_satisfy_surface_eps(self):
        params = plane_net([0.0, 1.0, 0.0], 0.1)
        rng = np.random.default_rng(0)
        origins = np.column_stack([
            rng.uniform(-0.5, 0.5, 32),
            np.full(32, 1.0),
            rng.uniform(-0.5, 0.5, 32),
        ])
        dirs = np.tile([0.0, -1.0, 0.0], (32, 1))
        hit, t, steps = sphere_trace_batch(params, None, origins, dirs,
                                           max_steps=400, surface_eps=1e-3)
        assert hit.all()
        pts = origins + t[:, None] * dirs
        f, _ = forward_batch(params, None, pts)
        assert np.all(f <= 1e-3)

    def test_requires_unit_direction(self):
        params = plane_net([1, 0, 0], 0.0)
        with pytest.raises(ValueError):
            sphere_trace(params, None, [0, 0, 0], [2.0, 0.0, 0.0])


class TestRender:
    def test_constant_positive_net_is_background(self):
        params = constant_net(0.3)
        cam = make_camera((0, 0, 2), 16, 16)
        img = render(params, np.zeros(2), cam)
        npt.assert_array_equal(img, 0.0)

    def test_bit_identical_across_runs_and_threads(self, tmp_path):
        params = plane_net([0.0, 0.0, 1.0], 0.2)
        cam = make_camera((0, 0, 2), 32, 32)
        paths = []
        for tag, threads in (("a", 1), ("b", 4), ("c", 1)):
            img = render(params, None, cam, threads=threads)
            p = tmp_path / f"{tag}.ppm"
            write_ppm(p, img)
            paths.append(p)
        assert paths[0].read_bytes() == paths[1].read_bytes() == paths[2].read_bytes()

    def test_frontal_plane_is_lit(self):
        params = plane_net([0.0, 0.0, 1.0], 0.2)
        cam = make_camera((0, 0, 2), 17, 17)
        img = render(params, None, cam)
        # facing plane with headlight: strong response in the image center
        assert img[8, 8] > 0.9

    def test_ppm_format(self, tmp_path):
        img = np.linspace(0, 1, 12).reshape(3, 4)
        path = tmp_path / "img.ppm"
        write_ppm(path, img)
        data = path.read_bytes()
        assert data.startswith(b"P6\n4 3\n255\n")
        assert len(data) == len(b"P6\n4 3\n255\n") + 3 * 12


class TestInterpolateLatents:
    def test_endpoints(self):
        a = np.array([1.0, 2.0, 3.0])
        b = np.array([-1.0, 0.0, 5.0])
        npt.assert_array_equal(interpolate_latents(a, b, 0.0), a)
        npt.assert_array_equal(interpolate_latents(a, b, 1.0), b)

    def test_symmetric_zero(self):
        a = np.array([0.5, -0.25])
        npt.assert_allclose(interpolate_latents(a, -a, 0.5), 0.0, atol=1e-15)

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            interpolate_latents(np.zeros(3), np.zeros(4), 0.5)

    def test_t_out_of_range(self):
        with pytest.raises(ValueError):
            interpolate_latents(np.zeros(2), np.zeros(2), 1.5)
