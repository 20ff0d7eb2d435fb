"""Data preparation: depth rendering, shell extraction, sample generation."""

import numpy as np
import numpy.testing as npt
import pytest

from sdfforge.cameras import make_camera
from sdfforge.errors import EmptyInputError
from sdfforge.geometry import (
    Box,
    NORMALIZED_RADIUS,
    Sphere,
    TriangleMesh,
    closest_on_triangles,
    cube_mesh,
    normalize_to_unit_sphere,
)
from sdfforge.sampling import (
    DepthMap,
    PrepConfig,
    SampleSet,
    accept_mesh,
    extract_shell,
    generate_samples,
    read_depth,
    read_samples,
    render_depth,
    render_depth_sdf,
    sample_analytic,
    uniform_ball_points,
    write_depth,
    write_samples,
)


def uv_sphere(radius: float, n_lat: int = 24, n_lon: int = 48) -> TriangleMesh:
    """Latitude/longitude sphere triangulation with exact-radius vertices."""
    verts = [(0.0, radius, 0.0), (0.0, -radius, 0.0)]
    rows = []
    for i in range(1, n_lat):
        phi = np.pi * i / n_lat
        row = []
        for j in range(n_lon):
            theta = 2 * np.pi * j / n_lon
            row.append(len(verts))
            verts.append((
                radius * np.sin(phi) * np.cos(theta),
                radius * np.cos(phi),
                radius * np.sin(phi) * np.sin(theta),
            ))
        rows.append(row)
    tris = []
    for j in range(n_lon):
        jn = (j + 1) % n_lon
        tris.append((0, rows[0][jn], rows[0][j]))
        tris.append((1, rows[-1][j], rows[-1][jn]))
    for i in range(len(rows) - 1):
        for j in range(n_lon):
            jn = (j + 1) % n_lon
            a, b = rows[i][j], rows[i][jn]
            c, d = rows[i + 1][j], rows[i + 1][jn]
            tris.append((a, b, d))
            tris.append((a, d, c))
    return TriangleMesh(np.array(verts), np.array(tris, dtype=np.int64))


SMALL_PREP = PrepConfig(n_cameras=26, depth_resolution=64, n_surface=4000, n_uniform=1500)


class TestRenderDepth:
    def test_sphere_center_pixel(self):
        r = NORMALIZED_RADIUS
        mesh = uv_sphere(r, 32, 64)
        cam = make_camera((0, 0, 2.0), 65, 65)  # odd size: exact central ray
        dm = render_depth(mesh, cam)
        center = dm.depth[32, 32]
        assert center == pytest.approx(2.0 - r, abs=5e-3)
        n = dm.normals[32, 32]
        npt.assert_allclose(n, [0, 0, 1], atol=0.05)  # faces the camera

    def test_empty_scene(self):
        mesh = TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), int))
        cam = make_camera((0, 0, 2.0), 16, 16)
        dm = render_depth(mesh, cam)
        assert dm.n_hits() == 0
        npt.assert_array_equal(dm.depth, 0.0)

    def test_cube_face_constant_plane_depth(self):
        mesh = cube_mesh(half_extent=0.3)
        cam = make_camera((0, 0, 2.0), 33, 33)
        dm = render_depth(mesh, cam)
        # pixels on the +z face: range * cos(angle to axis) = plane distance
        origin, dirs = cam.rays()
        hit = dm.hit_mask.ravel()
        z_depth = dm.depth.ravel()[hit] * np.abs(dirs[hit][:, 2])
        assert hit.sum() > 50
        npt.assert_allclose(z_depth, 1.7, atol=1e-6)

    def test_behind_camera_misses(self):
        mesh = cube_mesh(half_extent=0.3, center=(0, 0, 5.0))
        cam = make_camera((0, 0, 2.0), 16, 16)  # looking at origin, cube behind
        dm = render_depth(mesh, cam)
        assert dm.n_hits() == 0


class TestRenderDepthSdf:
    def test_matches_mesh_renderer_on_sphere(self):
        r = 0.6
        cam = make_camera((0.4, 1.2, 1.8), 48, 48)
        dm_sdf = render_depth_sdf(Sphere((0, 0, 0), r), cam)
        dm_mesh = render_depth(uv_sphere(r, 48, 96), cam)
        origin, dirs = cam.rays()
        dirs = dirs.reshape(48, 48, 3)
        # grazing rays amplify the mesh's inscribed-chord error; skip them
        frontal = np.sum(dm_sdf.normals * -dirs, axis=-1) > 0.5
        both = dm_sdf.hit_mask & dm_mesh.hit_mask & frontal
        assert both.sum() > 200
        npt.assert_allclose(dm_sdf.depth[both], dm_mesh.depth[both], atol=5e-3)

    def test_exact_sphere_depth(self):
        cam = make_camera((0, 0, 2.0), 33, 33)
        dm = render_depth_sdf(Sphere((0, 0, 0), 0.5), cam)
        assert dm.depth[16, 16] == pytest.approx(1.5, abs=1e-4)
        npt.assert_allclose(dm.normals[16, 16], [0, 0, 1], atol=1e-3)


class TestExtractShell:
    def test_sphere_fraction_and_radii(self):
        mesh, _, _ = normalize_to_unit_sphere(uv_sphere(1.0, 24, 48))
        shell, fraction = extract_shell(mesh, SMALL_PREP)
        assert fraction == 0.0
        radii = np.linalg.norm(shell.points, axis=1)
        assert np.median(np.abs(radii - NORMALIZED_RADIUS)) < 5e-3
        # normals point outward
        outward = np.sum(shell.points * shell.normals, axis=1)
        assert (outward > 0).mean() > 0.999

    def test_open_quad_fully_double_sided(self):
        verts = np.array([[-0.5, -0.5, 0], [0.5, -0.5, 0], [0.5, 0.5, 0], [-0.5, 0.5, 0.0]])
        mesh = TriangleMesh(verts, [[0, 1, 2], [0, 2, 3]])
        _, fraction = extract_shell(mesh, SMALL_PREP)
        assert fraction == 1.0

    def test_cube_plus_floating_quad(self):
        # closed cube (never double-sided) plus a detached open quad
        cube = cube_mesh(half_extent=0.35)
        quad_v = np.array([[0.7, -0.2, -0.2], [0.7, 0.2, -0.2], [0.7, 0.2, 0.2], [0.7, -0.2, 0.2]])
        verts = np.vstack([cube.vertices, quad_v])
        tris = np.vstack([cube.triangles, np.array([[8, 9, 10], [8, 10, 11]]) + 0])
        mesh = TriangleMesh(verts, tris)
        _, fraction = extract_shell(mesh, SMALL_PREP)
        assert fraction == pytest.approx(2 / 14, abs=1e-9)

    def test_invisible_surface(self):
        # zero-camera coverage: mesh far outside every view frustum
        mesh = cube_mesh(half_extent=0.1, center=(50, 0, 0))
        with pytest.raises(EmptyInputError):
            extract_shell(mesh, SMALL_PREP)

    def test_threads_do_not_change_result(self):
        mesh, _, _ = normalize_to_unit_sphere(cube_mesh())
        shell1, f1 = extract_shell(mesh, SMALL_PREP, threads=1)
        shell4, f4 = extract_shell(mesh, SMALL_PREP, threads=4)
        assert f1 == f4
        npt.assert_array_equal(shell1.points, shell4.points)


class TestAcceptMesh:
    def test_clean_mesh(self):
        assert accept_mesh(0.0, SMALL_PREP)

    def test_above_threshold_rejected(self):
        assert not accept_mesh(0.021, SMALL_PREP)

    def test_boundary_inclusive(self):
        assert accept_mesh(0.02, SMALL_PREP)

    def test_range_check(self):
        with pytest.raises(ValueError):
            accept_mesh(1.5, SMALL_PREP)


@pytest.fixture(scope="module")
def cube_samples():
    # shell density (cameras x resolution) bounds the oracle accuracy;
    # these are the production defaults
    mesh, _, _ = normalize_to_unit_sphere(cube_mesh())
    prep = PrepConfig(n_cameras=100, depth_resolution=128, n_surface=6000, n_uniform=2000)
    return mesh, prep, generate_samples(mesh, prep, seed=77, shape_id="cube")


class TestGenerateSamples:

    def test_counts(self, cube_samples):
        _, prep, samples = cube_samples
        assert len(samples) == 2 * prep.n_surface + prep.n_uniform
        assert samples.n_positive + samples.n_negative == len(samples)

    def test_determinism(self, cube_samples):
        mesh, prep, samples = cube_samples
        again = generate_samples(mesh, prep, seed=77, shape_id="cube")
        npt.assert_array_equal(samples.positions, again.positions)
        npt.assert_array_equal(samples.s, again.s)

    def test_sign_agreement_with_bruteforce(self, cube_samples):
        # all-triangle oracle: min distance over faces, sign from face normal
        mesh, _, samples = cube_samples
        rng = np.random.default_rng(5)
        take = rng.choice(len(samples), size=200, replace=False)
        pts = samples.positions[take].astype(np.float64)
        a, b, c = mesh.corners()
        normals = mesh.face_normals()
        agree = checked = 0
        for p, s_pipeline in zip(pts, samples.s[take]):
            cl = closest_on_triangles(p, a, b, c)
            d2 = np.sum((cl - p) ** 2, axis=1)
            k = int(np.argmin(d2))
            sign = 1.0 if np.dot(normals[k], p - cl[k]) >= 0 else -1.0
            s_brute = sign * np.sqrt(d2[k])
            if abs(s_brute) > 0.01:
                checked += 1
                if np.sign(s_brute) == np.sign(s_pipeline) and abs(s_brute - s_pipeline) <= 1e-3:
                    agree += 1
        assert checked > 100
        assert agree / checked >= 0.99

    def test_near_surface_concentration(self, cube_samples):
        _, prep, samples = cube_samples
        band = 3 * np.sqrt(max(prep.perturb_variances))
        assert np.mean(np.abs(samples.s) < band) >= 0.90

    def test_uniform_ball_mean_norm(self):
        pts = uniform_ball_points(20_000, np.random.default_rng(8))
        assert np.linalg.norm(pts, axis=1).mean() == pytest.approx(0.75, abs=0.02)
        assert np.linalg.norm(pts, axis=1).max() <= 1.0


class TestSampleAnalytic:
    def test_values_exact(self):
        shape = Box([0.3, 0.4, 0.25])
        prep = PrepConfig(n_surface=2000, n_uniform=500)
        samples = sample_analytic(shape, prep, seed=3, shape_id="box")
        s_true = shape.sdf(samples.positions.astype(np.float64))
        npt.assert_allclose(samples.s, s_true, atol=1e-6)

    def test_sphere_perturbation_sign(self):
        # points pushed outward along the normal get positive distances
        shape = Sphere((0, 0, 0), 0.5)
        prep = PrepConfig(n_surface=1000, n_uniform=100)
        samples = sample_analytic(shape, prep, seed=4, shape_id="s")
        r = np.linalg.norm(samples.positions, axis=1)
        npt.assert_allclose(samples.s, r - 0.5, atol=1e-6)


class TestSampleSetIO:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(1)
        samples = SampleSet("thing", rng.uniform(-1, 1, (500, 3)), rng.uniform(-1, 1, 500))
        path = tmp_path / "thing.sdfs"
        write_samples(path, samples)
        back = read_samples(path, shape_id="thing")
        assert back.shape_id == "thing"
        npt.assert_array_equal(back.positions, samples.positions)
        npt.assert_array_equal(back.s, samples.s)
        assert back.n_positive == samples.n_positive

    def test_validation(self):
        with pytest.raises(ValueError):
            SampleSet("", np.zeros((1, 3)), np.zeros(1))
        with pytest.raises(ValueError):
            SampleSet("x", np.zeros((1, 3)), np.array([3.0]))  # beyond diameter bound
        with pytest.raises(ValueError):
            SampleSet("x", np.full((1, 3), np.nan), np.zeros(1))


class TestDepthIO:
    def test_roundtrip(self, tmp_path):
        cam = make_camera((0.3, 0.8, 1.9), 24, 20)
        dm = render_depth_sdf(Sphere((0, 0, 0), 0.6), cam)
        assert dm.n_hits() > 0
        path = tmp_path / "view.dpth"
        write_depth(path, dm)
        back = read_depth(path)
        assert back.camera.width == 24 and back.camera.height == 20
        npt.assert_allclose(back.depth, dm.depth, atol=1e-5)
        npt.assert_allclose(back.normals, dm.normals, atol=1e-5)
        npt.assert_allclose(back.camera.rotation, cam.rotation, atol=1e-6)

    def test_depthmap_validation(self):
        cam = make_camera((0, 0, 2), 4, 4)
        with pytest.raises(ValueError):
            DepthMap(cam, np.ones((4, 4)), np.zeros((4, 4, 3)))  # hits need unit normals
