"""Evaluation metrics against brute-force oracles."""

import itertools
import logging

import numpy as np
import numpy.testing as npt
import pytest

from sdfforge.errors import EmptyInputError
from sdfforge.geometry import Sphere, TriangleMesh, cube_mesh, sample_mesh_surface
from sdfforge.metrics import (
    chamfer,
    cosine_similarity,
    emd,
    mesh_accuracy,
    mesh_completion,
    point_mesh_distances,
)
from tests.test_sampling import uv_sphere


class TestChamfer:
    def test_identical_sets(self):
        pts = np.random.default_rng(0).normal(size=(100, 3))
        assert chamfer(pts, pts) == 0.0

    def test_symmetric(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=(50, 3))
        b = rng.normal(size=(50, 3))
        assert chamfer(a, b) == pytest.approx(chamfer(b, a), rel=1e-12)

    def test_singleton_pair(self):
        d = 0.37
        assert chamfer([[0, 0, 0]], [[d, 0, 0]]) == pytest.approx(2 * d * d)

    def test_translation_invariance_joint(self):
        rng = np.random.default_rng(2)
        a = rng.normal(size=(40, 3))
        b = rng.normal(size=(40, 3))
        t = np.array([0.3, -1.0, 2.0])
        assert chamfer(a + t, b + t) == pytest.approx(chamfer(a, b), rel=1e-9)

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            chamfer(np.zeros((3, 3)), np.zeros((4, 3)))

    def test_empty(self):
        with pytest.raises(EmptyInputError):
            chamfer(np.zeros((0, 3)), np.zeros((0, 3)))


class TestEmd:
    def test_identical_sets(self):
        pts = np.random.default_rng(0).normal(size=(64, 3))
        assert emd(pts, pts) == pytest.approx(0.0, abs=1e-12)

    def test_permutation_invariance(self):
        a = np.array([[0, 0, 0], [1, 0, 0.0]])
        b = np.array([[1, 0, 0], [0, 0, 0.0]])
        assert emd(a, b) == pytest.approx(0.0, abs=1e-12)

    def test_factorial_bruteforce(self):
        # exact equality with exhaustive assignment enumeration, n <= 6
        rng = np.random.default_rng(3)
        for trial in range(50):
            n = int(rng.integers(2, 7))
            a = rng.normal(size=(n, 3))
            b = rng.normal(size=(n, 3))
            cost = np.linalg.norm(a[:, None] - b[None, :], axis=-1)
            brute = min(
                sum(cost[i, p[i]] for i in range(n))
                for p in itertools.permutations(range(n))
            ) / n
            assert emd(a, b) == pytest.approx(brute, abs=1e-12)

    def test_translation_invariance_joint(self):
        rng = np.random.default_rng(4)
        a = rng.normal(size=(20, 3))
        b = rng.normal(size=(20, 3))
        t = np.array([5.0, 0.1, -2.0])
        assert emd(a + t, b + t) == pytest.approx(emd(a, b), rel=1e-9)

    def test_size_cap(self):
        pts = np.zeros((2001, 3))
        with pytest.raises(ValueError):
            emd(pts, pts)


class TestMeshAccuracy:
    def test_self_samples(self):
        mesh = cube_mesh()
        pts = sample_mesh_surface(mesh, 1000, np.random.default_rng(0))
        assert mesh_accuracy(pts, mesh) <= 1e-9

    def test_plane_percentile(self):
        # points at z = i/1000 above the plane z = 0: nearest-rank 90th = 0.900
        verts = np.array([[-5, -5, 0], [5, -5, 0], [5, 5, 0], [-5, 5, 0.0]])
        plane = TriangleMesh(verts, [[0, 1, 2], [0, 2, 3]])
        pts = np.array([[0.0, 0.0, i / 1000] for i in range(1, 1001)])
        assert mesh_accuracy(pts, plane) == pytest.approx(0.900, abs=1e-12)

    def test_monotone_in_percentile(self):
        rng = np.random.default_rng(5)
        mesh = cube_mesh()
        pts = rng.uniform(-1, 1, size=(500, 3))
        values = [mesh_accuracy(pts, mesh, percentile=p) for p in (50, 90, 100)]
        assert values[0] <= values[1] <= values[2]

    def test_translation_lipschitz(self):
        rng = np.random.default_rng(6)
        mesh = cube_mesh()
        pts = rng.uniform(-1, 1, size=(200, 3))
        t = np.array([0.05, -0.02, 0.04])
        base = mesh_accuracy(pts, mesh)
        moved = mesh_accuracy(pts + t, mesh)
        assert abs(moved - base) <= np.linalg.norm(t) + 1e-12


class TestMeshCompletion:
    def test_self_is_complete(self):
        mesh = cube_mesh()
        pts = sample_mesh_surface(mesh, 1000, np.random.default_rng(1))
        assert mesh_completion(mesh, pts, delta=0.01) == 1.0

    def test_diameter_bound(self):
        mesh = cube_mesh()
        rng = np.random.default_rng(2)
        pts = rng.uniform(-1, 1, size=(200, 3))
        assert mesh_completion(mesh, pts, delta=2.0) == 1.0

    def test_hemisphere_is_half(self):
        full = uv_sphere(0.5, 32, 64)
        gt_pts, _ = Sphere((0, 0, 0), 0.5).sample_surface(4000, np.random.default_rng(3))
        keep = np.all(full.vertices[full.triangles][:, :, 1] >= -1e-9, axis=1)
        hemi = TriangleMesh(full.vertices, full.triangles[keep])
        frac = mesh_completion(hemi, gt_pts, delta=0.01)
        assert frac == pytest.approx(0.5, abs=0.05)

    def test_empty_mesh_scores_zero(self, caplog):
        empty = TriangleMesh(np.zeros((1, 3)), np.zeros((0, 3), int))
        with caplog.at_level(logging.WARNING):
            score = mesh_completion(empty, np.zeros((5, 3)), delta=0.01)
        assert score == 0.0
        assert any("empty" in r.message for r in caplog.records)


class TestCosineSimilarity:
    def test_self_normals(self):
        mesh = uv_sphere(0.6, 24, 48)
        pts, normals = sample_mesh_surface(mesh, 2500, np.random.default_rng(4),
                                           with_normals=True)
        assert cosine_similarity(mesh, pts, normals) >= 0.999

    def test_cube_worse_than_sphere(self):
        sphere_gt = Sphere((0, 0, 0), 0.6)
        pts, normals = sphere_gt.sample_surface(2500, np.random.default_rng(5))
        good = cosine_similarity(uv_sphere(0.6, 24, 48), pts, normals)
        bad = cosine_similarity(cube_mesh(half_extent=0.6 / np.sqrt(3)), pts, normals)
        assert bad < good

    def test_orientation_agnostic(self):
        mesh = uv_sphere(0.5, 16, 32)
        flipped = TriangleMesh(mesh.vertices, mesh.triangles[:, ::-1])
        pts, normals = sample_mesh_surface(mesh, 500, np.random.default_rng(6),
                                           with_normals=True)
        a = cosine_similarity(mesh, pts, normals)
        b = cosine_similarity(flipped, pts, normals)
        assert a == pytest.approx(b, abs=1e-12)

    def test_missing_normals_rejected(self):
        mesh = cube_mesh()
        with pytest.raises(ValueError):
            cosine_similarity(mesh, np.zeros((5, 3)), None)


class TestPointMeshDistance:
    def test_matches_known_values(self):
        mesh = cube_mesh(half_extent=0.5)
        d = point_mesh_distances([[2.0, 0, 0], [0.0, 0, 0], [0.7, 0.7, 0.7]], mesh)
        npt.assert_allclose(d, [1.5, 0.5, np.linalg.norm([0.2, 0.2, 0.2])], atol=1e-12)
