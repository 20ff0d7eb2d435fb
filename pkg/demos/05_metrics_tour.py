"""What the evaluation metrics measure, on shapes where the answer is known.

Run:  python3 demos/05_metrics_tour.py
"""

import numpy as np

from sdfforge import (
    Sphere,
    TriangleMesh,
    chamfer,
    cosine_similarity,
    cube_mesh,
    emd,
    mesh_accuracy,
    mesh_completion,
    sample_mesh_surface,
)
from sdfforge.families import analytic_gt_mesh

rng = np.random.default_rng(0)
sphere = Sphere((0.0, 0.0, 0.0), 0.5)
sphere_mesh = analytic_gt_mesh(sphere, 64)
sphere_tri = TriangleMesh(sphere_mesh.vertices, sphere_mesh.triangles)
cube = cube_mesh(half_extent=0.5 / np.sqrt(3))  # same bounding radius

print("-- chamfer: squared nearest-neighbor error, both directions, per point")
a, _ = sphere.sample_surface(2000, rng)
b, _ = sphere.sample_surface(2000, rng)
print(f"   sphere vs itself (sampling noise floor): {chamfer(a, b):.2e}")
c = sample_mesh_surface(cube, 2000, rng)
print(f"   sphere vs same-radius cube:              {chamfer(a, c):.2e}")

print("-- earth mover's distance: exact optimal matching, per point")
a5, _ = sphere.sample_surface(500, rng)
b5, _ = sphere.sample_surface(500, rng)
c5 = sample_mesh_surface(cube, 500, rng)
print(f"   sphere vs sphere: {emd(a5, b5):.3f}   sphere vs cube: {emd(a5, c5):.3f}")

print("-- mesh accuracy: 90th-percentile distance of generated points to the gt mesh")
own = sample_mesh_surface(sphere_tri, 1000, rng)
print(f"   sphere mesh against itself: {mesh_accuracy(own, sphere_tri):.2e}")
shifted = own + np.array([0.02, 0.0, 0.0])
print(f"   same points shifted 0.02:   {mesh_accuracy(shifted, sphere_tri):.4f}")

print("-- mesh completion: fraction of gt points within 0.01 of the generated mesh")
gt_pts, gt_normals = sphere.sample_surface(2000, rng)
print(f"   full sphere mesh:  {mesh_completion(sphere_tri, gt_pts):.3f}")
upper = np.all(sphere_tri.vertices[sphere_tri.triangles][:, :, 1] >= -1e-9, axis=1)
hemisphere = TriangleMesh(sphere_tri.vertices, sphere_tri.triangles[upper])
print(f"   upper hemisphere:  {mesh_completion(hemisphere, gt_pts):.3f}")

print("-- cosine similarity: orientation-agnostic normal agreement at nearest faces")
print(f"   sphere mesh vs sphere normals: {cosine_similarity(sphere_tri, gt_pts, gt_normals):.3f}")
print(f"   cube mesh vs sphere normals:   {cosine_similarity(cube, gt_pts, gt_normals):.3f}")
