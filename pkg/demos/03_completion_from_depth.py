"""Complete a shape the decoder has never seen from one depth view.

A family model is trained, a held-out box is rendered into a single range
image, and the latent code is optimized to explain the visible surface plus
the free space along the camera rays. The code then reproduces the whole
shape, including everything the camera never saw.

Run:  python3 demos/03_completion_from_depth.py
"""

import pathlib

import numpy as np

from sdfforge import (
    Box,
    CompletionConfig,
    NetConfig,
    PrepConfig,
    TrainConfig,
    TriangleMesh,
    chamfer,
    complete_shape,
    depth_to_observation,
    extract_mesh,
    make_camera,
    perturb_depth,
    render_depth_sdf,
    sample_analytic,
    sample_mesh_surface_even,
    train_auto_decoder,
)
from sdfforge.families import make_family

out = pathlib.Path(__file__).parent / "out"
out.mkdir(exist_ok=True)

members = make_family("boxes", 8)
prep = PrepConfig(n_surface=4000, n_uniform=1600)
sets = [sample_analytic(m.shape, prep, seed=100 + i, shape_id=m.shape_id)
        for i, m in enumerate(members)]
net = NetConfig(latent_dim=8, hidden_width=128, n_layers=4, skip_layers=(),
                dropout_rate=0.0, seed=1)
cfg = TrainConfig(delta=0.1, decoder_lr=1e-3, latent_lr=1e-3, reg_weight=1e-4,
                  samples_per_step=1024, epochs=600, seed=2)
print("training the family prior ...")
params, codebook, _ = train_auto_decoder(sets, net, cfg)

target = Box([0.43, 0.35, 0.30])  # between training members, never trained on
camera = make_camera((1.4, 1.1, 1.7), 128, 128)
depth = render_depth_sdf(target, camera)
print(f"one depth view: {depth.n_hits()} of {128 * 128} pixels see the box")

obs = depth_to_observation(depth, eta=0.005, free_points_per_ray=2, seed=7)
print(f"observation: {len(obs.positions)} SDF samples, "
      f"{len(obs.free_points)} free-space points")

fit = complete_shape(params, obs, CompletionConfig(eta=0.005, iterations=600, seed=11))
mesh = extract_mesh(params, fit.z, 64)
mesh.write_obj(out / "completed.obj")

rng = np.random.default_rng(3)
p1 = sample_mesh_surface_even(TriangleMesh(mesh.vertices, mesh.triangles), 2000, rng)
p2 = target.sample_surface_even(2000, rng)
print(f"completed mesh vs hidden ground truth: chamfer {chamfer(p1, p2):.2e}")

print("same view with simulated sensor noise (inverse-depth stddev 0.02) ...")
noisy = perturb_depth(depth, alpha=0.02, seed=5)
obs_noisy = depth_to_observation(noisy, eta=0.005, free_points_per_ray=2, seed=7)
fit_noisy = complete_shape(params, obs_noisy,
                           CompletionConfig(eta=0.005, iterations=600, seed=11))
mesh_noisy = extract_mesh(params, fit_noisy.z, 64)
mesh_noisy.write_obj(out / "completed_noisy.obj")
p1n = sample_mesh_surface_even(TriangleMesh(mesh_noisy.vertices, mesh_noisy.triangles),
                               2000, rng)
print(f"noisy completion chamfer {chamfer(p1n, p2):.2e}")
print(f"wrote {out / 'completed.obj'} and {out / 'completed_noisy.obj'}")
