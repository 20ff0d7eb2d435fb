"""Learned continuous signed distance fields.

A latent-code-conditioned feed-forward decoder is trained as an auto-decoder
to represent whole families of shapes as continuous SDFs, then used for
reconstruction, completion from single-view depth, mesh extraction, sphere-
traced rendering, and quantitative evaluation.
"""

from .cameras import PinholeCamera, make_camera
from .decoder import (
    DecoderParams,
    ForwardTape,
    LatentCodebook,
    NetConfig,
    backward,
    backward_batch,
    forward,
    forward_batch,
    init_params,
    read_checkpoint,
    spatial_gradient,
    spatial_gradient_batch,
    write_checkpoint,
)
from .geometry import (
    AnalyticShape,
    Box,
    KdTree3,
    OrientedPoint,
    OrientedPointCloud,
    Sphere,
    Torus,
    Transformed,
    TriangleBvh,
    TriangleMesh,
    cube_mesh,
    fibonacci_sphere,
    load_obj,
    normalize_to_unit_sphere,
    point_triangle_distance,
    farthest_point_thin,
    sample_mesh_surface,
    sample_mesh_surface_even,
    signed_distance_oracle,
    write_obj,
)
from .inference import (
    CompletionConfig,
    LatentFit,
    PartialObservation,
    complete_shape,
    depth_to_observation,
    estimate_latent,
    freespace_loss,
    perturb_depth,
)
from .metrics import chamfer, cosine_similarity, emd, mesh_accuracy, mesh_completion
from .sampling import (
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
    write_depth,
    write_samples,
)
from .surfacing import (
    IsoMesh,
    VoxelGrid,
    evaluate_grid,
    extract_mesh,
    interpolate_latents,
    marching_cubes,
    render,
    sphere_trace,
    sphere_trace_batch,
    write_ppm,
)
from .training import (
    AdamState,
    LossRecord,
    TrainConfig,
    adam_step,
    clamp,
    clamped_l1,
    make_balanced_batch,
    train_auto_decoder,
    train_single_shape,
)

__version__ = "0.1.0"
