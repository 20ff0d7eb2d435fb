"""Latent estimation against a frozen decoder.

A shape code is recovered from arbitrary SDF point samples by minimizing the
clamped-L1 data term plus the squared-norm prior with Adam over the code
alone. Depth observations are turned into sample pairs straddling the
measured surface plus free-space points along the camera rays, optionally
degraded by an inverse-depth noise model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .decoder import DecoderParams, backward_batch, forward_batch
from .errors import EmptyInputError, NumericFault
from .sampling import DepthMap, SampleSet
from .training import AdamState, adam_step, clamped_l1, clamped_l1_grad

# ---------------------------------------------------------------------------
# Observations
# ---------------------------------------------------------------------------


@dataclass
class PartialObservation:
    """SDF point samples plus free-space constraint points.

    The sample values are +/- eta around the observed surface; free points
    are locations known to lie between camera and surface, where the field
    must be nonnegative.
    """

    positions: np.ndarray  # (N, 3)
    s: np.ndarray  # (N,)
    free_points: np.ndarray  # (M, 3), may be empty

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.s = np.asarray(self.s, dtype=np.float64).reshape(-1)
        self.free_points = np.asarray(self.free_points, dtype=np.float64).reshape(-1, 3)
        if len(self.positions) != len(self.s):
            raise ValueError("positions and s must have equal length")

    def without_free_points(self) -> "PartialObservation":
        return PartialObservation(self.positions, self.s, np.zeros((0, 3)))


@dataclass
class CompletionConfig:
    """Knobs for completion from a single depth view.

    The clamp for the data term equals eta, since sample values only carry
    information that close to the surface. points_per_iter caps the stochastic
    minibatch used per Adam iteration.
    """

    eta: float = 0.005
    iterations: int = 800
    latent_lr: float = 5e-3
    reg_weight: float = 1e-4
    free_points_per_ray: int = 2
    latent_init_stddev: float = 0.01
    points_per_iter: int = 4096
    use_freespace: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.iterations < 1:
            raise ValueError("need at least one iteration")
        if self.latent_lr <= 0 or self.reg_weight < 0:
            raise ValueError("bad learning rate or regularizer")


def freespace_loss(pred):
    """Penalty for predicting inside-surface at a known-empty point."""
    return np.maximum(0.0, -np.asarray(pred))


def freespace_loss_grad(pred):
    return np.where(np.asarray(pred) < 0.0, -1.0, 0.0)


def depth_to_observation(depth_map: DepthMap, eta: float,
                         free_points_per_ray: int = 2,
                         seed: int = 0) -> PartialObservation:
    """Convert a depth map into SDF samples and free-space points.

    Every hit pixel yields two samples at p +/- eta * normal with values
    +eta / -eta, and free_points_per_ray points uniform along the camera ray
    in (0.05 d, 0.95 d) where d is the pixel depth.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    hit = depth_map.hit_mask
    if not hit.any():
        raise EmptyInputError("depth map has no hit pixels")
    origin, dirs = depth_map.camera.rays()
    dirs = dirs.reshape(depth_map.depth.shape + (3,))
    d = depth_map.depth[hit][:, None]
    surf = origin + d * dirs[hit]
    normals = depth_map.normals[hit]
    positions = np.vstack([surf + eta * normals, surf - eta * normals])
    s = np.concatenate([np.full(len(surf), eta), np.full(len(surf), -eta)])
    rng = np.random.default_rng(seed)
    if free_points_per_ray > 0:
        t = rng.uniform(0.05, 0.95, size=(len(surf), free_points_per_ray)) * d
        free = (origin + t[..., None] * dirs[hit][:, None, :]).reshape(-1, 3)
    else:
        free = np.zeros((0, 3))
    return PartialObservation(positions, s, free)


def perturb_depth(depth_map: DepthMap, alpha: float, seed: int = 0) -> DepthMap:
    """Gaussian noise of stddev alpha on the inverse depth of hit pixels.

    Draws whose perturbed inverse depth would be nonpositive are resampled.
    Misses and normals are untouched; alpha 0 returns an identical copy.
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    depth = depth_map.depth.copy()
    hit = depth_map.hit_mask
    if alpha > 0 and hit.any():
        rng = np.random.default_rng(seed)
        inv = 1.0 / depth[hit]
        noise = rng.standard_normal(inv.shape)
        perturbed = inv + alpha * noise
        bad = perturbed <= 0
        while bad.any():
            perturbed[bad] = inv[bad] + alpha * rng.standard_normal(int(bad.sum()))
            bad = perturbed <= 0
        depth[hit] = 1.0 / perturbed
    return DepthMap(depth_map.camera, depth, depth_map.normals.copy())


# ---------------------------------------------------------------------------
# Latent optimization
# ---------------------------------------------------------------------------


@dataclass
class LatentFit:
    """Result of a latent-code optimization."""

    z: np.ndarray
    objective: float  # final value on the full observation
    history: list[float] = field(default_factory=list)  # per-iteration minibatch objective


def _latent_objective(params, z, positions, s, free_points, delta, reg_weight):
    pred, _ = forward_batch(params, z, positions)
    total = float(np.sum(clamped_l1(pred.astype(np.float64), s, delta)))
    n = len(positions)
    if len(free_points):
        pred_f, _ = forward_batch(params, z, free_points)
        total += float(np.sum(freespace_loss(pred_f.astype(np.float64))))
        n += len(free_points)
    return total / n + reg_weight * float(np.dot(z, z))


def _optimize_latent(params: DecoderParams, positions: np.ndarray, s: np.ndarray,
                     free_points: np.ndarray, delta: float, reg_weight: float,
                     iterations: int, lr: float, seed: int,
                     init_stddev: float = 0.01,
                     points_per_iter: int | None = None) -> LatentFit:
    """Adam over the code only; the decoder stays frozen, dropout disabled.

    Each iteration evaluates a without-replacement minibatch of observation
    points (SDF samples and free points pooled, equally weighted).
    """
    latent_dim = params.config.latent_dim
    if latent_dim < 1:
        raise ValueError("decoder has no latent input")
    if len(positions) == 0:
        raise EmptyInputError("latent estimation needs SDF samples")
    rng = np.random.default_rng(seed)
    z = rng.normal(0.0, init_stddev, size=latent_dim)
    adam = AdamState.for_arrays([z])

    n_sdf = len(positions)
    n_free = len(free_points)
    all_points = np.vstack([positions, free_points]) if n_free else positions
    n_total = n_sdf + n_free
    batch = min(points_per_iter or n_total, n_total)
    history = []
    for _ in range(iterations):
        if batch < n_total:
            take = rng.choice(n_total, size=batch, replace=False)
        else:
            take = np.arange(n_total)
        pts = all_points[take]
        sdf_sel = take < n_sdf
        pred, tape = forward_batch(params, z, pts)
        pred64 = pred.astype(np.float64)
        upstream = np.zeros(len(take))
        obj = 0.0
        if sdf_sel.any():
            tgt = s[take[sdf_sel]]
            obj += float(np.sum(clamped_l1(pred64[sdf_sel], tgt, delta)))
            upstream[sdf_sel] = clamped_l1_grad(pred64[sdf_sel], tgt, delta)
        if (~sdf_sel).any():
            obj += float(np.sum(freespace_loss(pred64[~sdf_sel])))
            upstream[~sdf_sel] = freespace_loss_grad(pred64[~sdf_sel])
        upstream /= len(take)
        grads = backward_batch(tape, upstream.astype(params.dtype))
        gz = grads.z.astype(np.float64).sum(axis=0) + 2.0 * reg_weight * z
        obj = obj / len(take) + reg_weight * float(np.dot(z, z))
        if not np.isfinite(obj):
            raise NumericFault("latent objective became non-finite")
        history.append(obj)
        adam_step(adam, [z], [gz], lr)
    final = _latent_objective(params, z, positions, s, free_points, delta, reg_weight)
    return LatentFit(z=z, objective=final, history=history)


def estimate_latent(params: DecoderParams, samples: SampleSet,
                    reg_weight: float = 1e-4, iterations: int = 800,
                    lr: float = 5e-3, seed: int = 0, delta: float = 0.1,
                    init_stddev: float = 0.01,
                    points_per_iter: int | None = 4096) -> LatentFit:
    """MAP estimate of the code explaining a full SDF sample set."""
    return _optimize_latent(
        params,
        samples.positions.astype(np.float64),
        samples.s.astype(np.float64),
        np.zeros((0, 3)),
        delta=delta,
        reg_weight=reg_weight,
        iterations=iterations,
        lr=lr,
        seed=seed,
        init_stddev=init_stddev,
        points_per_iter=points_per_iter,
    )


def complete_shape(params: DecoderParams, observation: PartialObservation,
                   config: CompletionConfig) -> LatentFit:
    """Solve for the code that best explains a partial observation.

    The data term clamps at eta (the only scale the samples carry), the
    free-space term pushes the field nonnegative between camera and surface,
    and the prior keeps the code near the origin.
    """
    free = observation.free_points if config.use_freespace else np.zeros((0, 3))
    return _optimize_latent(
        params,
        observation.positions,
        observation.s,
        free,
        delta=config.eta,
        reg_weight=config.reg_weight,
        iterations=config.iterations,
        lr=config.latent_lr,
        seed=config.seed,
        init_stddev=config.latent_init_stddev,
        points_per_iter=config.points_per_iter,
    )
