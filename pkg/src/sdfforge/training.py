"""Clamped-L1 regression training for the SDF decoder.

Supports two regimes: fitting one network to one shape, and jointly
optimizing decoder weights plus a per-shape latent codebook so a single
network represents a whole family. Batches are balanced between inside and
outside samples, and the latent codes carry a Gaussian-prior penalty.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .decoder import (
    DecoderParams,
    LatentCodebook,
    NetConfig,
    backward_batch,
    forward_batch,
    init_params,
)
from .errors import BatchImbalanceError, NumericFault
from .sampling import SampleSet

# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------


def clamp(value, delta: float):
    """Saturate to [-delta, delta]."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    return np.minimum(delta, np.maximum(-delta, value))


def clamped_l1(pred, target, delta: float):
    """Absolute error after clamping both operands to the truncation band."""
    return np.abs(clamp(pred, delta) - clamp(target, delta))


def clamped_l1_grad(pred, target, delta: float):
    """d/dpred of clamped_l1; the clamp saturates to zero gradient outside
    the band on the prediction branch."""
    diff = clamp(pred, delta) - clamp(target, delta)
    return np.sign(diff) * (np.abs(pred) <= delta)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    """First/second moment accumulators for a fixed list of arrays."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_arrays(cls, arrays) -> "AdamState":
        return cls(
            m=[np.zeros_like(a, dtype=np.float64) for a in arrays],
            v=[np.zeros_like(a, dtype=np.float64) for a in arrays],
        )


def adam_step(state: AdamState, params: list[np.ndarray],
              grads: list[np.ndarray], lr: float) -> tuple[list[np.ndarray], AdamState]:
    """Standard bias-corrected Adam update, applied in place.

    Raises NumericFault on non-finite gradients so training aborts loudly
    instead of silently corrupting the parameters.
    """
    if len(params) != len(state.m) or len(grads) != len(params):
        raise ValueError("parameter/gradient/state length mismatch")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for i, (p, g) in enumerate(zip(params, grads)):
        g = np.asarray(g, dtype=np.float64)
        if not np.all(np.isfinite(g)):
            raise NumericFault(f"non-finite gradient in array {i} at step {t}")
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * (g * g)
        update = lr * (state.m[i] / c1) / (np.sqrt(state.v[i] / c2) + state.eps)
        p -= update.astype(p.dtype)
    return params, state


class _TailAverager:
    """Running mean of parameter arrays over the final optimization epochs.

    Iterate averaging damps the stationary noise of a constant-rate Adam run,
    tightening the learned zero set without extra steps.
    """

    def __init__(self, total_epochs: int, tail: int):
        self.start = total_epochs - tail
        self.count = 0
        self.sums: list[np.ndarray] | None = None

    def observe(self, epoch: int, arrays: list[np.ndarray]) -> None:
        if epoch < self.start:
            return
        if self.sums is None:
            self.sums = [np.zeros(a.shape, dtype=np.float64) for a in arrays]
        for acc, a in zip(self.sums, arrays):
            acc += a
        self.count += 1

    def apply(self, arrays: list[np.ndarray]) -> None:
        if self.count:
            for acc, a in zip(self.sums, arrays):
                a[...] = (acc / self.count).astype(a.dtype)


class _SparseAdam:
    """Adam over rows of a matrix, with per-row step counts.

    Used for the latent codebook: only codes of shapes present in a batch
    are updated, each with its own bias-correction schedule.
    """

    def __init__(self, shape, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = np.zeros(shape[0], dtype=np.int64)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    def step_rows(self, matrix: np.ndarray, rows: np.ndarray,
                  grads: np.ndarray, lr: float) -> None:
        if not np.all(np.isfinite(grads)):
            raise NumericFault("non-finite latent gradient")
        self.t[rows] += 1
        t = self.t[rows][:, None]
        self.m[rows] = self.beta1 * self.m[rows] + (1.0 - self.beta1) * grads
        self.v[rows] = self.beta2 * self.v[rows] + (1.0 - self.beta2) * grads**2
        m_hat = self.m[rows] / (1.0 - self.beta1**t)
        v_hat = self.v[rows] / (1.0 - self.beta2**t)
        matrix[rows] -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


# ---------------------------------------------------------------------------
# Batching
# ---------------------------------------------------------------------------


def make_balanced_batch(samples: SampleSet, n: int,
                        seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw n samples, half nonnegative and half negative, without
    replacement, shuffled. Deterministic per seed."""
    n_pos = (n + 1) // 2
    n_neg = n // 2
    pos_idx = np.flatnonzero(samples.s >= 0.0)
    neg_idx = np.flatnonzero(samples.s < 0.0)
    if len(pos_idx) < n_pos:
        raise BatchImbalanceError("positive", len(pos_idx), n_pos)
    if len(neg_idx) < n_neg:
        raise BatchImbalanceError("negative", len(neg_idx), n_neg)
    rng = np.random.default_rng(seed)
    take = np.concatenate([
        rng.choice(pos_idx, size=n_pos, replace=False),
        rng.choice(neg_idx, size=n_neg, replace=False),
    ])
    take = take[rng.permutation(n)]
    return samples.positions[take], samples.s[take]


# ---------------------------------------------------------------------------
# Configs and records
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    """Optimization hyperparameters.

    decoder_lr of None applies the 1e-5 * B rule, where B is the number of
    shapes per batch; desk-scale runs usually override it since that rate is
    tuned for very long production schedules. reg_weight multiplies the
    squared latent norm; the Gaussian-prior reading 1/prior_stddev**2 is
    available by setting reg_weight explicitly.
    """

    delta: float = 0.1
    decoder_lr: float | None = None
    latent_lr: float = 1e-3
    reg_weight: float = 1e-4
    prior_stddev: float = 1e-2
    samples_per_step: int = 16384
    shapes_per_batch: int | None = None
    epochs: int = 100
    latent_init_stddev: float = 0.01
    tail_average_epochs: int = 0  # >0: return the Polyak mean of the last k epochs
    seed: int = 0

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.decoder_lr is not None and self.decoder_lr <= 0:
            raise ValueError("decoder_lr must be positive")
        if self.latent_lr <= 0:
            raise ValueError("latent_lr must be positive")
        if self.reg_weight < 0:
            raise ValueError("reg_weight must be >= 0")
        if self.epochs < 0 or self.samples_per_step < 1:
            raise ValueError("bad epoch or batch size")
        if self.tail_average_epochs < 0 or self.tail_average_epochs > max(self.epochs, 1):
            raise ValueError("tail_average_epochs must lie in [0, epochs]")

    def resolved_decoder_lr(self, shapes_in_batch: int) -> float:
        if self.decoder_lr is not None:
            return self.decoder_lr
        return 1e-5 * shapes_in_batch


@dataclass
class LossRecord:
    """Per-epoch training history."""

    sdf_loss: list[float] = field(default_factory=list)
    reg_loss: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.sdf_loss)

    def objective(self) -> np.ndarray:
        return np.asarray(self.sdf_loss) + np.asarray(self.reg_loss)

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write("epoch,sdf_loss,reg_loss,seconds\n")
            for i, (s, r, t) in enumerate(zip(self.sdf_loss, self.reg_loss, self.seconds)):
                f.write(f"{i},{s:.8g},{r:.8g},{t:.6g}\n")


# ---------------------------------------------------------------------------
# Training loops
# ---------------------------------------------------------------------------


def train_single_shape(samples: SampleSet, net_config: NetConfig,
                       train_config: TrainConfig) -> tuple[DecoderParams, LossRecord]:
    """Fit a latent-free network to one shape's samples.

    One balanced batch per epoch; the per-epoch loss is the batch mean of
    the clamped L1 error.
    """
    if net_config.latent_dim != 0:
        raise ValueError("single-shape training requires latent_dim 0")
    params = init_params(net_config)
    adam = AdamState.for_arrays(params.flat_arrays())
    lr = train_config.resolved_decoder_lr(1)
    rng = np.random.default_rng(train_config.seed)
    record = LossRecord()
    averager = _TailAverager(train_config.epochs, train_config.tail_average_epochs)
    n = min(train_config.samples_per_step, len(samples))
    for epoch in range(train_config.epochs):
        t0 = time.perf_counter()
        x, s = make_balanced_batch(samples, n, int(rng.integers(2**63)))
        pred, tape = forward_batch(params, None, x, train=True, rng=rng)
        loss = float(np.mean(clamped_l1(pred, s, train_config.delta)))
        upstream = clamped_l1_grad(pred, s, train_config.delta) / n
        grads = backward_batch(tape, upstream)
        adam_step(adam, params.flat_arrays(), grads.flat_arrays(), lr)
        averager.observe(epoch, params.flat_arrays())
        record.sdf_loss.append(loss)
        record.reg_loss.append(0.0)
        record.seconds.append(time.perf_counter() - t0)
    averager.apply(params.flat_arrays())
    return params, record


def train_auto_decoder(sample_sets: list[SampleSet], net_config: NetConfig,
                       train_config: TrainConfig
                       ) -> tuple[DecoderParams, LatentCodebook, LossRecord]:
    """Jointly optimize decoder weights and one latent code per shape.

    Each step draws a balanced sample batch per shape in the group, takes an
    Adam step on the decoder against the summed per-shape mean losses, and an
    Adam step on each participating code against its own loss plus the
    squared-norm penalty.
    """
    if not sample_sets:
        raise ValueError("need at least one shape")
    if net_config.latent_dim < 1:
        raise ValueError("auto-decoder training requires latent_dim >= 1")
    ids = [s.shape_id for s in sample_sets]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate shape ids")

    rng = np.random.default_rng(train_config.seed)
    params = init_params(net_config)
    codebook = LatentCodebook.random_init(
        ids, net_config.latent_dim, train_config.latent_init_stddev, rng
    )
    codes = np.stack([codebook[i] for i in ids])  # (S, L) float64
    n_shapes = len(ids)
    batch_shapes = train_config.shapes_per_batch or n_shapes
    batch_shapes = min(batch_shapes, n_shapes)
    lr = train_config.resolved_decoder_lr(batch_shapes)
    lam = train_config.reg_weight

    adam = AdamState.for_arrays(params.flat_arrays())
    code_adam = _SparseAdam(codes.shape)
    k = min(train_config.samples_per_step, min(len(s) for s in sample_sets))
    record = LossRecord()
    averager = _TailAverager(train_config.epochs, train_config.tail_average_epochs)

    for epoch in range(train_config.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(n_shapes)
        epoch_loss = 0.0
        epoch_reg = 0.0
        for start in range(0, n_shapes, batch_shapes):
            group = order[start : start + batch_shapes]
            xs, ss = [], []
            for row in group:
                x, s = make_balanced_batch(sample_sets[row], k, int(rng.integers(2**63)))
                xs.append(x)
                ss.append(s)
            x = np.vstack(xs)
            s = np.concatenate(ss)
            z_rows = np.repeat(codes[group], k, axis=0)
            pred, tape = forward_batch(params, z_rows, x, train=True, rng=rng)
            per_sample = clamped_l1(pred, s, train_config.delta)
            upstream = clamped_l1_grad(pred, s, train_config.delta) / k
            grads = backward_batch(tape, upstream)
            adam_step(adam, params.flat_arrays(), grads.flat_arrays(), lr)
            dz = grads.z.astype(np.float64).reshape(len(group), k, -1).sum(axis=1)
            dz += 2.0 * lam * codes[group]
            code_adam.step_rows(codes, group, dz, train_config.latent_lr)
            epoch_loss += float(per_sample.reshape(len(group), k).mean(axis=1).sum())
            epoch_reg += float(lam * np.sum(codes[group] ** 2))
        averager.observe(epoch, params.flat_arrays() + [codes])
        record.sdf_loss.append(epoch_loss / n_shapes)
        record.reg_loss.append(epoch_reg / n_shapes)
        record.seconds.append(time.perf_counter() - t0)
    averager.apply(params.flat_arrays() + [codes])
    for row, sid in enumerate(ids):
        codebook[sid] = codes[row]
    return params, codebook, record
