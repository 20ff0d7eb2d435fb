"""Feed-forward SDF decoder with exact reverse-mode gradients.

The network maps a (latent code, 3D point) pair to a scalar in (-1, 1).
Internal layers are weight-normalized affine maps followed by ReLU and
dropout; configured layers get the raw input vector concatenated onto their
output so deeper layers keep direct access to the conditioning, and the
output layer applies tanh. Gradients with respect to parameters, the latent
code, and the spatial input are computed by hand-rolled backpropagation so
surface normals come from the true spatial derivative, not finite
differences.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import DataError, TapeMismatchError

# ---------------------------------------------------------------------------
# Configuration and parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NetConfig:
    """Architecture of the decoder.

    skip_layers holds 1-based indices of layers whose output is concatenated
    with the raw input vector before feeding the next layer; those layers are
    narrowed so the concatenation restores hidden_width exactly.
    """

    latent_dim: int
    hidden_width: int = 512
    n_layers: int = 8
    skip_layers: tuple[int, ...] = (4,)
    dropout_rate: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.latent_dim < 0:
            raise ValueError("latent_dim must be >= 0")
        if self.n_layers < 1:
            raise ValueError("need at least one layer")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        skips = tuple(sorted(set(int(i) for i in self.skip_layers)))
        object.__setattr__(self, "skip_layers", skips)
        for i in skips:
            if not 1 < i < self.n_layers:
                raise ValueError(f"skip layer {i} outside (1, {self.n_layers})")
        if skips and self.hidden_width <= self.input_width:
            raise ValueError("hidden_width must exceed latent_dim + 3 with skips")

    @property
    def input_width(self) -> int:
        return self.latent_dim + 3

    def layer_widths(self) -> list[tuple[int, int]]:
        """(in, out) width of every layer, in order."""
        widths = []
        for i in range(1, self.n_layers + 1):
            w_in = self.input_width if i == 1 else self.hidden_width
            if i == self.n_layers:
                w_out = 1
            elif i in self.skip_layers:
                w_out = self.hidden_width - self.input_width
            else:
                w_out = self.hidden_width
            widths.append((w_in, w_out))
        return widths


@dataclass
class DecoderParams:
    """Weight-normalized layer parameters.

    Each layer stores a direction matrix v (out, in), per-unit gains g (out,)
    and biases b (out,). The effective weight row is g * v / ||v||, so the
    effective row norm always equals |g|.
    """

    config: NetConfig
    v: list[np.ndarray]
    g: list[np.ndarray]
    b: list[np.ndarray]

    def validate(self) -> None:
        for layer, (vi, gi, bi) in enumerate(zip(self.v, self.g, self.b), start=1):
            if not (np.all(np.isfinite(vi)) and np.all(np.isfinite(gi)) and np.all(np.isfinite(bi))):
                raise ValueError(f"non-finite parameters in layer {layer}")
            if np.linalg.norm(vi, axis=1).min() <= 0.0:
                raise ValueError(f"zero direction row in layer {layer}")

    @property
    def dtype(self):
        return self.v[0].dtype

    def astype(self, dtype) -> "DecoderParams":
        return DecoderParams(
            self.config,
            [v.astype(dtype) for v in self.v],
            [g.astype(dtype) for g in self.g],
            [b.astype(dtype) for b in self.b],
        )

    def copy(self) -> "DecoderParams":
        return self.astype(self.dtype)

    def flat_arrays(self) -> list[np.ndarray]:
        """All parameter arrays in a fixed order (v, g, b per layer)."""
        out = []
        for vi, gi, bi in zip(self.v, self.g, self.b):
            out.extend((vi, gi, bi))
        return out

    def effective_weights(self) -> list[np.ndarray]:
        return [
            gi[:, None] * vi / np.linalg.norm(vi, axis=1, keepdims=True)
            for vi, gi in zip(self.v, self.g)
        ]

    def _token(self) -> tuple:
        # cheap fingerprint so a stale tape is detected after in-place updates
        return tuple(float(gi[0]) for gi in self.g) + tuple(
            float(vi.flat[0]) for vi in self.v
        )


def init_params(config: NetConfig, seed: int | None = None,
                dtype=np.float32) -> DecoderParams:
    """Fan-in-scaled Gaussian directions with g set to the row norm.

    g = ||v_row|| makes the initial effective weights equal v, so the network
    starts out identical to an unnormalized one. Deterministic per seed.
    """
    rng = np.random.default_rng(config.seed if seed is None else seed)
    v, g, b = [], [], []
    for w_in, w_out in config.layer_widths():
        vi = rng.normal(0.0, 1.0 / np.sqrt(w_in), size=(w_out, w_in))
        v.append(vi.astype(dtype))
        g.append(np.linalg.norm(vi, axis=1).astype(dtype))
        b.append(np.zeros(w_out, dtype=dtype))
    return DecoderParams(config, v, g, b)


@dataclass
class DecoderGrads:
    """Gradients mirroring DecoderParams plus input gradients."""

    v: list[np.ndarray]
    g: list[np.ndarray]
    b: list[np.ndarray]
    z: np.ndarray  # (N, latent_dim) per-sample latent gradients
    x: np.ndarray  # (N, 3) per-sample spatial gradients

    def flat_arrays(self) -> list[np.ndarray]:
        out = []
        for vi, gi, bi in zip(self.v, self.g, self.b):
            out.extend((vi, gi, bi))
        return out


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------


@dataclass
class ForwardTape:
    """Cached intermediates from one forward pass, enough to replay it
    bit-exactly and to run exact reverse-mode differentiation."""

    params: DecoderParams
    param_token: tuple
    x0: np.ndarray  # (N, latent_dim + 3)
    inputs: list[np.ndarray]  # input to each layer
    preacts: list[np.ndarray]  # affine outputs
    mults: list  # dropout masks (train) or scalar keep factors (eval)
    weights: list[np.ndarray]  # effective weights used
    y: np.ndarray  # (N,)
    train_mode: bool


def _stack_inputs(z, x, latent_dim: int, dtype) -> np.ndarray:
    x_arr = np.asarray(x, dtype=dtype).reshape(-1, 3)
    if latent_dim == 0:
        return x_arr
    z_arr = np.asarray(z, dtype=dtype)
    if z_arr.ndim == 1:
        z_arr = np.broadcast_to(z_arr, (len(x_arr), latent_dim))
    if z_arr.shape != (len(x_arr), latent_dim):
        raise ValueError(
            f"latent block has shape {z_arr.shape}, expected ({len(x_arr)}, {latent_dim})"
        )
    return np.concatenate([z_arr, x_arr], axis=1)


def forward_batch(params: DecoderParams, z, x, train: bool = False,
                  rng: np.random.Generator | None = None) -> tuple[np.ndarray, ForwardTape]:
    """Evaluate the decoder on a batch of points.

    z is a single code (latent_dim,) broadcast over x (N, 3), or per-sample
    codes (N, latent_dim). Train mode draws fresh dropout masks from rng;
    eval mode scales activations by the keep probability instead, making the
    output a pure function of (params, z, x).
    """
    cfg = params.config
    dtype = params.dtype
    x0 = _stack_inputs(z, x, cfg.latent_dim, dtype)
    keep = 1.0 - cfg.dropout_rate
    weights = params.effective_weights()
    inputs, preacts, mults = [], [], []
    h = x0
    for i in range(1, cfg.n_layers + 1):
        w, bias = weights[i - 1], params.b[i - 1]
        inputs.append(h)
        a = h @ w.T + bias
        preacts.append(a)
        if i == cfg.n_layers:
            y = np.tanh(a[:, 0])
            break
        r = np.maximum(a, 0.0)
        if train and cfg.dropout_rate > 0.0:
            if rng is None:
                raise ValueError("train mode with dropout needs an rng")
            m = (rng.uniform(size=a.shape) < keep).astype(dtype)
        else:
            m = dtype.type(keep) if not train else dtype.type(1.0)
        mults.append(m)
        h = r * m
        if i in cfg.skip_layers:
            h = np.concatenate([h, x0], axis=1)
    tape = ForwardTape(
        params=params,
        param_token=params._token(),
        x0=x0,
        inputs=inputs,
        preacts=preacts,
        mults=mults,
        weights=weights,
        y=y,
        train_mode=train,
    )
    return y, tape


def backward_batch(tape: ForwardTape, upstream) -> DecoderGrads:
    """Exact gradients of sum(upstream * y) under the tape's dropout state.

    upstream is a scalar or per-sample (N,) weighting. Raises
    TapeMismatchError when the parameters changed since the forward pass.
    """
    params = tape.params
    if params._token() != tape.param_token:
        raise TapeMismatchError("parameters changed since this tape was recorded")
    cfg = params.config
    dtype = params.dtype
    n = len(tape.y)
    up = np.asarray(upstream, dtype=dtype)
    up = np.broadcast_to(up, (n,))

    gv = [np.zeros_like(vi) for vi in params.v]
    gg = [np.zeros_like(gi) for gi in params.g]
    gb = [np.zeros_like(bi) for bi in params.b]
    dx0 = np.zeros_like(tape.x0)

    # output layer: d tanh(a) = 1 - y^2
    da = (up * (1.0 - tape.y * tape.y))[:, None]
    for i in range(cfg.n_layers, 0, -1):
        layer = i - 1
        w = tape.weights[layer]
        h_in = tape.inputs[layer]
        gb[layer] = da.sum(axis=0)
        dw = da.T @ h_in
        dh = da @ w
        # weight-norm chain rule: w_row = g * v / ||v||
        vi = params.v[layer]
        norms = np.linalg.norm(vi, axis=1, keepdims=True)
        v_hat = vi / norms
        gg[layer] = np.sum(dw * v_hat, axis=1)
        scale = (params.g[layer] / norms[:, 0])[:, None]
        gv[layer] = scale * (dw - np.sum(dw * v_hat, axis=1, keepdims=True) * v_hat)
        if i == 1:
            dx0 += dh
            break
        prev = i - 1
        if prev in cfg.skip_layers:
            w_out = cfg.hidden_width - cfg.input_width
            dx0 += dh[:, w_out:]
            dh = dh[:, :w_out]
        dr = dh * tape.mults[prev - 1]
        da = dr * (tape.preacts[prev - 1] > 0)
    dz = dx0[:, : cfg.latent_dim]
    dx = dx0[:, cfg.latent_dim :]
    return DecoderGrads(gv, gg, gb, dz, dx)


def forward(params: DecoderParams, z, x, train: bool = False,
            mask_seed: int | None = None) -> tuple[float, ForwardTape]:
    """Single-point evaluation; see forward_batch."""
    rng = np.random.default_rng(mask_seed) if mask_seed is not None else None
    y, tape = forward_batch(params, z, np.reshape(x, (1, 3)), train=train, rng=rng)
    return float(y[0]), tape


def backward(tape: ForwardTape, upstream: float = 1.0) -> DecoderGrads:
    """Gradients of upstream * output for a single-point tape."""
    return backward_batch(tape, upstream)


def spatial_gradient(params: DecoderParams, z, x) -> np.ndarray:
    """Analytic gradient of the output with respect to the query point.

    Evaluated in eval mode; normalizing the result gives the surface normal
    near the zero set. A zero vector signals a degenerate normal.
    """
    _, tape = forward(params, z, x)
    return backward(tape).x[0]


def spatial_gradient_batch(params: DecoderParams, z, x) -> np.ndarray:
    _, tape = forward_batch(params, z, x)
    return backward_batch(tape, 1.0).x


# ---------------------------------------------------------------------------
# Latent codebook
# ---------------------------------------------------------------------------


class LatentCodebook:
    """Per-shape latent vectors, keyed by shape id."""

    def __init__(self, latent_dim: int):
        if latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        self.latent_dim = latent_dim
        self._codes: dict[str, np.ndarray] = {}

    @classmethod
    def random_init(cls, shape_ids, latent_dim: int, stddev: float,
                    rng: np.random.Generator) -> "LatentCodebook":
        book = cls(latent_dim)
        for sid in shape_ids:
            book[sid] = rng.normal(0.0, stddev, size=latent_dim)
        return book

    def __getitem__(self, shape_id: str) -> np.ndarray:
        return self._codes[shape_id]

    def __setitem__(self, shape_id: str, code) -> None:
        arr = np.asarray(code, dtype=np.float64).reshape(-1)
        if arr.shape != (self.latent_dim,):
            raise ValueError(f"code for {shape_id!r} has dim {arr.shape[0]}, "
                             f"expected {self.latent_dim}")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"non-finite code for {shape_id!r}")
        self._codes[shape_id] = arr

    def __contains__(self, shape_id: str) -> bool:
        return shape_id in self._codes

    def __len__(self) -> int:
        return len(self._codes)

    def ids(self) -> list[str]:
        return list(self._codes.keys())

    def items(self):
        return self._codes.items()


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

_CKPT_MAGIC = b"DSDF"
_CKPT_VERSION = 1


def write_checkpoint(path, params: DecoderParams,
                     codebook: LatentCodebook | None = None) -> None:
    """Binary checkpoint: config block, f32 layer parameters, latent codes."""
    cfg = params.config
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack("<IIIII", _CKPT_VERSION, cfg.latent_dim,
                            cfg.hidden_width, cfg.n_layers, len(cfg.skip_layers)))
        for s in cfg.skip_layers:
            f.write(struct.pack("<I", s))
        f.write(struct.pack("<fQ", cfg.dropout_rate, cfg.seed & (2**64 - 1)))
        for vi, gi, bi in zip(params.v, params.g, params.b):
            f.write(np.ascontiguousarray(vi, dtype="<f4").tobytes())
            f.write(np.asarray(gi, dtype="<f4").tobytes())
            f.write(np.asarray(bi, dtype="<f4").tobytes())
        codes = list(codebook.items()) if codebook is not None else []
        f.write(struct.pack("<I", len(codes)))
        for sid, code in codes:
            raw = sid.encode("utf-8")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
            f.write(np.asarray(code, dtype="<f4").tobytes())


def read_checkpoint(path) -> tuple[DecoderParams, LatentCodebook | None]:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _CKPT_MAGIC:
            raise DataError(f"bad checkpoint magic {magic!r} in {path}")
        version, latent_dim, hidden, n_layers, n_skips = struct.unpack("<IIIII", f.read(20))
        if version != _CKPT_VERSION:
            raise DataError(f"unsupported checkpoint version {version}")
        skips = tuple(struct.unpack("<I", f.read(4))[0] for _ in range(n_skips))
        dropout, seed = struct.unpack("<fQ", f.read(12))
        cfg = NetConfig(latent_dim=latent_dim, hidden_width=hidden,
                        n_layers=n_layers, skip_layers=skips,
                        dropout_rate=float(np.float32(dropout)), seed=seed)
        v, g, b = [], [], []
        for w_in, w_out in cfg.layer_widths():
            v.append(np.frombuffer(f.read(4 * w_out * w_in), dtype="<f4")
                     .reshape(w_out, w_in).copy())
            g.append(np.frombuffer(f.read(4 * w_out), dtype="<f4").copy())
            b.append(np.frombuffer(f.read(4 * w_out), dtype="<f4").copy())
        params = DecoderParams(cfg, v, g, b)
        params.validate()
        (n_codes,) = struct.unpack("<I", f.read(4))
        codebook = None
        if n_codes:
            codebook = LatentCodebook(latent_dim)
            for _ in range(n_codes):
                (id_len,) = struct.unpack("<H", f.read(2))
                sid = f.read(id_len).decode("utf-8")
                code = np.frombuffer(f.read(4 * latent_dim), dtype="<f4")
                codebook[sid] = code.astype(np.float64)
    return params, codebook
