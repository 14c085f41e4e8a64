"""From-scratch CNN-LSTM seizure detector (numpy float64 throughout).

Per 1 s epoch the input is a (feature_planes x channels x frames) tensor:
26 LFCC planes over a (C x 10) spatial grid. The graph is a stack of conv
blocks (3x3 conv, ELU, 2x2 max-pool, dropout), a flatten, a dense stage
standing in for a full-width 1D convolution (the two are the same map),
a bidirectional LSTM over the epochs of a segment, and a sigmoid scalar
per epoch. Loss is MSE against {0,1} epoch labels; the optimizer is Adam
with bias correction.

Low-channel adaptation is expressed in the shape plan: preserve_dims skips
pooling along any axis shorter than 2, drop_layers removes trailing conv
blocks until the plan passes with strict pooling. Same-padding convs keep
spatial dims and pair with exact (floor) pooling that fails on an axis
shorter than 2; valid-padding convs consume 2 per axis (failing below 3)
and pair with partial-window (ceil) pooling that never fails. Under
drop_layers in the valid mode, 8 channels resolve to 2 conv blocks and
4 channels to 1.

Determinism contract: dropout draws come from a generator seeded per
(seed, pass, segment), gradient accumulation is ordered by segment index,
and BLAS pools are pinned to one thread during train/infer, so results are
bit-identical regardless of worker count.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import ConfigError, DataError, NumericError
from .hashing import canonical_json, config_digest

log = logging.getLogger(__name__)

KERNEL = 3
POOL = 2
ADAPTATIONS = ("none", "preserve_dims", "drop_layers")
PADDING_MODES = ("same", "valid")


@dataclass(frozen=True)
class NetworkSpec:
    conv2d_layers: int = 3
    conv_kernels: int = 16
    dropout_rate: float = 0.2
    conv1d_units: int = 32
    lstm_hidden: int = 32
    bidirectional: bool = True
    adaptation: str = "none"
    padding_mode: str = "same"
    input_planes: int = 26

    def __post_init__(self):
        if self.conv2d_layers not in (1, 2, 3):
            raise ConfigError(f"conv2d_layers must be 1..3, got {self.conv2d_layers}")
        if self.conv_kernels < 1:
            raise ConfigError("conv_kernels must be >= 1")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0,1), got {self.dropout_rate}")
        if self.conv1d_units < 1 or self.lstm_hidden < 1 or self.input_planes < 1:
            raise ConfigError("layer sizes must be >= 1")
        if self.adaptation not in ADAPTATIONS:
            raise ConfigError(
                f"adaptation must be one of {ADAPTATIONS}, got {self.adaptation!r}"
            )
        if self.padding_mode not in PADDING_MODES:
            raise ConfigError(
                f"padding_mode must be one of {PADDING_MODES}, got {self.padding_mode!r}"
            )


def network_spec_from_dict(d: dict) -> NetworkSpec:
    allowed = set(NetworkSpec.__dataclass_fields__)
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown network spec fields: {sorted(unknown)}")
    return NetworkSpec(**d)


@dataclass(frozen=True)
class AdamHyper:
    alpha: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    """passes = sweeps over the dataset (the 1 s analysis unit keeps the
    name "epoch" in this package)."""

    passes: int = 8
    batch_segments: int = 4
    segment_len: int = 60
    seed: int = 0
    workers: int = 1
    hyper: AdamHyper = field(default_factory=AdamHyper)

    def __post_init__(self):
        if self.passes < 1 or self.batch_segments < 1 or self.segment_len < 1:
            raise ConfigError("passes, batch_segments, segment_len must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


@dataclass(frozen=True)
class EpochPosteriors:
    """Per-epoch seizure probabilities over 1 s epochs."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise DataError(f"posteriors must be 1-D, got {v.ndim}-D")
        if v.size and (np.min(v) < 0.0 or np.max(v) > 1.0):
            raise DataError("posteriors must lie in [0, 1]")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.values)


# -- shape planning -----------------------------------------------------------

@dataclass(frozen=True)
class LayerPlan:
    conv_in: tuple[int, int]
    conv_out: tuple[int, int]
    pool_out: tuple[int, int]
    pool_axes: tuple[bool, bool]


@dataclass(frozen=True)
class ShapePlan:
    channels: int
    layers: tuple[LayerPlan, ...]
    flat_dim: int
    padding_mode: str

    @property
    def n_conv_layers(self) -> int:
        return len(self.layers)


class _PlanFailure(Exception):
    pass


_AXIS_NAMES = ("channel", "frame")


def _plan_layers(grid: tuple[int, int], n_layers: int, padding_mode: str,
                 preserve_dims: bool) -> tuple[LayerPlan, ...]:
    h, w = grid
    layers = []
    for layer in range(n_layers):
        conv_in = (h, w)
        if padding_mode == "same":
            conv_out = (h, w)
        else:
            for axis, size in enumerate((h, w)):
                if size < KERNEL:
                    raise _PlanFailure(
                        f"layer {layer + 1}: {_AXIS_NAMES[axis]} axis {size} < "
                        f"{KERNEL} for a valid {KERNEL}x{KERNEL} convolution"
                    )
            conv_out = (h - (KERNEL - 1), w - (KERNEL - 1))
        h, w = conv_out

        pool_axes = [True, True]
        if padding_mode == "same":
            for axis, size in enumerate((h, w)):
                if size < POOL:
                    if preserve_dims:
                        pool_axes[axis] = False
                    else:
                        raise _PlanFailure(
                            f"layer {layer + 1}: {_AXIS_NAMES[axis]} axis "
                            f"{size} < {POOL} for {POOL}x{POOL} pooling"
                        )
            pool_out = (
                h // POOL if pool_axes[0] else h,
                w // POOL if pool_axes[1] else w,
            )
        else:
            # partial-window pooling: last window may cover a single element
            pool_out = ((h + 1) // POOL, (w + 1) // POOL)
        layers.append(LayerPlan(conv_in, conv_out, pool_out, tuple(pool_axes)))
        h, w = pool_out
    return tuple(layers)


def shape_plan(channels: int, spec: NetworkSpec, frames: int = 10) -> ShapePlan:
    """Resolve per-layer spatial dims for a (channels x frames) input grid."""
    if channels < 1:
        raise ConfigError(f"channels must be >= 1, got {channels}")
    grid = (channels, frames)

    if spec.adaptation == "drop_layers":
        layers = None
        for n in range(spec.conv2d_layers, -1, -1):
            try:
                layers = _plan_layers(grid, n, spec.padding_mode, preserve_dims=False)
                break
            except _PlanFailure:
                continue
        assert layers is not None  # n=0 always succeeds
    else:
        try:
            layers = _plan_layers(
                grid, spec.conv2d_layers, spec.padding_mode,
                preserve_dims=(spec.adaptation == "preserve_dims"),
            )
        except _PlanFailure as exc:
            raise ConfigError(f"shape plan failed: {exc}") from None

    if layers:
        h, w = layers[-1].pool_out
        flat_dim = spec.conv_kernels * h * w
    else:
        flat_dim = spec.input_planes * channels * frames
    return ShapePlan(channels, layers, flat_dim, spec.padding_mode)


# -- weights ------------------------------------------------------------------

@dataclass
class Weights:
    """Named parameter tensors plus Adam state."""

    tensors: dict[str, np.ndarray]
    adam_m: dict[str, np.ndarray]
    adam_v: dict[str, np.ndarray]
    step: int = 0

    def names(self) -> list[str]:
        return sorted(self.tensors)

    def n_params(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def check_finite(self) -> None:
        for name, t in self.tensors.items():
            if not np.all(np.isfinite(t)):
                raise NumericError(f"non-finite values in weight tensor {name}")


def _lstm_direction_names(direction: str) -> tuple[str, str, str]:
    return (f"lstm_{direction}_wx", f"lstm_{direction}_wh", f"lstm_{direction}_b")


def init_weights(spec: NetworkSpec, plan: ShapePlan, seed: int) -> Weights:
    """Uniform fan-in init; biases zero except LSTM forget gates at 1."""
    rng = np.random.default_rng(seed)

    def uniform(shape, fan_in):
        bound = np.sqrt(1.0 / fan_in)
        return rng.uniform(-bound, bound, size=shape)

    tensors: dict[str, np.ndarray] = {}
    in_planes = spec.input_planes
    for i in range(plan.n_conv_layers):
        fan_in = in_planes * KERNEL * KERNEL
        tensors[f"conv{i}_w"] = uniform(
            (spec.conv_kernels, in_planes, KERNEL, KERNEL), fan_in
        )
        tensors[f"conv{i}_b"] = np.zeros(spec.conv_kernels)
        in_planes = spec.conv_kernels

    tensors["fc_w"] = uniform((plan.flat_dim, spec.conv1d_units), plan.flat_dim)
    tensors["fc_b"] = np.zeros(spec.conv1d_units)

    hidden = spec.lstm_hidden
    directions = ["fw", "bw"] if spec.bidirectional else ["fw"]
    for d in directions:
        wx, wh, b = _lstm_direction_names(d)
        tensors[wx] = uniform((spec.conv1d_units, 4 * hidden), spec.conv1d_units)
        tensors[wh] = uniform((hidden, 4 * hidden), hidden)
        bias = np.zeros(4 * hidden)
        bias[hidden : 2 * hidden] = 1.0  # forget gate
        tensors[b] = bias

    out_in = hidden * len(directions)
    tensors["out_w"] = uniform((out_in, 1), out_in)
    tensors["out_b"] = np.zeros(1)

    zeros = {k: np.zeros_like(v) for k, v in tensors.items()}
    return Weights(tensors=tensors,
                   adam_m=zeros,
                   adam_v={k: np.zeros_like(v) for k, v in tensors.items()},
                   step=0)


# -- primitive layers ----------------------------------------------------------

def _elu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, np.expm1(x))


def _elu_grad(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.where(x > 0, 1.0, y + 1.0)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray,
                    padding_mode: str) -> tuple[np.ndarray, np.ndarray]:
    """x: (E, P, H, W), w: (K, P, 3, 3) -> (out, padded input for backward)."""
    if padding_mode == "same":
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        oh, ow = x.shape[2], x.shape[3]
    else:
        xp = x
        oh, ow = x.shape[2] - (KERNEL - 1), x.shape[3] - (KERNEL - 1)
    out = np.zeros((x.shape[0], w.shape[0], oh, ow))
    for di in range(KERNEL):
        for dj in range(KERNEL):
            out += np.einsum(
                "kp,epij->ekij", w[:, :, di, dj], xp[:, :, di : di + oh, dj : dj + ow]
            )
    out += b[None, :, None, None]
    return out, xp


def _conv2d_backward(d_out: np.ndarray, xp: np.ndarray, w: np.ndarray,
                     padding_mode: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (dx, dw, db); xp is the (possibly padded) forward input."""
    oh, ow = d_out.shape[2], d_out.shape[3]
    dw = np.zeros_like(w)
    dxp = np.zeros_like(xp)
    for di in range(KERNEL):
        for dj in range(KERNEL):
            x_slice = xp[:, :, di : di + oh, dj : dj + ow]
            dw[:, :, di, dj] = np.einsum("ekij,epij->kp", d_out, x_slice)
            dxp[:, :, di : di + oh, dj : dj + ow] += np.einsum(
                "kp,ekij->epij", w[:, :, di, dj], d_out
            )
    db = d_out.sum(axis=(0, 2, 3))
    dx = dxp[:, :, 1:-1, 1:-1] if padding_mode == "same" else dxp
    return dx, dw, db


def _pool_last_forward(x: np.ndarray, ceil_mode: bool):
    """Max over adjacent pairs along the last axis (stride 2)."""
    n = x.shape[-1]
    n_out = (n + 1) // POOL if ceil_mode else n // POOL
    idx0 = POOL * np.arange(n_out)
    idx1 = np.minimum(idx0 + 1, n - 1)
    a, b = x[..., idx0], x[..., idx1]
    mask = a >= b  # earlier index wins ties
    return np.where(mask, a, b), (mask, idx0, idx1, n)


def _pool_last_backward(grad: np.ndarray, cache) -> np.ndarray:
    mask, idx0, idx1, n = cache
    dx = np.zeros(grad.shape[:-1] + (n,))
    dx[..., idx0] += grad * mask
    dx[..., idx1] += grad * ~mask
    return dx


def _maxpool_forward(x: np.ndarray, pool_axes: tuple[bool, bool], ceil_mode: bool):
    """2x2 max pool over (H, W) of (E, K, H, W), decomposed per axis."""
    cache_h = cache_w = None
    if pool_axes[0]:
        x = np.swapaxes(x, 2, 3)
        x, cache_h = _pool_last_forward(x, ceil_mode)
        x = np.swapaxes(x, 2, 3)
    if pool_axes[1]:
        x, cache_w = _pool_last_forward(x, ceil_mode)
    return x, (cache_h, cache_w)


def _maxpool_backward(grad: np.ndarray, cache) -> np.ndarray:
    cache_h, cache_w = cache
    if cache_w is not None:
        grad = _pool_last_backward(grad, cache_w)
    if cache_h is not None:
        grad = np.swapaxes(grad, 2, 3)
        grad = _pool_last_backward(grad, cache_h)
        grad = np.swapaxes(grad, 2, 3)
    return grad


def _dropout_mask(shape, rate: float, rng: np.random.Generator | None):
    if rng is None or rate == 0.0:
        return None
    return (rng.uniform(size=shape) >= rate) / (1.0 - rate)


# -- forward / backward --------------------------------------------------------

def _check_finite(x: np.ndarray, stage: str) -> None:
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite values after {stage}")


def _validate_segment(values: np.ndarray, spec: NetworkSpec, plan: ShapePlan) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 4:
        raise DataError(f"segment must be (epochs, frames, channels, features), got {v.shape}")
    e, f, c, d = v.shape
    if d != spec.input_planes:
        raise DataError(f"feature dim {d} != spec input_planes {spec.input_planes}")
    if c != plan.channels:
        raise DataError(f"channel count {c} != plan channels {plan.channels}")
    if e < 1:
        raise DataError("empty segment")
    return v


def _lstm_direction(x_seq: np.ndarray, wx: np.ndarray, wh: np.ndarray,
                    b: np.ndarray, reverse: bool):
    """x_seq: (E, U). Returns hidden sequence (E, H) and per-step caches."""
    e_count = x_seq.shape[0]
    hidden = wh.shape[0]
    order = range(e_count - 1, -1, -1) if reverse else range(e_count)
    h = np.zeros(hidden)
    c = np.zeros(hidden)
    outs = np.zeros((e_count, hidden))
    caches = []
    for t in order:
        z = x_seq[t] @ wx + h @ wh + b
        i = _sigmoid(z[:hidden])
        f = _sigmoid(z[hidden : 2 * hidden])
        g = np.tanh(z[2 * hidden : 3 * hidden])
        o = _sigmoid(z[3 * hidden :])
        c_new = f * c + i * g
        tanh_c = np.tanh(c_new)
        h_new = o * tanh_c
        caches.append((t, x_seq[t], h, c, i, f, g, o, c_new, tanh_c))
        h, c = h_new, c_new
        outs[t] = h_new
    return outs, caches


def _lstm_direction_backward(d_outs: np.ndarray, caches, wx: np.ndarray,
                             wh: np.ndarray):
    """d_outs: (E, H) gradient on each step's hidden output."""
    hidden = wh.shape[0]
    d_wx = np.zeros_like(wx)
    d_wh = np.zeros_like(wh)
    d_b = np.zeros(4 * hidden)
    d_x = np.zeros((d_outs.shape[0], wx.shape[0]))
    dh_next = np.zeros(hidden)
    dc_next = np.zeros(hidden)
    for t, x_t, h_prev, c_prev, i, f, g, o, c_new, tanh_c in reversed(caches):
        dh = d_outs[t] + dh_next
        do = dh * tanh_c
        dc = dh * o * (1.0 - tanh_c**2) + dc_next
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dc_next = dc * f
        dz = np.concatenate([
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            dg * (1.0 - g**2),
            do * o * (1.0 - o),
        ])
        d_wx += np.outer(x_t, dz)
        d_wh += np.outer(h_prev, dz)
        d_b += dz
        d_x[t] = wx @ dz
        dh_next = wh @ dz
    return d_x, d_wx, d_wh, d_b


def _forward_core(values: np.ndarray, weights: Weights, spec: NetworkSpec,
                  plan: ShapePlan, dropout_rng: np.random.Generator | None):
    """Shared forward pass; returns posteriors and the cache for backward."""
    v = _validate_segment(values, spec, plan)
    e_count = v.shape[0]
    # (E, F, C, D) -> (E, D, C, F): features become input planes
    x = np.ascontiguousarray(np.transpose(v, (0, 3, 2, 1)))

    t = weights.tensors
    rate = spec.dropout_rate
    conv_caches = []
    ceil_mode = plan.padding_mode == "valid"
    for i, layer in enumerate(plan.layers):
        z, xp = _conv2d_forward(x, t[f"conv{i}_w"], t[f"conv{i}_b"], plan.padding_mode)
        a = _elu(z)
        pooled, pool_cache = _maxpool_forward(a, layer.pool_axes, ceil_mode)
        mask = _dropout_mask(pooled.shape, rate, dropout_rng)
        x = pooled if mask is None else pooled * mask
        conv_caches.append((xp, z, a, pool_cache, mask))
        _check_finite(x, f"conv block {i + 1}")

    flat = x.reshape(e_count, -1)
    if flat.shape[1] != plan.flat_dim:
        raise DataError(
            f"flattened dim {flat.shape[1]} != planned {plan.flat_dim}"
        )
    z1 = flat @ t["fc_w"] + t["fc_b"]
    a1 = _elu(z1)
    fc_mask = _dropout_mask(a1.shape, rate, dropout_rng)
    dense = a1 if fc_mask is None else a1 * fc_mask
    _check_finite(dense, "dense stage")

    directions = ["fw", "bw"] if spec.bidirectional else ["fw"]
    hidden_seqs = []
    lstm_caches = {}
    for d in directions:
        wx, wh, b = _lstm_direction_names(d)
        outs, caches = _lstm_direction(dense, t[wx], t[wh], t[b], reverse=(d == "bw"))
        hidden_seqs.append(outs)
        lstm_caches[d] = caches
    concat = np.concatenate(hidden_seqs, axis=1)
    lstm_mask = _dropout_mask(concat.shape, rate, dropout_rng)
    lstm_out = concat if lstm_mask is None else concat * lstm_mask
    _check_finite(lstm_out, "lstm stage")

    logits = (lstm_out @ t["out_w"] + t["out_b"])[:, 0]
    posteriors = _sigmoid(logits)
    _check_finite(posteriors, "output layer")

    cache = {
        "v_shape": v.shape,
        "conv": conv_caches,
        "flat": flat,
        "pre_flat_shape": x.shape,
        "z1": z1,
        "a1": a1,
        "fc_mask": fc_mask,
        "dense": dense,
        "lstm": lstm_caches,
        "concat": concat,
        "lstm_mask": lstm_mask,
        "lstm_out": lstm_out,
        "posteriors": posteriors,
        "directions": directions,
    }
    return posteriors, cache


def forward(values: np.ndarray, weights: Weights, spec: NetworkSpec,
            plan: ShapePlan) -> EpochPosteriors:
    """Inference pass (dropout disabled)."""
    posteriors, _ = _forward_core(values, weights, spec, plan, dropout_rng=None)
    return EpochPosteriors(posteriors)


def loss_and_grad(values: np.ndarray, labels: np.ndarray, weights: Weights,
                  spec: NetworkSpec, plan: ShapePlan,
                  dropout_rng: np.random.Generator | None = None
                  ) -> tuple[float, dict[str, np.ndarray]]:
    """MSE loss and full reverse-mode gradients for one segment."""
    y = np.asarray(labels, dtype=np.float64)
    posteriors, cache = _forward_core(values, weights, spec, plan, dropout_rng)
    e_count = posteriors.shape[0]
    if y.shape != (e_count,):
        raise DataError(f"labels shape {y.shape} != ({e_count},)")

    diff = posteriors - y
    loss = float(np.mean(diff**2))

    t = weights.tensors
    grads: dict[str, np.ndarray] = {}

    d_post = 2.0 * diff / e_count
    d_logits = d_post * posteriors * (1.0 - posteriors)
    grads["out_w"] = cache["lstm_out"].T @ d_logits[:, None]
    grads["out_b"] = np.array([d_logits.sum()])
    d_lstm_out = d_logits[:, None] @ t["out_w"].T
    if cache["lstm_mask"] is not None:
        d_lstm_out = d_lstm_out * cache["lstm_mask"]

    hidden = spec.lstm_hidden
    d_dense = np.zeros_like(cache["dense"])
    for pos, d in enumerate(cache["directions"]):
        wx, wh, b = _lstm_direction_names(d)
        d_outs = d_lstm_out[:, pos * hidden : (pos + 1) * hidden]
        d_x, d_wx, d_wh, d_b = _lstm_direction_backward(
            d_outs, cache["lstm"][d], t[wx], t[wh]
        )
        grads[wx], grads[wh], grads[b] = d_wx, d_wh, d_b
        d_dense += d_x

    if cache["fc_mask"] is not None:
        d_dense = d_dense * cache["fc_mask"]
    d_z1 = d_dense * _elu_grad(cache["z1"], cache["a1"])
    grads["fc_w"] = cache["flat"].T @ d_z1
    grads["fc_b"] = d_z1.sum(axis=0)
    d_x = (d_z1 @ t["fc_w"].T).reshape(cache["pre_flat_shape"])

    for i in range(len(plan.layers) - 1, -1, -1):
        xp, z, a, pool_cache, mask = cache["conv"][i]
        if mask is not None:
            d_x = d_x * mask
        d_a = _maxpool_backward(d_x, pool_cache)
        d_z = d_a * _elu_grad(z, a)
        d_x, d_w, d_b = _conv2d_backward(d_z, xp, t[f"conv{i}_w"], plan.padding_mode)
        grads[f"conv{i}_w"] = d_w
        grads[f"conv{i}_b"] = d_b

    return loss, grads


def adam_step(weights: Weights, grads: dict[str, np.ndarray],
              hyper: AdamHyper = AdamHyper()) -> Weights:
    """Classic Adam with bias correction; updates weights in place."""
    for name in weights.names():
        g = grads.get(name)
        if g is None:
            raise DataError(f"missing gradient for {name}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for {name}")
    weights.step += 1
    t_step = weights.step
    for name in weights.names():
        g = grads[name]
        m = weights.adam_m[name]
        v = weights.adam_v[name]
        m *= hyper.beta1
        m += (1.0 - hyper.beta1) * g
        v *= hyper.beta2
        v += (1.0 - hyper.beta2) * g * g
        m_hat = m / (1.0 - hyper.beta1**t_step)
        v_hat = v / (1.0 - hyper.beta2**t_step)
        weights.tensors[name] -= hyper.alpha * m_hat / (np.sqrt(v_hat) + hyper.eps)
    return weights


# -- training and inference ------------------------------------------------------

def _segment_dataset(dataset, segment_len: int):
    """Cut (values, labels) pairs into <=segment_len-epoch training segments."""
    segments = []
    for values, labels in dataset:
        v = np.asarray(values)
        y = np.asarray(labels, dtype=np.float64)
        if v.shape[0] != y.shape[0]:
            raise DataError(f"{v.shape[0]} epochs vs {y.shape[0]} labels")
        for start in range(0, v.shape[0], segment_len):
            seg_v = v[start : start + segment_len]
            seg_y = y[start : start + segment_len]
            if seg_v.shape[0] >= 1:
                segments.append((seg_v, seg_y))
    return segments


def train(dataset, spec: NetworkSpec, cfg: TrainConfig
          ) -> tuple[Weights, ShapePlan, list[float]]:
    """Mini-batch Adam training, bit-reproducible for a given seed.

    dataset: iterable of (values (E,10,C,26), labels (E,)) pairs.
    Returns (weights, plan, per-batch loss curve).
    """
    segments = _segment_dataset(dataset, cfg.segment_len)
    if not segments:
        raise DataError("empty training dataset")
    channels = segments[0][0].shape[2]

    all_labels = np.concatenate([y for _, y in segments])
    n_pos = int(np.sum(all_labels > 0.5))
    if n_pos == 0 or n_pos == all_labels.size:
        log.warning("training labels contain a single class; proceeding anyway")

    plan = shape_plan(channels, spec)
    weights = init_weights(spec, plan, cfg.seed)
    losses: list[float] = []

    with threadpool_limits(limits=1):
        for pass_idx in range(cfg.passes):
            order_rng = np.random.default_rng([cfg.seed, pass_idx, 0x5157])
            order = order_rng.permutation(len(segments))
            for batch_start in range(0, len(order), cfg.batch_segments):
                batch = sorted(order[batch_start : batch_start + cfg.batch_segments])

                def segment_grad(seg_idx: int):
                    v, y = segments[seg_idx]
                    rng = np.random.default_rng([cfg.seed, pass_idx, int(seg_idx)])
                    return loss_and_grad(v, y, weights, spec, plan, dropout_rng=rng)

                if cfg.workers > 1:
                    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                        results = list(pool.map(segment_grad, batch))
                else:
                    results = [segment_grad(s) for s in batch]

                # batch already sorted by global segment index: accumulation
                # order is fixed regardless of worker scheduling
                scale = 1.0 / len(results)
                total: dict[str, np.ndarray] = {}
                batch_loss = 0.0
                for seg_loss, grads in results:
                    batch_loss += seg_loss * scale
                    for name, g in grads.items():
                        if name in total:
                            total[name] += g * scale
                        else:
                            total[name] = g * scale
                adam_step(weights, total, cfg.hyper)
                losses.append(batch_loss)

    weights.check_finite()
    return weights, plan, losses


def infer_posteriors(values: np.ndarray, weights: Weights, spec: NetworkSpec,
                     plan: ShapePlan, segment_len: int = 60) -> EpochPosteriors:
    """Posterior for every epoch; non-overlapping segments, tail included."""
    v = np.asarray(values)
    if v.ndim != 4:
        raise DataError(f"expected (epochs, frames, channels, features), got {v.shape}")
    out = []
    with threadpool_limits(limits=1):
        for start in range(0, v.shape[0], segment_len):
            seg = v[start : start + segment_len]
            out.append(forward(seg, weights, spec, plan).values)
    return EpochPosteriors(np.concatenate(out) if out else np.zeros(0))


# -- checkpoint container ---------------------------------------------------------

_CKPT_MAGIC = b"EEGW"
_CKPT_VERSION = 1


def spec_payload(spec: NetworkSpec, channels: int) -> tuple[bytes, bytes]:
    """(canonical JSON, sha256) describing the architecture."""
    doc = {"spec": json.loads(canonical_json(spec)), "channels": channels}
    blob = canonical_json(doc).encode("utf-8")
    return blob, config_digest(doc)


def save_checkpoint(weights: Weights, spec: NetworkSpec, channels: int) -> bytes:
    """Deterministic binary container: spec JSON + hash, tensors, Adam state."""
    def u32(x: int) -> bytes:
        return np.array(x, dtype="<u4").tobytes()

    blob, digest = spec_payload(spec, channels)
    parts = [
        _CKPT_MAGIC,
        u32(_CKPT_VERSION),
        digest,
        u32(len(blob)),
        blob,
        np.array(weights.step, dtype="<u8").tobytes(),
        u32(len(weights.tensors)),
    ]
    for name in weights.names():
        t = weights.tensors[name]
        nb = name.encode("utf-8")
        parts.append(u32(len(nb)))
        parts.append(nb)
        parts.append(u32(t.ndim))
        parts.append(np.asarray(t.shape, dtype="<u4").tobytes())
        parts.append(t.astype("<f8").tobytes())
        parts.append(weights.adam_m[name].astype("<f8").tobytes())
        parts.append(weights.adam_v[name].astype("<f8").tobytes())
    return b"".join(parts)


def load_checkpoint(data: bytes) -> tuple[Weights, NetworkSpec, int, bytes]:
    """Returns (weights, spec, channels, spec_hash)."""
    if data[:4] != _CKPT_MAGIC:
        raise DataError("not a checkpoint (bad magic)")
    pos = 4
    version = int(np.frombuffer(data[pos : pos + 4], "<u4")[0]); pos += 4
    if version != _CKPT_VERSION:
        raise DataError(f"unsupported checkpoint version {version}")
    digest = data[pos : pos + 32]; pos += 32
    blob_len = int(np.frombuffer(data[pos : pos + 4], "<u4")[0]); pos += 4
    try:
        doc = json.loads(data[pos : pos + blob_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"unreadable checkpoint spec payload: {exc}") from None
    pos += blob_len
    if config_digest(doc) != digest:
        raise DataError("checkpoint spec hash does not match its spec payload")
    if not isinstance(doc, dict) or "spec" not in doc or "channels" not in doc:
        raise DataError("checkpoint spec payload missing fields")
    spec = network_spec_from_dict(doc["spec"])
    channels = int(doc["channels"])
    step = int(np.frombuffer(data[pos : pos + 8], "<u8")[0]); pos += 8
    count = int(np.frombuffer(data[pos : pos + 4], "<u4")[0]); pos += 4

    tensors: dict[str, np.ndarray] = {}
    adam_m: dict[str, np.ndarray] = {}
    adam_v: dict[str, np.ndarray] = {}
    for _ in range(count):
        if pos + 4 > len(data):
            raise DataError("truncated checkpoint")
        name_len = int(np.frombuffer(data[pos : pos + 4], "<u4")[0]); pos += 4
        name = data[pos : pos + name_len].decode("utf-8"); pos += name_len
        ndim = int(np.frombuffer(data[pos : pos + 4], "<u4")[0]); pos += 4
        shape = tuple(
            int(x) for x in np.frombuffer(data[pos : pos + 4 * ndim], "<u4")
        ); pos += 4 * ndim
        size = int(np.prod(shape)) if shape else 1
        nbytes = size * 8
        if pos + 3 * nbytes > len(data):
            raise DataError("truncated checkpoint")
        tensors[name] = np.frombuffer(data[pos : pos + nbytes], "<f8").reshape(shape).copy()
        pos += nbytes
        adam_m[name] = np.frombuffer(data[pos : pos + nbytes], "<f8").reshape(shape).copy()
        pos += nbytes
        adam_v[name] = np.frombuffer(data[pos : pos + nbytes], "<f8").reshape(shape).copy()
        pos += nbytes
    if pos != len(data):
        raise DataError("trailing bytes in checkpoint")
    weights = Weights(tensors=tensors, adam_m=adam_m, adam_v=adam_v, step=step)
    weights.check_finite()
    return weights, spec, channels, digest
