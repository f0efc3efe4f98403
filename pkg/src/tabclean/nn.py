"""Minimal dense/conv1d networks trained by backprop with Adam.

Everything here is plain numpy and pure functions: forward returns a cache,
backward consumes it, adam_step returns fresh parameter and state objects.
The loss is a masked sum of squared errors, so masked-out positions carry
exactly zero loss and zero gradient.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DENSE = "dense"
CONV1D = "conv1d"
ACTIVATIONS = ("relu", "sigmoid", "identity")


class ArchitectureError(ValueError):
    """Layer chain is malformed (shape mismatch or invalid layer spec)."""


class NonFiniteGradientError(FloatingPointError):
    """A gradient turned NaN or infinite; carries the offending layer index."""

    def __init__(self, message: str, layer: int):
        super().__init__(message)
        self.layer = layer


@dataclass(frozen=True)
class LayerSpec:
    """One layer: a dense map (in_width -> out_width) or a length-preserving
    1-d convolution (channels_in -> channels_out, odd kernel, stride 1,
    symmetric zero padding), followed by an activation."""

    kind: str
    activation: str
    in_width: int | None = None
    out_width: int | None = None
    channels_in: int | None = None
    channels_out: int | None = None
    kernel_size: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in (DENSE, CONV1D):
            raise ArchitectureError(f"unknown layer kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise ArchitectureError(f"unknown activation {self.activation!r}")
        if self.kind == DENSE:
            if not (self.in_width and self.out_width) or self.in_width < 1 or self.out_width < 1:
                raise ArchitectureError("dense layer needs positive in_width/out_width")
        else:
            if not (self.channels_in and self.channels_out and self.kernel_size):
                raise ArchitectureError("conv1d layer needs channels and kernel_size")
            if self.kernel_size < 1 or self.kernel_size % 2 == 0:
                raise ArchitectureError("kernel_size must be odd and positive")


def dense(in_width: int, out_width: int, activation: str) -> LayerSpec:
    return LayerSpec(kind=DENSE, activation=activation, in_width=in_width, out_width=out_width)


def conv1d(channels_in: int, channels_out: int, kernel_size: int, activation: str) -> LayerSpec:
    return LayerSpec(
        kind=CONV1D,
        activation=activation,
        channels_in=channels_in,
        channels_out=channels_out,
        kernel_size=kernel_size,
    )


def chain_output_width(layers: Sequence[LayerSpec], input_width: int) -> int:
    """Validate the layer chain against a flat input width; return the flat
    output width. Flat <-> sequence transitions are only legal at a single
    channel, so every intermediate shape is unambiguous."""
    if not layers:
        raise ArchitectureError("empty layer chain")
    kind, a, b = "flat", input_width, 0
    for i, spec in enumerate(layers):
        if spec.kind == DENSE:
            if kind == "seq":
                if a != 1:
                    raise ArchitectureError(
                        f"layer {i}: dense after conv requires 1 channel, got {a}"
                    )
                kind, a = "flat", b
            if a != spec.in_width:
                raise ArchitectureError(
                    f"layer {i}: dense expects width {spec.in_width}, got {a}"
                )
            a = spec.out_width
        else:
            if kind == "flat":
                if spec.channels_in != 1:
                    raise ArchitectureError(
                        f"layer {i}: conv after flat input requires channels_in=1"
                    )
                kind, a, b = "seq", 1, a
            if a != spec.channels_in:
                raise ArchitectureError(
                    f"layer {i}: conv expects {spec.channels_in} channels, got {a}"
                )
            a = spec.channels_out
    if kind == "seq":
        if a != 1:
            raise ArchitectureError(f"chain ends with {a} channels; expected 1 or flat")
        return b
    return a


@dataclass
class ModelParams:
    """Layer chain plus one weight and one bias array per layer.

    Dense weights are (in_width, out_width); conv kernels are
    (channels_out, channels_in, kernel_size); biases are one per output
    unit or channel."""

    layers: tuple[LayerSpec, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]


def init_params(layers: Sequence[LayerSpec], seed: int = 0) -> ModelParams:
    """Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases."""
    rng = np.random.default_rng(seed)
    weights: list[np.ndarray] = []
    biases: list[np.ndarray] = []
    for spec in layers:
        if spec.kind == DENSE:
            fan_in, fan_out = spec.in_width, spec.out_width
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        else:
            k = spec.kernel_size
            fan_in = spec.channels_in * k
            fan_out = spec.channels_out * k
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-limit, limit, size=(spec.channels_out, spec.channels_in, k)))
            biases.append(np.zeros(spec.channels_out))
    return ModelParams(layers=tuple(layers), weights=weights, biases=biases)


def _activate(z: np.ndarray, name: str) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    return z


def _activation_grad(z: np.ndarray, name: str) -> np.ndarray:
    if name == "relu":
        return (z > 0.0).astype(z.dtype)  # subgradient 0 at the kink
    if name == "sigmoid":
        s = _activate(z, "sigmoid")
        return s * (1.0 - s)
    return np.ones_like(z)


def _conv_windows(a: np.ndarray, k: int) -> np.ndarray:
    """(n, c, L) -> (n, c, L, k) sliding windows over symmetric zero padding."""
    pad = (k - 1) // 2
    a_pad = np.pad(a, ((0, 0), (0, 0), (pad, pad)))
    return sliding_window_view(a_pad, k, axis=2)


def forward(params: ModelParams, x: np.ndarray) -> tuple[np.ndarray, list]:
    """Run the chain on a (n_rows, width) batch.

    Returns (output, cache); output is flattened back to (n_rows, out_width).
    The cache holds each layer's input (in layer shape) and pre-activation,
    as consumed by backward."""
    out_width = chain_output_width(params.layers, x.shape[1])
    a = np.asarray(x, dtype=np.float64)
    cache = []
    for spec, w, b in zip(params.layers, params.weights, params.biases):
        if spec.kind == DENSE:
            if a.ndim == 3:
                a = a[:, 0, :]
            z = a @ w + b
        else:
            if a.ndim == 2:
                a = a[:, None, :]
            win = _conv_windows(a, spec.kernel_size)
            z = np.einsum("nclk,ock->nol", win, w) + b[None, :, None]
        cache.append((a, z))
        a = _activate(z, spec.activation)
    if a.ndim == 3:
        a = a[:, 0, :]
    assert a.shape[1] == out_width
    return a, cache


def masked_mse(pred: np.ndarray, target: np.ndarray, mask: np.ndarray) -> float:
    """Sum of squared errors over mask==1 positions only."""
    if pred.shape != target.shape or pred.shape != mask.shape:
        raise ValueError(
            f"shape mismatch: pred {pred.shape}, target {target.shape}, mask {mask.shape}"
        )
    diff = (pred - target) * mask
    return float(np.sum(diff * diff))


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


def backward(
    params: ModelParams,
    cache: list,
    pred: np.ndarray,
    target: np.ndarray,
    mask: np.ndarray,
) -> Gradients:
    """Exact gradients of masked_mse(pred, target, mask) w.r.t. all parameters.

    cache and pred must come from a forward call on these exact params;
    a cache of the wrong length or shape is rejected."""
    if len(cache) != len(params.layers):
        raise ValueError("stale cache: layer count mismatch")
    g = 2.0 * (pred - target) * mask
    grads_w: list[np.ndarray | None] = [None] * len(params.layers)
    grads_b: list[np.ndarray | None] = [None] * len(params.layers)
    for i in range(len(params.layers) - 1, -1, -1):
        spec = params.layers[i]
        a_in, z = cache[i]
        if g.shape != z.shape:
            if g.ndim == 2 and z.ndim == 3 and z.shape[1] == 1:
                g = g[:, None, :]
            elif g.ndim == 3 and z.ndim == 2 and g.shape[1] == 1:
                g = g[:, 0, :]
            else:
                raise ValueError(f"stale cache: layer {i} shape mismatch")
        g = g * _activation_grad(z, spec.activation)
        if spec.kind == DENSE:
            if a_in.shape[1] != params.weights[i].shape[0]:
                raise ValueError(f"stale cache: layer {i} input width mismatch")
            grads_w[i] = a_in.T @ g
            grads_b[i] = g.sum(axis=0)
            g = g @ params.weights[i].T
        else:
            k = spec.kernel_size
            win = _conv_windows(a_in, k)
            grads_w[i] = np.einsum("nclk,nol->ock", win, g)
            grads_b[i] = g.sum(axis=(0, 2))
            win_g = _conv_windows(g, k)
            g = np.einsum("nolk,ock->ncl", win_g, params.weights[i][:, :, ::-1])
    return Gradients(weights=list(grads_w), biases=list(grads_b))


@dataclass
class AdamState:
    """First/second moment accumulators plus hyperparameters and step count."""

    learning_rate: float
    beta1: float
    beta2: float
    epsilon: float
    step: int
    m_weights: list[np.ndarray]
    v_weights: list[np.ndarray]
    m_biases: list[np.ndarray]
    v_biases: list[np.ndarray]


def init_adam(
    params: ModelParams,
    learning_rate: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
) -> AdamState:
    return AdamState(
        learning_rate=learning_rate,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
        step=0,
        m_weights=[np.zeros_like(w) for w in params.weights],
        v_weights=[np.zeros_like(w) for w in params.weights],
        m_biases=[np.zeros_like(b) for b in params.biases],
        v_biases=[np.zeros_like(b) for b in params.biases],
    )


def adam_step(
    params: ModelParams, grads: Gradients, state: AdamState
) -> tuple[ModelParams, AdamState]:
    """One bias-corrected Adam update; returns new params and state.

    Non-finite gradients abort with NonFiniteGradientError naming the layer."""
    for i, (gw, gb) in enumerate(zip(grads.weights, grads.biases)):
        if not (np.isfinite(gw).all() and np.isfinite(gb).all()):
            raise NonFiniteGradientError(
                f"non-finite gradient at layer {i} "
                f"(|w grad| max {np.abs(gw).max():.3g})",
                layer=i,
            )
    t = state.step + 1
    b1, b2, eps, lr = state.beta1, state.beta2, state.epsilon, state.learning_rate
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t

    def update(p, g, m, v):
        m_new = b1 * m + (1.0 - b1) * g
        v_new = b2 * v + (1.0 - b2) * g * g
        p_new = p - lr * (m_new / corr1) / (np.sqrt(v_new / corr2) + eps)
        return p_new, m_new, v_new

    new_w, new_mw, new_vw = [], [], []
    for p, g, m, v in zip(params.weights, grads.weights, state.m_weights, state.v_weights):
        a, b, c = update(p, g, m, v)
        new_w.append(a), new_mw.append(b), new_vw.append(c)
    new_b, new_mb, new_vb = [], [], []
    for p, g, m, v in zip(params.biases, grads.biases, state.m_biases, state.v_biases):
        a, b, c = update(p, g, m, v)
        new_b.append(a), new_mb.append(b), new_vb.append(c)
    return (
        ModelParams(layers=params.layers, weights=new_w, biases=new_b),
        AdamState(
            learning_rate=lr,
            beta1=b1,
            beta2=b2,
            epsilon=eps,
            step=t,
            m_weights=new_mw,
            v_weights=new_vw,
            m_biases=new_mb,
            v_biases=new_vb,
        ),
    )


def save_params(params: ModelParams, path: str) -> None:
    """Serialize layers and arrays to an .npz with a JSON shape manifest."""
    manifest = json.dumps([asdict(spec) for spec in params.layers])
    arrays = {}
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    np.savez(path, manifest=np.array(manifest), **arrays)


def load_params(path: str) -> ModelParams:
    """Load an .npz written by save_params; shapes are re-validated."""
    data = np.load(path, allow_pickle=False)
    layers = tuple(LayerSpec(**entry) for entry in json.loads(str(data["manifest"])))
    weights, biases = [], []
    for i, spec in enumerate(layers):
        w, b = data[f"w{i}"], data[f"b{i}"]
        if spec.kind == DENSE:
            expect_w, expect_b = (spec.in_width, spec.out_width), (spec.out_width,)
        else:
            expect_w = (spec.channels_out, spec.channels_in, spec.kernel_size)
            expect_b = (spec.channels_out,)
        if w.shape != expect_w or b.shape != expect_b:
            raise ArchitectureError(
                f"layer {i}: stored shapes {w.shape}/{b.shape} do not match manifest"
            )
        weights.append(w)
        biases.append(b)
    return ModelParams(layers=layers, weights=weights, biases=biases)


def dense_autoencoder(width: int) -> tuple[LayerSpec, ...]:
    """Bottleneck chain width -> w/2 -> w/4 -> w/2 -> width (hidden floor 8),
    relu inside, sigmoid output to keep reconstructions in (0, 1)."""
    h1 = max(math.ceil(width / 2), 8)
    h2 = max(math.ceil(width / 4), 8)
    return (
        dense(width, h1, "relu"),
        dense(h1, h2, "relu"),
        dense(h2, h1, "relu"),
        dense(h1, width, "sigmoid"),
    )


def conv_autoencoder(channels: int = 16, kernel_size: int = 3) -> tuple[LayerSpec, ...]:
    """Width-agnostic chain 1 -> channels -> channels -> 1 over the feature axis."""
    return (
        conv1d(1, channels, kernel_size, "relu"),
        conv1d(channels, channels, kernel_size, "relu"),
        conv1d(channels, 1, kernel_size, "sigmoid"),
    )


def gradient_check(
    params: ModelParams,
    x: np.ndarray,
    target: np.ndarray,
    mask: np.ndarray,
    h: float = 1e-5,
) -> float:
    """Max relative error between backward() and central finite differences,
    taken over every parameter entry. Only uses forward evaluations on the
    finite-difference side."""
    pred, cache = forward(params, x)
    grads = backward(params, cache, pred, target, mask)

    def loss_with(arrays: list[np.ndarray], which: str) -> float:
        trial = ModelParams(
            layers=params.layers,
            weights=arrays if which == "w" else params.weights,
            biases=arrays if which == "b" else params.biases,
        )
        out, _ = forward(trial, x)
        return masked_mse(out, target, mask)

    worst = 0.0
    for which, tensors, analytic in (
        ("w", params.weights, grads.weights),
        ("b", params.biases, grads.biases),
    ):
        for i, (tensor, g) in enumerate(zip(tensors, analytic)):
            flat = tensor.ravel()
            for idx in range(flat.size):
                bumped = [t.copy() for t in tensors]
                bumped[i].ravel()[idx] = flat[idx] + h
                up = loss_with(bumped, which)
                bumped[i].ravel()[idx] = flat[idx] - h
                down = loss_with(bumped, which)
                fd = (up - down) / (2.0 * h)
                an = g.ravel()[idx]
                err = abs(fd - an) / max(1e-8, abs(fd) + abs(an))
                worst = max(worst, err)
    return worst
