"""A small convolutional trunk with Actor and Object sigmoid heads, in numpy.

Inputs and outputs are channel-last: an input is ``(H, W, C_in)`` or a batch
``(N, H, W, C_in)``; each head emits ``(H/d, W/d, K+1)`` (batched likewise).
Internally everything runs NCHW in float64.

Parameters are a plain ``dict`` mapping names to arrays. Insertion order is
the registration order used by checkpoints and by the optimizer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from .config import ModelConfig

Parameters = Dict[str, np.ndarray]

HEADS = ("actor_head", "object_head")


def logit(p: float) -> float:
    return math.log(p / (1.0 - p))


def sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def param_shapes(config: ModelConfig) -> List[Tuple[str, Tuple[int, ...]]]:
    shapes = []
    c_in = config.in_channels
    for i, spec in enumerate(config.trunk):
        shapes.append((f"conv{i}.weight", (spec.channels, c_in, spec.kernel, spec.kernel)))
        shapes.append((f"conv{i}.bias", (spec.channels,)))
        c_in = spec.channels
    for head in HEADS:
        shapes.append((f"{head}.weight", (config.head_channels, c_in, 1, 1)))
        shapes.append((f"{head}.bias", (config.head_channels,)))
    return shapes


def param_count(config: ModelConfig) -> int:
    return sum(math.prod(s) for _, s in param_shapes(config))


def init_params(config: ModelConfig) -> Parameters:
    """LeCun-uniform weights, zero trunk biases, heads biased to ``head_bias_prob``.

    Head weights are scaled down by 10 so the initial outputs sit close to
    ``head_bias_prob`` regardless of the trunk activations.
    """
    config.validate()
    if config.init != "lecun_uniform":
        raise ValueError(f"unknown init scheme {config.init!r}")
    rng = np.random.default_rng(config.seed)
    params: Parameters = {}
    for name, shape in param_shapes(config):
        if name.endswith(".weight"):
            fan_in = math.prod(shape[1:])
            bound = math.sqrt(3.0 / fan_in)
            if name.split(".")[0] in HEADS:
                bound *= 0.1
            params[name] = rng.uniform(-bound, bound, size=shape)
        elif name.split(".")[0] in HEADS:
            params[name] = np.full(shape, logit(config.head_bias_prob))
        else:
            params[name] = np.zeros(shape)
    return params


# ----------------------------------------------------------------------------
# convolution


def _out_size(n: int, k: int, stride: int, dilation: int) -> int:
    pad = dilation * (k // 2)
    return (n + 2 * pad - dilation * (k - 1) - 1) // stride + 1


def conv_forward(x, w, b, stride=1, dilation=1):
    """Zero-padded ('same' at stride 1) 2-D convolution; returns output and im2col buffer."""
    N, C, H, W = x.shape
    O, _, k, _ = w.shape
    pad = dilation * (k // 2)
    Ho, Wo = _out_size(H, k, stride, dilation), _out_size(W, k, stride, dilation)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols = np.empty((N, C, k, k, Ho, Wo))
    for i in range(k):
        for j in range(k):
            r0, c0 = i * dilation, j * dilation
            cols[:, :, i, j] = xp[:, :, r0 : r0 + stride * (Ho - 1) + 1 : stride, c0 : c0 + stride * (Wo - 1) + 1 : stride]
    cols = cols.reshape(N, C * k * k, Ho * Wo)
    out = np.matmul(w.reshape(O, -1), cols) + b[None, :, None]
    return out.reshape(N, O, Ho, Wo), cols


def conv_backward(dout, cols, w, x_shape, stride=1, dilation=1):
    N, C, H, W = x_shape
    O, _, k, _ = w.shape
    pad = dilation * (k // 2)
    Ho, Wo = dout.shape[2:]
    d2 = dout.reshape(N, O, Ho * Wo)
    dw = np.tensordot(d2, cols, axes=([0, 2], [0, 2])).reshape(w.shape)
    db = d2.sum(axis=(0, 2))
    dcols = np.matmul(w.reshape(O, -1).T, d2).reshape(N, C, k, k, Ho, Wo)
    dxp = np.zeros((N, C, H + 2 * pad, W + 2 * pad))
    for i in range(k):
        for j in range(k):
            r0, c0 = i * dilation, j * dilation
            dxp[:, :, r0 : r0 + stride * (Ho - 1) + 1 : stride, c0 : c0 + stride * (Wo - 1) + 1 : stride] += dcols[:, :, i, j]
    dx = dxp[:, :, pad : pad + H, pad : pad + W] if pad else dxp
    return dx, dw, db


def _activate(z, kind):
    if kind == "tanh":
        return np.tanh(z)
    return np.maximum(z, 0.0)


def _activate_grad(a, kind):
    if kind == "tanh":
        return 1.0 - a * a
    return (a > 0.0).astype(a.dtype)


# ----------------------------------------------------------------------------
# forward / backward


@dataclass
class ForwardCache:
    config: ModelConfig
    batched: bool
    layers: List[tuple] = field(default_factory=list)  # (x_shape, cols, activation output)
    features: np.ndarray = None
    outputs: Dict[str, np.ndarray] = field(default_factory=dict)  # NCHW sigmoid maps


def _to_nchw(x: np.ndarray, config: ModelConfig) -> Tuple[np.ndarray, bool]:
    batched = x.ndim == 4
    if not batched:
        x = x[None]
    if x.shape[1:] != (config.input_height, config.input_width, config.in_channels):
        raise ValueError(
            f"input shape {x.shape[1:]} does not match model "
            f"({config.input_height}, {config.input_width}, {config.in_channels})"
        )
    return np.ascontiguousarray(x.transpose(0, 3, 1, 2), dtype=np.float64), batched


def _to_nhwc(x: np.ndarray, batched: bool) -> np.ndarray:
    out = x.transpose(0, 2, 3, 1)
    return out if batched else out[0]


def forward(params: Parameters, x: np.ndarray, config: ModelConfig):
    """Run the trunk and both heads; returns ``(actor_map, object_map, cache)``."""
    h, batched = _to_nchw(x, config)
    cache = ForwardCache(config, batched)
    for i, spec in enumerate(config.trunk):
        z, cols = conv_forward(h, params[f"conv{i}.weight"], params[f"conv{i}.bias"], spec.stride, spec.dilation)
        a = _activate(z, spec.activation)
        cache.layers.append((h.shape, cols, a))
        h = a
    cache.features = h
    N, C, Hf, Wf = h.shape
    flat = h.reshape(N, C, Hf * Wf)
    maps = []
    for head in HEADS:
        w = params[f"{head}.weight"].reshape(config.head_channels, C)
        z = np.matmul(w, flat) + params[f"{head}.bias"][None, :, None]
        p = sigmoid(z).reshape(N, config.head_channels, Hf, Wf)
        cache.outputs[head] = p
        maps.append(_to_nhwc(p, batched))
    return maps[0], maps[1], cache


def backward(params: Parameters, cache: ForwardCache, grad_actor: np.ndarray, grad_object: np.ndarray) -> Parameters:
    """Parameter gradients given loss gradients w.r.t. the two sigmoid outputs."""
    config = cache.config
    grads: Parameters = {}
    feats = cache.features
    N, C, Hf, Wf = feats.shape
    flat = feats.reshape(N, C, Hf * Wf)
    dfeat = np.zeros_like(flat)
    head_grads = {}
    for head, g in zip(HEADS, (grad_actor, grad_object)):
        g = g if cache.batched else g[None]
        g = g.transpose(0, 3, 1, 2).reshape(N, config.head_channels, Hf * Wf)
        p = cache.outputs[head].reshape(N, config.head_channels, Hf * Wf)
        dz = g * p * (1.0 - p)
        w = params[f"{head}.weight"].reshape(config.head_channels, C)
        head_grads[f"{head}.weight"] = np.tensordot(dz, flat, axes=([0, 2], [0, 2])).reshape(
            params[f"{head}.weight"].shape
        )
        head_grads[f"{head}.bias"] = dz.sum(axis=(0, 2))
        dfeat += np.matmul(w.T, dz)
    da = dfeat.reshape(N, C, Hf, Wf)
    for i in reversed(range(len(config.trunk))):
        spec = config.trunk[i]
        x_shape, cols, a = cache.layers[i]
        dz = da * _activate_grad(a, spec.activation)
        dx, dw, db = conv_backward(dz, cols, params[f"conv{i}.weight"], x_shape, spec.stride, spec.dilation)
        grads[f"conv{i}.weight"] = dw
        grads[f"conv{i}.bias"] = db
        da = dx
    grads.update(head_grads)
    return {name: grads[name] for name in params}


# ----------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    m: Parameters
    v: Parameters
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: Parameters, **hyper) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            **hyper,
        )


def adam_step(params: Parameters, grads: Parameters, state: AdamState) -> Tuple[Parameters, AdamState]:
    """Bias-corrected Adam update; returns new parameters and state, inputs untouched."""
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new_p, new_m, new_v = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name}")
        m = b1 * state.m[name] + (1.0 - b1) * g
        v = b2 * state.v[name] + (1.0 - b2) * g * g
        new_p[name] = p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        new_m[name], new_v[name] = m, v
    return new_p, AdamState(new_m, new_v, t, state.lr, b1, b2, state.eps)
