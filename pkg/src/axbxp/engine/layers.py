"""Float layers with hand-written backward passes (numpy, float64)."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import InputError

WEIGHTED = ("fc", "conv2d")
KINDS = WEIGHTED + ("relu", "maxpool", "flatten")


@dataclass
class Layer:
    kind: str
    weight: np.ndarray | None = None
    bias: np.ndarray | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise InputError(f"unknown layer kind {self.kind!r}")

    @property
    def weighted(self) -> bool:
        return self.kind in WEIGHTED


@dataclass
class FloatModel:
    layers: list[Layer]
    input_shape: tuple[int, ...]
    num_classes: int

    def weighted_indices(self) -> list[int]:
        return [i for i, l in enumerate(self.layers) if l.weighted]

    def copy(self) -> "FloatModel":
        return copy.deepcopy(self)

    def params(self) -> list[np.ndarray]:
        out = []
        for l in self.layers:
            if l.weighted:
                out += [l.weight, l.bias]
        return out


# ------------------------------------------------------------------ primitives


def im2col(x: np.ndarray, kh: int, kw: int, pad: int) -> np.ndarray:
    """(B, C, H, W) -> (B, Ho*Wo, C*kh*kw) patches, stride 1."""
    B, C, H, W = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    Ho, Wo = H + 2 * pad - kh + 1, W + 2 * pad - kw + 1
    cols = np.empty((B, C, kh, kw, Ho, Wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = xp[:, :, i:i + Ho, j:j + Wo]
    return cols.transpose(0, 4, 5, 1, 2, 3).reshape(B, Ho * Wo, C * kh * kw)


def col2im(cols: np.ndarray, shape: tuple[int, ...], kh: int, kw: int, pad: int) -> np.ndarray:
    B, C, H, W = shape
    Ho, Wo = H + 2 * pad - kh + 1, W + 2 * pad - kw + 1
    c = cols.reshape(B, Ho, Wo, C, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    xp = np.zeros((B, C, H + 2 * pad, W + 2 * pad), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i:i + Ho, j:j + Wo] += c[:, :, i, j]
    return xp[:, :, pad:pad + H, pad:pad + W]


def conv_out_shape(x_shape, weight, pad):
    B, _, H, W = x_shape
    O, _, kh, kw = weight.shape
    return B, O, H + 2 * pad - kh + 1, W + 2 * pad - kw + 1


def maxpool_forward(x: np.ndarray, size: int) -> tuple[np.ndarray, np.ndarray]:
    B, C, H, W = x.shape
    Ho, Wo = H // size, W // size
    win = x[:, :, :Ho * size, :Wo * size].reshape(B, C, Ho, size, Wo, size)
    win = win.transpose(0, 1, 2, 4, 3, 5).reshape(B, C, Ho, Wo, size * size)
    arg = win.argmax(axis=-1)
    return np.take_along_axis(win, arg[..., None], axis=-1)[..., 0], arg


def maxpool_backward(dout: np.ndarray, arg: np.ndarray, shape, size: int) -> np.ndarray:
    B, C, H, W = shape
    Ho, Wo = dout.shape[2:]
    win = np.zeros((B, C, Ho, Wo, size * size), dtype=dout.dtype)
    np.put_along_axis(win, arg[..., None], dout[..., None], axis=-1)
    win = win.reshape(B, C, Ho, Wo, size, size).transpose(0, 1, 2, 4, 3, 5)
    dx = np.zeros(shape, dtype=dout.dtype)
    dx[:, :, :Ho * size, :Wo * size] = win.reshape(B, C, Ho * size, Wo * size)
    return dx


# ------------------------------------------------------------- forward/backward

Transform = Callable[[int, np.ndarray], np.ndarray]


def _identity(_i: int, x: np.ndarray) -> np.ndarray:
    return x


def forward(model: FloatModel, x: np.ndarray, weight_fn: Transform = _identity,
            act_fn: Transform = _identity, cache: list | None = None) -> np.ndarray:
    """Run the float model. ``weight_fn``/``act_fn`` rewrite the weights and
    input activations of weighted layers (used for fake quantization)."""
    x = np.asarray(x, dtype=np.float64).reshape((len(x),) + tuple(model.input_shape))
    for i, l in enumerate(model.layers):
        if l.kind == "fc":
            xin = act_fn(i, x)
            w = weight_fn(i, l.weight)
            out = xin @ w.T + l.bias
            ctx = (xin, w)
        elif l.kind == "conv2d":
            pad = l.params.get("padding", 0)
            xin = act_fn(i, x)
            w = weight_fn(i, l.weight)
            cols = im2col(xin, w.shape[2], w.shape[3], pad)
            B, O, Ho, Wo = conv_out_shape(xin.shape, w, pad)
            out = (cols @ w.reshape(O, -1).T + l.bias).reshape(B, Ho, Wo, O).transpose(0, 3, 1, 2)
            ctx = (cols, w, xin.shape)
        elif l.kind == "relu":
            out = np.maximum(x, 0.0)
            ctx = x > 0
        elif l.kind == "maxpool":
            out, arg = maxpool_forward(x, l.params.get("size", 2))
            ctx = (arg, x.shape)
        else:
            out = x.reshape(len(x), -1)
            ctx = x.shape
        if cache is not None:
            cache.append(ctx)
        x = out
    return x


def backward(model: FloatModel, cache: list, dlogits: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Gradients ``(dW, db)`` per weighted layer, in layer order.

    Gradients pass straight through any weight/activation rewrite applied in
    :func:`forward`.
    """
    grads = []
    d = dlogits
    for l, ctx in zip(reversed(model.layers), reversed(cache)):
        if l.kind == "fc":
            xin, w = ctx
            grads.append((d.T @ xin, d.sum(axis=0)))
            d = d @ w
        elif l.kind == "conv2d":
            cols, w, xshape = ctx
            O = w.shape[0]
            dr = d.transpose(0, 2, 3, 1).reshape(len(d), -1, O)
            dw = np.einsum("bpo,bpk->ok", dr, cols).reshape(w.shape)
            grads.append((dw, dr.sum(axis=(0, 1))))
            d = col2im(dr @ w.reshape(O, -1), xshape, w.shape[2], w.shape[3], l.params.get("padding", 0))
        elif l.kind == "relu":
            d = d * ctx
        elif l.kind == "maxpool":
            arg, xshape = ctx
            d = maxpool_backward(d, arg, xshape, l.params.get("size", 2))
        else:
            d = d.reshape(ctx)
    return grads[::-1]


def softmax_xent(logits: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    n = len(y)
    loss = float(-np.log(p[np.arange(n), y] + 1e-300).mean())
    p[np.arange(n), y] -= 1.0
    return loss, p / n


# ----------------------------------------------------------------- builders


def _init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def build_mlp(sizes: list[int], seed: int = 0, num_classes: int | None = None) -> FloatModel:
    """Fully-connected ReLU network; ``sizes`` includes input and output widths."""
    rng = np.random.default_rng(seed)
    layers: list[Layer] = []
    for k, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        layers.append(Layer("fc", _init(rng, (b, a), a), np.zeros(b)))
        if k < len(sizes) - 2:
            layers.append(Layer("relu"))
    return FloatModel(layers, (sizes[0],), num_classes or sizes[-1])


def build_cnn(seed: int = 0, channels: tuple[int, int] = (8, 16), hidden: int = 32,
              num_classes: int = 10) -> FloatModel:
    """conv3x3-relu-pool, conv3x3-relu-pool, fc-relu, fc on 1x8x8 inputs."""
    rng = np.random.default_rng(seed)
    c1, c2 = channels
    layers = [
        Layer("conv2d", _init(rng, (c1, 1, 3, 3), 9), np.zeros(c1), {"padding": 1}),
        Layer("relu"), Layer("maxpool", params={"size": 2}),
        Layer("conv2d", _init(rng, (c2, c1, 3, 3), 9 * c1), np.zeros(c2), {"padding": 1}),
        Layer("relu"), Layer("maxpool", params={"size": 2}),
        Layer("flatten"),
        Layer("fc", _init(rng, (hidden, c2 * 4), c2 * 4), np.zeros(hidden)),
        Layer("relu"),
        Layer("fc", _init(rng, (num_classes, hidden), hidden), np.zeros(num_classes)),
    ]
    return FloatModel(layers, (1, 8, 8), num_classes)


DEFAULT_MLP = [64, 64, 48, 32, 10]


def build(arch: str = "mlp", seed: int = 0) -> FloatModel:
    if arch == "mlp":
        return build_mlp(DEFAULT_MLP, seed)
    if arch == "cnn":
        return build_cnn(seed)
    raise InputError(f"unknown architecture {arch!r}")
