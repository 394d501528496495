"""Integer (FxP8) inference with optional Ax-BxP truncation per layer."""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field

import numpy as np

from ..blocked import ACC_MAX, ACC_MIN, BlockSelection, pe_mac, to_blocks
from ..config import AxBxPConfig
from ..errors import InputError
from ..tensor import start_indices, truncate_values
from .layers import FloatModel, Layer, conv_out_shape, im2col, maxpool_forward
from .layers import forward as float_forward

log = logging.getLogger(__name__)

QMAX = 127


@dataclass(frozen=True, eq=False)
class QuantTensor:
    """8-bit sign-magnitude integers with a per-tensor scale (value ~ int * scale)."""

    values: np.ndarray
    scale: float

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.int64)
        if v.size and np.abs(v).max() > QMAX:
            raise InputError(f"quantized magnitude exceeds {QMAX}")
        if not self.scale > 0:
            raise InputError(f"scale must be positive, got {self.scale}")
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def dequantize(self) -> np.ndarray:
        return self.values * self.scale


def _check_finite(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise InputError("NaN or Inf in input")
    return x


def scale_for(x: np.ndarray) -> float:
    m = float(np.abs(x).max()) if np.size(x) else 0.0
    return m / QMAX if m > 0 else 1.0


def quantize_with_scale(x: np.ndarray, scale: float) -> np.ndarray:
    """Round half to even and clamp to [-127, 127]."""
    return np.clip(np.round(_check_finite(x) / scale), -QMAX, QMAX).astype(np.int64)


def quantize(x) -> QuantTensor:
    """Symmetric per-tensor quantization with scale ``max|x| / 127``."""
    x = _check_finite(x)
    s = scale_for(x)
    return QuantTensor(quantize_with_scale(x, s), s)


@dataclass
class QuantLayer:
    kind: str
    weight: QuantTensor | None = None
    bias: np.ndarray | None = None  # int32, scale = weight.scale * act_scale
    act_scale: float | None = None  # scale of this layer's quantized input
    config: AxBxPConfig | None = None
    params: dict = field(default_factory=dict)

    @property
    def weighted(self) -> bool:
        return self.weight is not None


@dataclass
class QuantModel:
    layers: list[QuantLayer]
    input_shape: tuple[int, ...]
    num_classes: int

    def weighted_indices(self) -> list[int]:
        return [i for i, l in enumerate(self.layers) if l.weighted]

    def approximable_indices(self, pin_first_last: bool = True) -> list[int]:
        idx = self.weighted_indices()
        return idx[1:-1] if pin_first_last else idx

    @property
    def input_scale(self) -> float:
        return self.layers[self.weighted_indices()[0]].act_scale

    def quantize_input(self, x: np.ndarray) -> QuantTensor:
        return QuantTensor(quantize_with_scale(x, self.input_scale), self.input_scale)

    def configs(self) -> dict[int, AxBxPConfig | None]:
        return {i: self.layers[i].config for i in self.weighted_indices()}

    def with_configs(self, configs: dict[int, AxBxPConfig | None]) -> "QuantModel":
        m = copy.copy(self)
        m.layers = [copy.copy(l) for l in self.layers]
        for i, c in configs.items():
            if not m.layers[i].weighted:
                raise InputError(f"layer {i} ({m.layers[i].kind}) has no weights")
            m.layers[i].config = c
        return m

    def cleared(self) -> "QuantModel":
        return self.with_configs({i: None for i in self.weighted_indices()})

    def to_float(self) -> FloatModel:
        """Dequantized float copy (starting point for fine-tuning)."""
        out = []
        for l in self.layers:
            if l.weighted:
                s = l.weight.scale * l.act_scale
                out.append(Layer(l.kind, l.weight.dequantize(), l.bias * s, dict(l.params)))
            else:
                out.append(Layer(l.kind, params=dict(l.params)))
        return FloatModel(out, tuple(self.input_shape), self.num_classes)


def calibrate(model: FloatModel, calib_x: np.ndarray) -> dict[int, float]:
    """Per weighted layer: scale of its input activations over a calibration batch."""
    scales: dict[int, float] = {}

    def grab(i, x):
        scales[i] = scale_for(x)
        return x

    float_forward(model, calib_x, act_fn=grab)
    return scales


def quantize_model(model: FloatModel, calib_x: np.ndarray,
                   act_scales: dict[int, float] | None = None,
                   configs: dict[int, AxBxPConfig | None] | None = None) -> QuantModel:
    scales = act_scales if act_scales is not None else calibrate(model, calib_x)
    configs = configs or {}
    layers = []
    for i, l in enumerate(model.layers):
        if not l.weighted:
            layers.append(QuantLayer(l.kind, params=dict(l.params)))
            continue
        w = quantize(l.weight)
        bscale = w.scale * scales[i]
        bias = np.clip(np.round(l.bias / bscale), ACC_MIN, ACC_MAX).astype(np.int64)
        layers.append(QuantLayer(l.kind, w, bias, scales[i], configs.get(i), dict(l.params)))
    return QuantModel(layers, tuple(model.input_shape), model.num_classes)


# ------------------------------------------------------------------- integer MACs


@dataclass
class RunStats:
    saturated: int = 0
    macs: int = 0


def _pe_matmul(a: np.ndarray, sa: np.ndarray, w: np.ndarray, sw: np.ndarray,
               bias: np.ndarray, cfg: AxBxPConfig, stats: RunStats) -> np.ndarray:
    """Reference path: every MAC goes through :func:`pe_mac` (slow).

    ``sa``/``sw`` hold the start block index of every operand element; each
    accumulator starts from its bias.
    """
    K = cfg.K
    out = np.zeros((a.shape[0], w.shape[0]), dtype=np.int64)
    for b in range(a.shape[0]):
        for o in range(w.shape[0]):
            acc = int(bias[o])
            for k in range(a.shape[1]):
                r = pe_mac(acc, to_blocks(int(w[o, k]), K),
                           BlockSelection.from_start(int(sw[o, k]), cfg.n_tilde_w),
                           to_blocks(int(a[b, k]), K),
                           BlockSelection.from_start(int(sa[b, k]), cfg.n_tilde_a))
                acc = r.acc
                stats.saturated += r.saturated
            out[b, o] = acc
    stats.macs += a.shape[0] * w.shape[0] * w.shape[1]
    return out


def _accumulate(a: np.ndarray, w: np.ndarray, bias: np.ndarray, stats: RunStats) -> np.ndarray:
    acc = a @ w.T + bias
    over = (acc > ACC_MAX) | (acc < ACC_MIN)
    if over.any():
        stats.saturated += int(over.sum())
        log.warning("32-bit accumulator saturated in %d outputs", int(over.sum()))
        acc = np.clip(acc, ACC_MIN, ACC_MAX)
    stats.macs += a.shape[0] * w.shape[0] * w.shape[1]
    return acc


def _operands(l: QuantLayer, a: np.ndarray, approx: bool) -> tuple[np.ndarray, np.ndarray]:
    w = l.weight.values
    cfg = l.config if approx else None
    if cfg is None:
        return a, w
    cfg.require_pruned(allow_lossless=True)
    a = truncate_values(a, cfg.K, cfg.n_tilde_a, cfg.mode, batch_axis=0)
    w = truncate_values(w, cfg.K, cfg.n_tilde_w, cfg.mode)
    return a, w


def _run(model: QuantModel, x: QuantTensor, approx: bool, use_pe: bool = False,
         stats: RunStats | None = None) -> np.ndarray:
    stats = stats if stats is not None else RunStats()
    vals = x.values.reshape((x.shape[0],) + tuple(model.input_shape))
    h: np.ndarray | None = None  # float activations between weighted layers
    first = True
    for l in model.layers:
        if l.weighted:
            if first:
                a_int, a_scale = vals, x.scale
                first = False
            else:
                a_int, a_scale = quantize_with_scale(h, l.act_scale), l.act_scale
            a_op = a_int
            cfg = l.config if approx else None
            if l.kind == "conv2d":
                pad = l.params.get("padding", 0)
                B, O, Ho, Wo = conv_out_shape(a_int.shape, l.weight.values, pad)
            if cfg is not None and use_pe:
                cfg.require_pruned(allow_lossless=True)
                w2 = l.weight.values.reshape(l.weight.shape[0], -1)
                sw = start_indices(w2, cfg.K, cfg.n_tilde_w, cfg.mode)
                sa = start_indices(a_int, cfg.K, cfg.n_tilde_a, cfg.mode, batch_axis=0)
                if l.kind == "conv2d":
                    kh, kw = l.weight.shape[2:]
                    a_op = im2col(a_int, kh, kw, pad).reshape(-1, w2.shape[1])
                    # padded positions get the smallest valid start
                    base = cfg.n_tilde_a - 1
                    sa = im2col(sa - base, kh, kw, pad).reshape(-1, w2.shape[1]) + base
                acc = _pe_matmul(a_op, sa, w2, sw, l.bias, cfg, stats)
            else:
                a_op, w_op = _operands(l, a_int, approx)
                w2 = w_op.reshape(w_op.shape[0], -1)
                if l.kind == "conv2d":
                    a_op = im2col(a_op, *l.weight.shape[2:], pad).reshape(-1, w2.shape[1])
                acc = _accumulate(a_op, w2, l.bias, stats)
            if l.kind == "conv2d":
                acc = acc.reshape(B, Ho, Wo, O).transpose(0, 3, 1, 2)
            h = acc * (l.weight.scale * a_scale)
        elif l.kind == "relu":
            h = np.maximum(h, 0.0)
        elif l.kind == "maxpool":
            h = maxpool_forward(h, l.params.get("size", 2))[0]
        else:
            h = h.reshape(len(h), -1)
    return h


def _as_input(model: QuantModel, x) -> QuantTensor:
    if isinstance(x, QuantTensor):
        return x
    return model.quantize_input(np.asarray(x))


def forward_exact(model: QuantModel, x, stats: RunStats | None = None) -> np.ndarray:
    """Logits from exact FxP8 MACs in 32-bit accumulators (configs ignored)."""
    return _run(model, _as_input(model, x), approx=False, stats=stats)


def forward_axbxp(model: QuantModel, x, use_pe: bool = False,
                  stats: RunStats | None = None) -> np.ndarray:
    """Logits with each configured layer's operands block-truncated.

    Static-mode activation indices are shared per input sample. ``use_pe``
    routes every MAC through :func:`~axbxp.blocked.pe_mac` instead of the
    equivalent truncate-then-matmul path.
    """
    return _run(model, _as_input(model, x), approx=True, use_pe=use_pe, stats=stats)


def accuracy(model: QuantModel, x: np.ndarray, y: np.ndarray, approx: bool = True) -> float:
    """Top-1 accuracy in percent."""
    if len(y) == 0:
        return 0.0
    logits = forward_axbxp(model, x) if approx else forward_exact(model, x)
    return 100.0 * float(np.mean(logits.argmax(axis=1) == y))


def assign_all(model: QuantModel, cfg: AxBxPConfig | None, pin_first_last: bool = True) -> QuantModel:
    return model.with_configs({i: cfg for i in model.approximable_indices(pin_first_last)})
