"""Float training and Ax-BxP-aware fine-tuning with straight-through gradients."""

from __future__ import annotations

import logging

import numpy as np

from ..config import AxBxPConfig
from ..errors import TrainingError
from ..tensor import truncate_values
from .data import Dataset
from .layers import FloatModel, backward, build, forward, softmax_xent
from .quant import QuantModel, accuracy, quantize, quantize_model, quantize_with_scale

log = logging.getLogger(__name__)


class Adam:
    def __init__(self, params: list[np.ndarray], lr: float = 1e-2,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8) -> None:
        self.params = params
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def loss_and_grads(model: FloatModel, x: np.ndarray, y: np.ndarray,
                   weight_fn=None, act_fn=None) -> tuple[float, list[np.ndarray]]:
    """Mean cross-entropy and flat gradient list matching ``model.params()``."""
    cache: list = []
    kw = {}
    if weight_fn is not None:
        kw["weight_fn"] = weight_fn
    if act_fn is not None:
        kw["act_fn"] = act_fn
    logits = forward(model, x, cache=cache, **kw)
    loss, dlogits = softmax_xent(logits, y)
    flat = []
    for dw, db in backward(model, cache, dlogits):
        flat += [dw, db]
    return loss, flat


def dataset_loss(model: FloatModel, x: np.ndarray, y: np.ndarray) -> float:
    return softmax_xent(forward(model, x), y)[0]


def float_accuracy(model: FloatModel, x: np.ndarray, y: np.ndarray) -> float:
    return 100.0 * float(np.mean(forward(model, x).argmax(axis=1) == y))


def _epoch(model: FloatModel, opt: Adam, x: np.ndarray, y: np.ndarray, rng: np.random.Generator,
           batch_size: int, weight_fn=None, act_fn=None) -> float:
    order = rng.permutation(len(x))
    total = 0.0
    for s in range(0, len(x), batch_size):
        idx = order[s:s + batch_size]
        loss, grads = loss_and_grads(model, x[idx], y[idx], weight_fn, act_fn)
        if not np.isfinite(loss):
            raise TrainingError("loss diverged to a non-finite value")
        opt.step(grads)
        total += loss * len(idx)
    return total / max(len(x), 1)


def train_tiny(dataset: Dataset, epochs: int = 30, seed: int = 0, arch: str = "mlp",
               lr: float = 1e-2, batch_size: int = 32,
               history: list[float] | None = None) -> FloatModel:
    """Train a small classifier on ``dataset`` from a seeded initialization.

    ``history`` (if given) receives the full-train-set loss before training and
    after every epoch.
    """
    model = build(arch, seed)
    rng = np.random.default_rng(seed + 1)
    opt = Adam(model.params(), lr=lr)
    if history is not None:
        history.append(dataset_loss(model, dataset.train_x, dataset.train_y))
    for ep in range(epochs):
        _epoch(model, opt, dataset.train_x, dataset.train_y, rng, batch_size)
        if history is not None:
            history.append(dataset_loss(model, dataset.train_x, dataset.train_y))
        log.debug("epoch %d done", ep + 1)
    return model


def fake_quant_fns(model: QuantModel, configs: dict[int, AxBxPConfig | None]):
    """Weight/activation rewrites reproducing the integer engine in float."""
    scales = {i: model.layers[i].act_scale for i in model.weighted_indices()}

    def weight_fn(i: int, w: np.ndarray) -> np.ndarray:
        q = quantize(w)
        vals = q.values
        cfg = configs.get(i)
        if cfg is not None:
            vals = truncate_values(vals, cfg.K, cfg.n_tilde_w, cfg.mode)
        return vals * q.scale

    def act_fn(i: int, x: np.ndarray) -> np.ndarray:
        s = scales[i]
        vals = quantize_with_scale(x, s)
        cfg = configs.get(i)
        if cfg is not None:
            vals = truncate_values(vals, cfg.K, cfg.n_tilde_a, cfg.mode, batch_axis=0)
        return vals * s

    return weight_fn, act_fn


def finetune_axbxp(model: QuantModel, configs: dict[int, AxBxPConfig | None] | None,
                   dataset: Dataset, epochs: int, gamma: float | None = None,
                   baseline: float | None = None, lr: float = 1e-3, batch_size: int = 32,
                   seed: int = 0) -> tuple[QuantModel, int]:
    """Re-train ``model`` under Ax-BxP fake quantization.

    Training stops after ``epochs`` epochs, or earlier once the accuracy drop
    versus ``baseline`` on the test split is within ``gamma`` (when both are
    given). Activation scales stay fixed. Returns the re-quantized model and
    the number of epochs run.
    """
    configs = model.configs() if configs is None else {**model.configs(), **configs}
    current = model.with_configs(configs)
    if epochs <= 0:
        return current, 0
    scales = {i: current.layers[i].act_scale for i in current.weighted_indices()}
    fmodel = current.to_float()
    weight_fn, act_fn = fake_quant_fns(current, configs)
    opt = Adam(fmodel.params(), lr=lr)
    rng = np.random.default_rng(seed)

    def drop() -> float:
        return baseline - accuracy(current, dataset.test_x, dataset.test_y)

    done = 0
    while done < epochs and (gamma is None or baseline is None or gamma < drop()):
        _epoch(fmodel, opt, dataset.train_x, dataset.train_y, rng, batch_size, weight_fn, act_fn)
        current = quantize_model(fmodel, None, act_scales=scales, configs=configs)
        done += 1
    return current, done
