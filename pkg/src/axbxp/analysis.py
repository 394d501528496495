"""Block-significance histograms and static-vs-dynamic truncation error."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .blocked import num_blocks
from .config import Mode
from .engine.quant import QuantModel, QuantTensor, quantize_with_scale
from .engine.layers import forward as float_forward
from .tensor import _as_fxp8, split_blocks, truncate_values


@dataclass
class Histogram:
    counts: np.ndarray
    edges: np.ndarray

    def rows(self) -> list[tuple[float, int]]:
        """(bin left edge, count) pairs."""
        return [(float(e), int(c)) for e, c in zip(self.edges[:-1], self.counts)]


@dataclass
class BlockHistogram:
    nonzero_counts: list[int]
    values: Histogram


def _values(t) -> np.ndarray:
    return t.values if isinstance(t, QuantTensor) else _as_fxp8(t)


def block_histogram(tensor, K: int, bins: int | np.ndarray = 16) -> BlockHistogram:
    """Per block index, how many elements have that block non-zero; plus a value histogram."""
    vals = _values(tensor).reshape(-1)
    blocks = split_blocks(np.abs(vals), K)
    counts = [int(c) for c in (blocks != 0).sum(axis=0)] if vals.size else [0] * num_blocks(K)
    if np.isscalar(bins):
        bins = np.linspace(-127.5, 127.5, int(bins) + 1)
    h, edges = np.histogram(vals, bins=bins)
    return BlockHistogram(counts, Histogram(h, edges))


@dataclass
class HeuristicError:
    errors: np.ndarray
    mae: float
    histogram: Histogram


def error_analysis(tensor, K: int, n_tilde: int, bins: int = 32) -> dict[str, HeuristicError]:
    """Reconstruction error of the static and dynamic selection heuristics."""
    vals = _values(tensor)
    out = {}
    recon = {m: truncate_values(vals, K, n_tilde, m) for m in Mode}
    errs = {m: (vals - recon[m]).reshape(-1) for m in Mode}
    top = max([int(np.abs(e).max()) for e in errs.values() if e.size] + [1])
    edges = np.linspace(-top - 0.5, top + 0.5, bins + 1)
    for m in Mode:
        e = errs[m]
        h, _ = np.histogram(e, bins=edges)
        out[m.value] = HeuristicError(e, float(np.abs(e).mean()) if e.size else 0.0,
                                      Histogram(h, edges))
    return out


def collect_activations(model: QuantModel, x: np.ndarray) -> dict[int, np.ndarray]:
    """Quantized input activations of every weighted layer (exact inference)."""
    fmodel = model.to_float()
    seen: dict[int, np.ndarray] = {}

    def grab(i, a):
        seen[i] = quantize_with_scale(a, model.layers[i].act_scale)
        return seen[i] * model.layers[i].act_scale

    w_exact = lambda i, w: model.layers[i].weight.dequantize()  # noqa: E731
    float_forward(fmodel, x, weight_fn=w_exact, act_fn=grab)
    return seen


def histogram_csv(hist: Histogram) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bin", "count"])
    w.writerows(hist.rows())
    return buf.getvalue()
