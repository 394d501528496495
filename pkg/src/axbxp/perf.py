"""Analytical cost model: block products, PE throughput, footprint and cycles.

Energy is reported only through proxy counts (block multiplies, bits moved).
Cycles follow a simple output-stationary systolic model::

    cycles = ceil(M / rows) * ceil(P / cols) * ceil(R / macs_per_cycle) + (rows + cols - 2)

for a GEMM where an ``M x R`` weight matrix meets an ``R x P`` activation
matrix.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from enum import Enum

from .blocked import num_blocks
from .config import AxBxPConfig, Mode
from .design_space import enumerate_pruned
from .errors import ConfigurationError
from .tensor import footprint_bits

FUSION_BRICKS = 16
FXP8_BITS = 8


class Fabric(str, Enum):
    AXBXP = "axbxp"     # N signed (K+1)-bit multipliers per PE
    FUSION = "fusion"   # 16 two-bit bricks per PE (K=2 only)
    FXP8 = "fxp8"       # one 8-bit multiplier per PE


@dataclass(frozen=True)
class ArraySpec:
    rows: int = 32
    cols: int = 32
    fabric: Fabric = Fabric.AXBXP
    dataflow: str = "output_stationary"

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise ConfigurationError("array dimensions must be >= 1")
        object.__setattr__(self, "fabric", Fabric(self.fabric))


def mac_cost(config: AxBxPConfig | None, K: int = 2) -> int:
    """Block products per MAC: ``N**2`` for exact (``config=None``), else ``L``."""
    if config is None:
        return num_blocks(K) ** 2
    return config.L


def reduction_ratio(config: AxBxPConfig) -> float:
    return mac_cost(None, config.K) / mac_cost(config)


def pe_throughput(config: AxBxPConfig | None, fabric: Fabric = Fabric.AXBXP) -> int:
    """Whole MACs completed per cycle by one PE."""
    fabric = Fabric(fabric)
    if fabric is Fabric.FXP8 or config is None:
        return 1
    if fabric is Fabric.FUSION:
        if config.K != 2:
            raise ConfigurationError("the fusion fabric is built from 2-bit bricks (K=2)")
        if config.L > FUSION_BRICKS:
            raise ConfigurationError(f"L={config.L} exceeds {FUSION_BRICKS} bricks")
        return FUSION_BRICKS // config.L
    if config.L > config.N:
        raise ConfigurationError(f"L={config.L} exceeds the PE's {config.N} multipliers")
    return config.N // config.L


def systolic_cycles(M: int, R: int, P: int, array: ArraySpec = ArraySpec(),
                    config: AxBxPConfig | None = None) -> int:
    if min(M, R, P) <= 0:
        return 0
    rate = pe_throughput(config, array.fabric)
    tiles = math.ceil(M / array.rows) * math.ceil(P / array.cols)
    return tiles * math.ceil(R / rate) + array.rows + array.cols - 2


# --------------------------------------------------------------- model shapes


@dataclass(frozen=True)
class LayerDims:
    """GEMM view of a weighted layer for one input sample."""

    layer_index: int
    kind: str
    M: int   # output features / channels
    R: int   # reduction length
    P: int   # output positions
    weight_elements: int
    act_elements: int

    @property
    def macs(self) -> int:
        return self.M * self.R * self.P


def layer_dims(model) -> list[LayerDims]:
    """Trace shapes through a QuantModel or FloatModel."""
    shape = tuple(model.input_shape)
    out = []
    for i, l in enumerate(model.layers):
        w = getattr(l.weight, "values", l.weight)
        if l.kind == "fc":
            M, R = w.shape
            out.append(LayerDims(i, "fc", M, R, 1, w.size, math.prod(shape)))
            shape = (M,)
        elif l.kind == "conv2d":
            C, H, W = shape
            O, _, kh, kw = w.shape
            pad = l.params.get("padding", 0)
            Ho, Wo = H + 2 * pad - kh + 1, W + 2 * pad - kw + 1
            out.append(LayerDims(i, "conv2d", O, C * kh * kw, Ho * Wo, w.size, C * H * W))
            shape = (O, Ho, Wo)
        elif l.kind == "maxpool":
            s = l.params.get("size", 2)
            shape = (shape[0], shape[1] // s, shape[2] // s)
        elif l.kind == "flatten":
            shape = (math.prod(shape),)
    return out


def tensor_bits(config: AxBxPConfig | None, elements: int, role: str,
                include_header: bool = False, rank: int = 1) -> int:
    """Footprint of one data structure; exact tensors cost 8 bits per element."""
    if config is None:
        return FXP8_BITS * elements
    n = config.n_tilde_w if role == "weight" else config.n_tilde_a
    return footprint_bits(config.K, n, config.mode, elements, rank, include_header)


@dataclass
class LayerCost:
    layer_index: int
    kind: str
    config: str
    macs: int
    block_multiplies: int
    weight_bits: int
    act_bits: int
    weight_bits_per_element: float
    act_bits_per_element: float
    traffic_bytes: float
    cycles: int
    baseline_cycles: int
    speedup: float


@dataclass
class CostReport:
    layers: list[LayerCost] = field(default_factory=list)
    area_ratio: float = 1.0

    @property
    def cycles(self) -> int:
        return sum(l.cycles for l in self.layers)

    @property
    def baseline_cycles(self) -> int:
        return sum(l.baseline_cycles for l in self.layers)

    @property
    def speedup(self) -> float:
        return self.baseline_cycles / self.cycles if self.cycles else 1.0

    def totals(self) -> dict:
        return {
            "block_multiplies": sum(l.block_multiplies for l in self.layers),
            "weight_bits": sum(l.weight_bits for l in self.layers),
            "act_bits": sum(l.act_bits for l in self.layers),
            "traffic_bytes": sum(l.traffic_bytes for l in self.layers),
            "cycles": self.cycles,
            "baseline_cycles": self.baseline_cycles,
            "speedup": self.speedup,
            "iso_area_speedup": self.speedup * self.area_ratio,
        }

    def to_dict(self) -> dict:
        return {"layers": [asdict(l) for l in self.layers], "totals": self.totals(),
                "area_ratio": self.area_ratio}

    def to_csv(self) -> str:
        buf = io.StringIO()
        names = list(LayerCost.__dataclass_fields__)
        w = csv.DictWriter(buf, fieldnames=names, lineterminator="\n")
        w.writeheader()
        for l in self.layers:
            w.writerow(asdict(l))
        return buf.getvalue()


def cost_report(model, configs: dict[int, AxBxPConfig | None] | None = None,
                array: ArraySpec = ArraySpec(), batch: int = 1, K: int = 2,
                area_ratio: float = 1.0) -> CostReport:
    """Per-layer costs for one batch; ``configs`` defaults to the model's own.

    Exact layers run at one MAC per cycle on an FxP8 array and cost ``N**2``
    block products per MAC at block width ``K``.
    """
    if configs is None:
        configs = {i: getattr(l, "config", None) for i, l in enumerate(model.layers)}
    report = CostReport(area_ratio=area_ratio)
    base_array = ArraySpec(array.rows, array.cols, Fabric.FXP8)
    for d in layer_dims(model):
        cfg = configs.get(d.layer_index)
        wb = tensor_bits(cfg, d.weight_elements, "weight")
        ab = tensor_bits(cfg, d.act_elements * batch, "act")
        cycles = systolic_cycles(d.M, d.R, d.P * batch, array if cfg else base_array, cfg)
        base = systolic_cycles(d.M, d.R, d.P * batch, base_array)
        kk = cfg.K if cfg else K
        report.layers.append(LayerCost(
            layer_index=d.layer_index, kind=d.kind, config=str(cfg) if cfg else "exact",
            macs=d.macs * batch, block_multiplies=d.macs * batch * mac_cost(cfg, kk),
            weight_bits=wb, act_bits=ab,
            weight_bits_per_element=wb / d.weight_elements,
            act_bits_per_element=ab / (d.act_elements * batch),
            traffic_bytes=(wb + ab) / 8, cycles=cycles, baseline_cycles=base,
            speedup=base / cycles if cycles else 1.0,
        ))
    return report


def memory_footprint(model, configs: dict[int, AxBxPConfig | None] | None = None,
                     batch: int = 1) -> dict[str, int]:
    """Bits per data structure, keyed ``layer<i>.weight`` / ``layer<i>.act``."""
    if configs is None:
        configs = {i: getattr(l, "config", None) for i, l in enumerate(model.layers)}
    out = {}
    for d in layer_dims(model):
        cfg = configs.get(d.layer_index)
        out[f"layer{d.layer_index}.weight"] = tensor_bits(cfg, d.weight_elements, "weight")
        out[f"layer{d.layer_index}.act"] = tensor_bits(cfg, d.act_elements * batch, "act")
    return out


def throughput_table(K: int = 2, mode: Mode = Mode.DYNAMIC) -> list[dict]:
    """MACs/cycle of every pruned configuration on each fabric."""
    rows = []
    for cfg in enumerate_pruned(K, mode):
        row = {"config": str(cfg), "L": cfg.L, "N": cfg.N, "mac_cost": mac_cost(cfg),
               "reduction": reduction_ratio(cfg), "axbxp_macs_per_cycle": pe_throughput(cfg)}
        row["fusion_macs_per_cycle"] = pe_throughput(cfg, Fabric.FUSION) if K == 2 else None
        rows.append(row)
    return rows
