import numpy as np
import pytest

from axbxp.config import AxBxPConfig, Mode
from axbxp.design_space import enumerate_pruned
from axbxp.engine import assign_all
from axbxp.errors import ConfigurationError
from axbxp.perf import (
    ArraySpec,
    Fabric,
    cost_report,
    layer_dims,
    mac_cost,
    memory_footprint,
    pe_throughput,
    reduction_ratio,
    systolic_cycles,
    throughput_table,
)
from axbxp.tensor import convert, payload_bit_length, serialize


def test_mac_cost_examples():
    assert mac_cost(None, 2) == 16
    assert mac_cost(AxBxPConfig(2, 1, 2)) == 2
    assert reduction_ratio(AxBxPConfig(2, 1, 2)) == 8


def test_reduction_is_n_squared_over_l():
    for c in enumerate_pruned():
        assert mac_cost(None, c.K) / mac_cost(c) == c.N ** 2 / c.L


def test_throughput_examples():
    assert pe_throughput(AxBxPConfig(2, 1, 1), Fabric.FUSION) == 16
    assert pe_throughput(AxBxPConfig(4, 1, 2)) == 1
    assert pe_throughput(AxBxPConfig(2, 1, 2)) == 2
    assert pe_throughput(None) == 1
    assert pe_throughput(AxBxPConfig(2, 1, 1), Fabric.FXP8) == 1


def test_speedup_ceilings():
    for c in enumerate_pruned():
        assert pe_throughput(c) <= c.N
        if c.K == 2:
            assert pe_throughput(c, Fabric.FUSION) <= 16


def test_fusion_needs_k2():
    with pytest.raises(ConfigurationError):
        pe_throughput(AxBxPConfig(3, 1, 1), Fabric.FUSION)


def test_cycles_examples():
    exact = ArraySpec(32, 32, Fabric.FXP8)
    assert systolic_cycles(32, 32, 32, exact) == 32 + 62
    a = systolic_cycles(64, 40, 32, exact) - 62
    b = systolic_cycles(64, 40, 64, exact) - 62
    assert b == 2 * a
    fast = systolic_cycles(32, 64, 32, config=AxBxPConfig(2, 1, 1)) - 62
    slow = systolic_cycles(32, 64, 32, config=AxBxPConfig(2, 2, 2)) - 62
    assert 2 * fast <= slow
    assert systolic_cycles(0, 5, 5) == 0


def test_cycles_monotone_in_dims():
    cfg = AxBxPConfig(2, 1, 2)
    rng = np.random.default_rng(0)
    for _ in range(200):
        M, R, P = (int(v) for v in rng.integers(1, 200, size=3))
        base = systolic_cycles(M, R, P, config=cfg)
        assert systolic_cycles(M + 1, R, P, config=cfg) >= base
        assert systolic_cycles(M, R + 1, P, config=cfg) >= base
        assert systolic_cycles(M, R, P + 1, config=cfg) >= base


def test_footprint_examples(qmlp):
    fp = memory_footprint(qmlp)
    dims = {d.layer_index: d for d in layer_dims(qmlp)}
    for i, d in dims.items():
        assert fp[f"layer{i}.weight"] == 8 * d.weight_elements
    rep = cost_report(qmlp, {2: AxBxPConfig(2, 1, 2)})
    row = next(l for l in rep.layers if l.layer_index == 2)
    assert row.weight_bits_per_element == 5
    rep = cost_report(qmlp, {2: AxBxPConfig(2, 1, 2, Mode.STATIC)})
    row = next(l for l in rep.layers if l.layer_index == 2)
    assert row.weight_bits_per_element == 3


def test_footprint_matches_serialized_payload(qmlp):
    for cfg in enumerate_pruned():
        for mode in Mode:
            cfg = cfg.with_mode(mode)
            fp = memory_footprint(qmlp, {2: cfg})
            w = qmlp.layers[2].weight.values
            t = convert(w, cfg.K, cfg.n_tilde_w, mode)
            assert fp["layer2.weight"] == payload_bit_length(serialize(t))


def test_cost_report_totals(qmlp, qcnn):
    for q in (qmlp, qcnn):
        rep = cost_report(assign_all(q, AxBxPConfig(2, 1, 1)), K=2, area_ratio=1.2)
        t = rep.totals()
        assert t["cycles"] < t["baseline_cycles"]
        assert t["iso_area_speedup"] == pytest.approx(rep.speedup * 1.2)
        lines = rep.to_csv().splitlines()
        assert len(lines) == 1 + len(q.weighted_indices())
    exact = cost_report(qmlp)
    assert exact.speedup == 1.0
    assert all(l.block_multiplies == 16 * l.macs for l in exact.layers)


def test_layer_dims_cnn(qcnn):
    dims = layer_dims(qcnn)
    assert [(d.kind, d.M, d.R, d.P) for d in dims] == [
        ("conv2d", 8, 9, 64), ("conv2d", 16, 72, 16), ("fc", 32, 64, 1), ("fc", 10, 32, 1)]


def test_throughput_table():
    rows = throughput_table(2)
    assert len(rows) == 5
    first = rows[0]
    assert first["config"].startswith("(2,1,1)") and first["fusion_macs_per_cycle"] == 16
    assert all(r["fusion_macs_per_cycle"] is None for r in throughput_table(4))
