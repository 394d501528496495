import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from axbxp.blocked import num_blocks
from axbxp.config import Mode
from axbxp.errors import ConfigurationError, FormatError, RangeError
from axbxp.tensor import (
    AxBxPTensor,
    convert,
    convert_dynamic,
    convert_static,
    deserialize,
    element_bits,
    footprint_bits,
    header_bits,
    payload_bit_length,
    reconstruct,
    serialize,
    start_indices,
    truncate_values,
)


def naive_keep(x, K, n_tilde, start):
    """Bit-level oracle: keep bits [(start-n+1)*K, (start+1)*K) of |x|."""
    mag = abs(int(x))
    lo, hi = (start - n_tilde + 1) * K, (start + 1) * K
    kept = sum(1 << b for b in range(lo, hi) if mag >> b & 1)
    return -kept if x < 0 else kept


def naive_msb_block(x, K):
    mag = abs(int(x))
    return (mag.bit_length() - 1) // K if mag else -1


class BitWriter:
    """Reference bit writer, independent of the numpy packer."""

    def __init__(self):
        self.bits = []

    def write(self, value, width):
        for b in range(width):
            self.bits.append(value >> b & 1)

    def tobytes(self):
        out = bytearray()
        for i in range(0, len(self.bits), 8):
            chunk = self.bits[i:i + 8]
            out.append(sum(bit << j for j, bit in enumerate(chunk)))
        return bytes(out)


def naive_serialize(values, K, n_tilde, mode, scale=1.0):
    N = num_blocks(K)
    flat = [int(v) for v in np.asarray(values).reshape(-1)]
    shape = np.asarray(values).shape
    head = b"AXBP" + bytes([1, 0 if mode == "static" else 1, K, N, n_tilde, len(shape)])
    head += b"".join(struct.pack("<I", d) for d in shape) + struct.pack("<d", scale)
    msbs = [naive_msb_block(v, K) for v in flat]
    if mode == "static":
        shared = max(max(msbs, default=-1), n_tilde - 1)
        head += bytes([shared])
    w = BitWriter()
    for v, m in zip(flat, msbs):
        start = shared if mode == "static" else max(m, n_tilde - 1)
        if mode == "dynamic":
            w.write(start - (n_tilde - 1), math.ceil(math.log2(N - n_tilde + 1)))
        w.write(1 if v < 0 else 0, 1)
        for b in range(start, start - n_tilde, -1):
            w.write(abs(v) >> (b * K) & ((1 << K) - 1), K)
    return head + w.tobytes(), len(w.bits)


tensors = st.lists(st.integers(-127, 127), min_size=0, max_size=40)
configs = st.sampled_from([(K, n) for K in (2, 3, 4) for n in range(1, num_blocks(K) + 1)])
modes = st.sampled_from(list(Mode))


# ------------------------------------------------------------------ conversion


def test_dynamic_examples():
    t = convert_dynamic([3, 24], 2, 1)
    assert list(t.starts()) == [0, 2]
    assert list(reconstruct(t)) == [3, 16]
    t = convert_dynamic([27], 2, 2)
    assert list(t.starts()) == [2] and list(t.data[0]) == [1, 2]
    assert list(reconstruct(t)) == [24]


@pytest.mark.parametrize("K", [2, 3, 4])
@pytest.mark.parametrize("mode", list(Mode))
def test_zero_element(K, mode):
    for n in range(1, num_blocks(K) + 1):
        t = convert([0], K, n, mode)
        assert list(t.starts()) == [n - 1]
        assert not t.data.any()
        assert list(reconstruct(t)) == [0]


def test_static_examples():
    t = convert_static([3, 24], 2, 1)
    assert t.shared_index == 2 and t.per_element_index is None
    assert list(reconstruct(t)) == [0, 16]
    assert list(reconstruct(convert_static([3, 24], 2, 4))) == [3, 24]
    t = convert_static([-3, 24], 2, 1)
    assert list(reconstruct(t)) == [0, 16]
    assert list(t.signs) == [-1, 1]


def test_all_zero_static_tensor():
    t = convert_static(np.zeros((2, 3), dtype=int), 3, 2)
    assert t.shared_index == 1
    assert not reconstruct(t).any()


def test_mode_fields_exclusive():
    d = convert_dynamic([1, 2], 2, 2)
    s = convert_static([1, 2], 2, 2)
    assert d.shared_index is None and d.per_element_index is not None
    assert s.shared_index is not None and s.per_element_index is None


def test_conversion_errors():
    with pytest.raises(ConfigurationError):
        convert_dynamic([1], 2, 5)
    with pytest.raises(ConfigurationError):
        convert_static([1], 4, 0)
    with pytest.raises(RangeError):
        convert_dynamic([128], 2, 1)
    with pytest.raises(RangeError):
        convert_dynamic([1.5], 2, 1)


def test_tensor_invariants_enforced():
    good = convert_dynamic([5], 2, 2)
    with pytest.raises(ConfigurationError):
        AxBxPTensor(shape=(1,), K=2, N=4, n_tilde=2, mode=Mode.DYNAMIC, signs=good.signs,
                    data=good.data, per_element_index=np.array([0], dtype=np.uint8))
    with pytest.raises(ConfigurationError):
        AxBxPTensor(shape=(1,), K=2, N=4, n_tilde=2, mode=Mode.STATIC, signs=good.signs,
                    data=good.data, shared_index=1, per_element_index=good.per_element_index)


@settings(max_examples=200)
@given(tensors, configs, modes)
def test_conversion_matches_bit_oracle(vals, cfg, mode):
    K, n = cfg
    t = convert(vals, K, n, mode)
    msbs = [naive_msb_block(v, K) for v in vals]
    if mode is Mode.STATIC:
        starts = [max(max(msbs, default=-1), n - 1)] * len(vals)
    else:
        starts = [max(m, n - 1) for m in msbs]
    assert list(t.starts()) == starts
    assert t.data.shape == (len(vals), n)
    assert list(reconstruct(t)) == [naive_keep(v, K, n, s) for v, s in zip(vals, starts)]
    assert all(n - 1 <= s <= num_blocks(K) - 1 for s in starts)


@given(tensors, configs, modes)
def test_lossless_and_magnitude(vals, cfg, mode):
    K, n = cfg
    r = reconstruct(convert(vals, K, n, mode))
    v = np.array(vals, dtype=np.int64)
    if n == num_blocks(K):
        assert np.array_equal(r, v)
    assert np.all(np.abs(r) <= np.abs(v))
    assert np.all(r * v >= 0)  # never flips sign


@given(tensors, configs)
def test_dynamic_dominates_static(vals, cfg):
    K, n = cfg
    v = np.array(vals, dtype=np.int64)
    ed = np.abs(v - reconstruct(convert_dynamic(vals, K, n)))
    es = np.abs(v - reconstruct(convert_static(vals, K, n)))
    assert np.all(ed <= es)


@given(st.lists(st.integers(-127, 127), min_size=1, max_size=60), configs, modes)
def test_truncate_values_matches_reconstruct(vals, cfg, mode):
    K, n = cfg
    assert np.array_equal(truncate_values(np.array(vals), K, n, mode),
                          reconstruct(convert(vals, K, n, mode)))


def test_start_indices_per_batch_row():
    v = np.array([[3, 1], [24, 0]])
    s = start_indices(v, 2, 1, Mode.STATIC, batch_axis=0)
    assert s.tolist() == [[0, 0], [2, 2]]
    assert start_indices(v, 2, 1, Mode.STATIC).tolist() == [[2, 2], [2, 2]]


# ------------------------------------------------------------------ footprint


def test_footprint_worked_example():
    assert element_bits(2, 2, Mode.DYNAMIC, sign=False) == 6
    assert element_bits(2, 2, Mode.STATIC, sign=False) == 4
    assert 1 - 6 / 8 == 0.25 and 1 - 4 / 8 == 0.5


def test_lossless_has_no_index_overhead():
    for K in (2, 3, 4):
        N = num_blocks(K)
        assert element_bits(K, N, Mode.DYNAMIC) == element_bits(K, N, Mode.STATIC) == N * K + 1


def test_footprint_total():
    assert footprint_bits(2, 1, Mode.DYNAMIC, 10, include_header=False) == 50
    assert footprint_bits(2, 1, Mode.STATIC, 10, rank=2) == 30 + header_bits(Mode.STATIC, 2)


# -------------------------------------------------------------- serialization


def test_serialize_matches_naive_writer_example():
    t = convert_dynamic([3, 24], 2, 1)
    buf = serialize(t)
    ref, nbits = naive_serialize([3, 24], 2, 1, "dynamic")
    assert buf == ref and nbits == 2 * 5
    # element 0: offset 0, sign 0, block 3; element 1: offset 2, sign 0, block 1
    payload = int.from_bytes(buf[-2:], "little")
    assert payload & 0b11 == 0 and (payload >> 5) & 0b11 == 2
    assert deserialize(buf) == t


@settings(max_examples=150)
@given(st.lists(st.integers(-127, 127), min_size=0, max_size=30), configs, modes,
       st.sampled_from([(-1,), (1, -1), (-1, 1)]))
def test_serialize_matches_naive_writer(vals, cfg, mode, shape):
    K, n = cfg
    arr = np.array(vals, dtype=np.int64).reshape(shape)
    t = convert(arr, K, n, mode, scale=0.25)
    buf = serialize(t)
    ref, nbits = naive_serialize(arr, K, n, mode.value, scale=0.25)
    assert buf == ref
    assert deserialize(buf) == t
    assert serialize(deserialize(buf)) == buf
    if arr.size:
        assert payload_bit_length(buf) == nbits == arr.size * element_bits(K, n, mode)


def test_empty_tensor_is_header_only():
    t = convert_dynamic(np.zeros((0,), dtype=int), 2, 2)
    buf = serialize(t)
    assert len(buf) * 8 == header_bits(Mode.DYNAMIC, 1)
    assert deserialize(buf) == t


def test_payload_bit_length_random_tensors():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        K = int(rng.choice([2, 3, 4]))
        n = int(rng.integers(1, num_blocks(K) + 1))
        mode = Mode.DYNAMIC if rng.random() < 0.5 else Mode.STATIC
        size = int(rng.integers(1, 50))
        t = convert(rng.integers(-127, 128, size), K, n, mode)
        assert payload_bit_length(serialize(t)) == footprint_bits(K, n, mode, size, include_header=False)


@pytest.fixture
def stream():
    return serialize(convert_dynamic([3, -24, 100], 2, 2))


def test_bad_magic(stream):
    with pytest.raises(FormatError):
        deserialize(b"XXXX" + stream[4:])


def test_bad_version(stream):
    with pytest.raises(FormatError):
        deserialize(stream[:4] + b"\x02" + stream[5:])


def test_truncated(stream):
    for cut in (3, 12, len(stream) - 1):
        with pytest.raises(FormatError):
            deserialize(stream[:cut])


def test_trailing_bytes(stream):
    with pytest.raises(FormatError):
        deserialize(stream + b"\x00")


def test_bad_header_fields(stream):
    with pytest.raises(FormatError):
        deserialize(stream[:7] + b"\x05" + stream[8:])  # N inconsistent with K
    with pytest.raises(FormatError):
        deserialize(stream[:6] + b"\x09" + stream[7:])  # mode code
    with pytest.raises(FormatError):
        deserialize(stream[:8] + b"\x07" + stream[9:])  # n_tilde > N


def test_nonzero_padding():
    buf = serialize(convert_dynamic([3], 2, 1))  # 5 payload bits in one byte
    with pytest.raises(FormatError):
        deserialize(buf[:-1] + bytes([buf[-1] | 0x80]))


def test_offset_out_of_range():
    # K=3, n=1: 2-bit offset field, largest legal offset is 2
    buf = bytearray(serialize(convert_dynamic([1], 3, 1)))
    buf[-1] |= 0b11
    with pytest.raises(FormatError):
        deserialize(bytes(buf))


def test_static_bad_shared_index():
    buf = bytearray(serialize(convert_static([1, 2], 2, 2)))
    shared_pos = 10 + 4 + 8
    buf[shared_pos] = 0
    with pytest.raises(FormatError):
        deserialize(bytes(buf))
