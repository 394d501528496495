import itertools

import pytest
from hypothesis import given, strategies as st

from axbxp.blocked import (
    ACC_MAX,
    ACC_MIN,
    BlockSelection,
    BxPScalar,
    PartialProductSet,
    approx_blocked_mul,
    exact_blocked_mul,
    from_blocks,
    num_blocks,
    pe_mac,
    to_blocks,
    truncate,
)
from axbxp.errors import BlockIndexError, ConfigurationError, RangeError

values = st.integers(-127, 127)
ks = st.sampled_from([2, 3, 4])


def bitslice(x, K, i):
    """Independent oracle: bits [i*K, (i+1)*K) of |x| via string slicing."""
    bits = format(abs(x), "012b")[::-1]  # LSB first
    return int(bits[i * K:(i + 1) * K][::-1] or "0", 2)


@pytest.mark.parametrize("x,K,sign,blocks", [
    (27, 2, 1, (3, 2, 1, 0)),
    (-27, 2, -1, (3, 2, 1, 0)),
    (24, 2, 1, (0, 2, 1, 0)),
    (0, 3, 1, (0, 0, 0)),
])
def test_to_blocks_examples(x, K, sign, blocks):
    s = to_blocks(x, K)
    assert (s.sign, s.blocks, s.N) == (sign, blocks, num_blocks(K))


def test_to_blocks_matches_bitslice_oracle():
    for K in (2, 3, 4):
        for x in range(-127, 128):
            assert to_blocks(x, K).blocks == tuple(bitslice(x, K, i) for i in range(num_blocks(K)))


def test_to_blocks_range():
    with pytest.raises(RangeError):
        to_blocks(128, 2)
    with pytest.raises(RangeError):
        to_blocks(-200, 4)
    with pytest.raises(ConfigurationError):
        to_blocks(3, 1)


def test_block_counts():
    assert [num_blocks(k) for k in (2, 3, 4)] == [4, 3, 2]


def test_k3_high_bits_zero():
    # N*K = 9 > 8: block 2 never uses its top bit for an 8-bit source
    assert max(to_blocks(x, 3).blocks[2] for x in range(128)) == 127 >> 6


@pytest.mark.parametrize("blocks,K,sign,expected", [
    ((3, 2, 1, 0), 2, 1, 27),
    ((0, 0, 0, 0), 2, -1, 0),
    ((0, 0), 4, -1, 0),
    ((1, 3, 0), 3, -1, -25),
])
def test_from_blocks_examples(blocks, K, sign, expected):
    assert from_blocks(BxPScalar(sign, blocks, K)) == expected


@given(values, ks)
def test_round_trip(x, K):
    assert from_blocks(to_blocks(x, K)) == x


def test_scalar_rejects_sign_bit_collision():
    with pytest.raises(RangeError):
        BxPScalar(1, (0, 8), 4)  # 128 needs the packed sign bit


def test_exact_mul_examples():
    assert exact_blocked_mul(to_blocks(27, 2), to_blocks(13, 2)) == 351
    assert exact_blocked_mul(to_blocks(-27, 2), to_blocks(13, 2)) == -351
    for x in (-127, -5, 0, 99):
        assert exact_blocked_mul(to_blocks(x, 3), to_blocks(0, 3)) == 0


def test_exact_mul_layout_mismatch():
    with pytest.raises(ConfigurationError):
        exact_blocked_mul(to_blocks(3, 2), to_blocks(3, 4))


def test_approx_mul_examples():
    x, y = to_blocks(27, 2), to_blocks(13, 2)
    assert approx_blocked_mul(x, BlockSelection((2, 1)), y, BlockSelection((1,))) == 288
    assert approx_blocked_mul(x, BlockSelection((3,)), y, BlockSelection((1,))) == 0
    full = BlockSelection.full(4)
    assert approx_blocked_mul(x, full, y, full) == exact_blocked_mul(x, y)


def test_approx_mul_brute_force_partial_products():
    x, y = to_blocks(27, 2), to_blocks(13, 2)
    pairs = PartialProductSet.regular(BlockSelection((1, 2)), BlockSelection((1,)))
    brute = sum(x.blocks[i] * y.blocks[j] * 2 ** ((i + j) * 2) for i, j in pairs.pairs)
    assert brute == 288 and pairs.L == 2


def test_selection_validation():
    with pytest.raises(BlockIndexError):
        approx_blocked_mul(to_blocks(1, 4), BlockSelection((2,)), to_blocks(1, 4), BlockSelection((0,)))
    with pytest.raises(ConfigurationError):
        BlockSelection((0, 2))
    with pytest.raises(ConfigurationError):
        BlockSelection(())
    assert BlockSelection.from_start(2, 2).indices == (1, 2)


@given(values, values, ks, st.data())
def test_truncation_semantics(x, y, K, data):
    N = num_blocks(K)
    nx = data.draw(st.integers(1, N))
    ny = data.draw(st.integers(1, N))
    sx = BlockSelection.from_start(data.draw(st.integers(nx - 1, N - 1)), nx)
    sy = BlockSelection.from_start(data.draw(st.integers(ny - 1, N - 1)), ny)
    bx, by = to_blocks(x, K), to_blocks(y, K)
    expect = from_blocks(truncate(bx, sx)) * from_blocks(truncate(by, sy))
    assert approx_blocked_mul(bx, sx, by, sy) == expect


@given(values, values, ks, st.data())
def test_monotone_refinement(x, y, K, data):
    N = num_blocks(K)
    start_x = data.draw(st.integers(0, N - 1))
    start_y = data.draw(st.integers(0, N - 1))
    bx, by = to_blocks(x, K), to_blocks(y, K)
    exact = x * y
    prev = None
    # grow the x selection downward one block at a time, y fixed
    sy = BlockSelection.from_start(start_y, 1)
    for n in range(1, start_x + 2):
        err = abs(exact - approx_blocked_mul(bx, BlockSelection.from_start(start_x, n), by, sy))
        if prev is not None:
            assert err <= prev
        prev = err


def test_shift_identity():
    for K in (2, 3, 4):
        N = num_blocks(K)
        for i, j in itertools.product(range(N), repeat=2):
            assert PartialProductSet.shift(i, j, K) == (i + j) * K
            # a single-block product lands exactly at that shift
            x = BxPScalar(1, tuple(1 if b == i else 0 for b in range(N)), K)
            y = BxPScalar(1, tuple(1 if b == j else 0 for b in range(N)), K)
            if x.magnitude < 128 and y.magnitude < 128:
                assert exact_blocked_mul(x, y) == 1 << ((i + j) * K)


def test_pe_mac_examples():
    w, a = to_blocks(27, 2), to_blocks(13, 2)
    full = BlockSelection.full(4)
    assert pe_mac(0, w, full, a, full) == (351, False)
    assert pe_mac(100, to_blocks(0, 2), full, a, full).acc == 100
    assert pe_mac(100, w, full, to_blocks(0, 2), full).acc == 100
    assert pe_mac(0, w, BlockSelection((2, 1)), a, BlockSelection((1,))).acc == 288


def test_pe_mac_signs():
    for x, y in [(-27, 13), (27, -13), (-27, -13)]:
        full = BlockSelection.full(4)
        assert pe_mac(0, to_blocks(x, 2), full, to_blocks(y, 2), full).acc == x * y


def test_pe_mac_saturates():
    full = BlockSelection.full(2)
    big = to_blocks(127, 4)
    r = pe_mac(ACC_MAX - 10, big, full, big, full)
    assert r == (ACC_MAX, True)
    r = pe_mac(ACC_MIN + 10, big, full, to_blocks(-127, 4), full)
    assert r == (ACC_MIN, True)
