"""Sign-magnitude blocked fixed-point scalars and blocked multiplication.

An 8-bit sign-magnitude value ``x`` (``|x| <= 127``) is split into
``N = ceil(8 / K)`` unsigned blocks of ``K`` bits, block 0 being the least
significant. Multiplying two such values exactly takes ``N**2`` block
products, each shifted left by ``(i + j) * K``. The approximate product keeps
only the block products whose indices fall in the two operand selections.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

from .errors import BlockIndexError, ConfigurationError, RangeError

SOURCE_BITS = 8
MAX_MAGNITUDE = 127
VALID_K = (2, 3, 4)
ACC_BITS = 32
ACC_MAX = 2 ** (ACC_BITS - 1) - 1
ACC_MIN = -ACC_MAX


def num_blocks(K: int) -> int:
    """Number of K-bit blocks needed for an 8-bit operand."""
    check_k(K)
    return math.ceil(SOURCE_BITS / K)


def check_k(K: int) -> None:
    if K not in VALID_K:
        raise ConfigurationError(f"block width K must be one of {VALID_K}, got {K!r}")


@dataclass(frozen=True)
class BxPScalar:
    """A sign-magnitude value held as ``N`` unsigned K-bit blocks (LSB first)."""

    sign: int
    blocks: tuple[int, ...]
    K: int

    def __post_init__(self) -> None:
        check_k(self.K)
        if self.sign not in (1, -1):
            raise ConfigurationError(f"sign must be +1 or -1, got {self.sign!r}")
        if len(self.blocks) != num_blocks(self.K):
            raise ConfigurationError(
                f"K={self.K} needs {num_blocks(self.K)} blocks, got {len(self.blocks)}"
            )
        top = (1 << self.K) - 1
        for b in self.blocks:
            if not 0 <= b <= top:
                raise RangeError(f"block value {b} outside [0, {top}]")
        if self.magnitude >= 1 << (self.N * self.K - 1):
            raise RangeError("magnitude collides with the packed sign bit")

    @property
    def N(self) -> int:
        return len(self.blocks)

    @property
    def magnitude(self) -> int:
        return sum(b << (i * self.K) for i, b in enumerate(self.blocks))

    def msb_block(self) -> int:
        """Index of the most significant non-zero block, or -1 for zero."""
        for i in range(self.N - 1, -1, -1):
            if self.blocks[i]:
                return i
        return -1

    def signed_block(self, i: int) -> int:
        """Block ``i`` widened to a signed (K+1)-bit value carrying the operand sign."""
        return self.sign * self.blocks[i]


@dataclass(frozen=True)
class BlockSelection:
    """Sorted, contiguous set of block indices kept for one operand."""

    indices: tuple[int, ...]

    def __post_init__(self) -> None:
        idx = tuple(sorted(self.indices))
        if not idx:
            raise ConfigurationError("a block selection needs at least one block")
        if len(set(idx)) != len(idx):
            raise ConfigurationError(f"duplicate block indices in {self.indices}")
        if idx[0] < 0:
            raise BlockIndexError(f"negative block index in {self.indices}")
        if idx[-1] - idx[0] != len(idx) - 1:
            raise ConfigurationError(f"block indices {idx} are not contiguous")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def from_start(cls, start: int, count: int) -> "BlockSelection":
        """``count`` blocks running downward from ``start`` (inclusive)."""
        return cls(tuple(range(start - count + 1, start + 1)))

    @classmethod
    def full(cls, N: int) -> "BlockSelection":
        return cls(tuple(range(N)))

    @property
    def start(self) -> int:
        return self.indices[-1]

    @property
    def count(self) -> int:
        return len(self.indices)

    @property
    def contiguous(self) -> bool:
        return True

    def check(self, N: int) -> None:
        if self.indices[-1] >= N:
            raise BlockIndexError(f"block index {self.indices[-1]} out of range for N={N}")

    def __iter__(self):
        return iter(self.indices)

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class PartialProductSet:
    """The block-index pairs (i, j) whose products are evaluated."""

    pairs: frozenset[tuple[int, int]]

    @classmethod
    def regular(cls, sel_x: BlockSelection, sel_y: BlockSelection) -> "PartialProductSet":
        return cls(frozenset(itertools.product(sel_x.indices, sel_y.indices)))

    @classmethod
    def exact(cls, N: int) -> "PartialProductSet":
        return cls.regular(BlockSelection.full(N), BlockSelection.full(N))

    @property
    def L(self) -> int:
        return len(self.pairs)

    @staticmethod
    def shift(i: int, j: int, K: int) -> int:
        return (i + j) * K


class MacResult(NamedTuple):
    acc: int
    saturated: bool


def to_blocks(x: int, K: int) -> BxPScalar:
    """Split an 8-bit sign-magnitude integer into K-bit blocks."""
    x = int(x)
    if abs(x) > MAX_MAGNITUDE:
        raise RangeError(f"|{x}| exceeds {MAX_MAGNITUDE}")
    N = num_blocks(K)
    mag = abs(x)
    mask = (1 << K) - 1
    blocks = tuple((mag >> (i * K)) & mask for i in range(N))
    return BxPScalar(-1 if x < 0 else 1, blocks, K)


def from_blocks(x: BxPScalar) -> int:
    return x.sign * x.magnitude


def truncate(x: BxPScalar, sel: BlockSelection) -> BxPScalar:
    """Zero every block of ``x`` outside ``sel``."""
    sel.check(x.N)
    keep = set(sel.indices)
    return BxPScalar(x.sign, tuple(b if i in keep else 0 for i, b in enumerate(x.blocks)), x.K)


def _check_pair(x: BxPScalar, y: BxPScalar) -> None:
    if x.K != y.K or x.N != y.N:
        raise ConfigurationError(f"operand layouts differ: K={x.K}/{y.K}, N={x.N}/{y.N}")


def _sum_products(x: BxPScalar, y: BxPScalar, rows: Iterable[int], cols: Iterable[int]) -> int:
    cols = tuple(cols)
    total = 0
    for i in rows:
        for j in cols:
            total += (x.blocks[i] * y.blocks[j]) << PartialProductSet.shift(i, j, x.K)
    return x.sign * y.sign * total


def exact_blocked_mul(x: BxPScalar, y: BxPScalar) -> int:
    """Exact product through all ``N**2`` shifted block products."""
    _check_pair(x, y)
    return _sum_products(x, y, range(x.N), range(y.N))


def approx_blocked_mul(
    x: BxPScalar, sel_x: BlockSelection, y: BxPScalar, sel_y: BlockSelection
) -> int:
    """Product restricted to the block pairs in ``sel_x`` x ``sel_y``."""
    _check_pair(x, y)
    sel_x.check(x.N)
    sel_y.check(y.N)
    return _sum_products(x, y, sel_x.indices, sel_y.indices)


def saturate(value: int) -> MacResult:
    if value > ACC_MAX:
        return MacResult(ACC_MAX, True)
    if value < ACC_MIN:
        return MacResult(ACC_MIN, True)
    return MacResult(value, False)


def pe_mac(
    acc: int,
    w: BxPScalar,
    sel_w: BlockSelection,
    a: BxPScalar,
    sel_a: BlockSelection,
) -> MacResult:
    """One processing-element MAC step into a saturating 32-bit accumulator.

    Every selected block is widened to a signed (K+1)-bit operand, multiplied,
    and shifted left by ``(i + j) * K`` before being added to ``acc``.
    """
    _check_pair(w, a)
    sel_w.check(w.N)
    sel_a.check(a.N)
    lim = 1 << w.K  # signed (K+1)-bit range is [-2**K, 2**K - 1]
    total = 0
    for i in sel_w:
        wi = w.signed_block(i)
        assert -lim <= wi < lim
        for j in sel_a:
            aj = a.signed_block(j)
            total += (wi * aj) << PartialProductSet.shift(i, j, w.K)
    return saturate(acc + total)
