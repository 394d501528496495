"""The Ax-BxP tensor format: block-truncated scalars with shared parameters.

Each element keeps ``n_tilde`` consecutive K-bit blocks, stored most
significant first, plus a sign bit. The start (most significant kept) block
is shared by the whole tensor in static mode and stored per element in
dynamic mode.

AXBP v1 byte layout (little-endian)::

    "AXBP" | version u8 | mode u8 | K u8 | N u8 | n_tilde u8 | rank u8
    | dims u32 * rank | scale f64 | [static: start u8] | packed bitstream

Per element, in row-major order, the bitstream holds
``[dynamic: offset, ceil(log2(N - n_tilde + 1)) bits] sign (1 bit)
block_start .. block_{start-n_tilde+1} (K bits each)``, where
``offset = start - (n_tilde - 1)``. Bits fill each byte from its least
significant bit, and every multi-bit field is written least significant bit
first. Only the end of the stream is zero-padded to a byte boundary.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .blocked import MAX_MAGNITUDE, check_k, num_blocks
from .config import Mode
from .errors import ConfigurationError, FormatError, RangeError

MAGIC = b"AXBP"
VERSION = 1
_FIXED_HEADER = struct.Struct("<4sBBBBBB")


def index_bits(N: int, n_tilde: int) -> int:
    """Per-element index overhead in dynamic mode."""
    return math.ceil(math.log2(N - n_tilde + 1))


def element_bits(K: int, n_tilde: int, mode: Mode, sign: bool = True) -> int:
    """Stored bits per element; ``sign=False`` gives data + index only."""
    N = num_blocks(K)
    bits = n_tilde * K + (1 if sign else 0)
    if Mode(mode) is Mode.DYNAMIC:
        bits += index_bits(N, n_tilde)
    return bits


def header_bits(mode: Mode, rank: int) -> int:
    nbytes = _FIXED_HEADER.size + 4 * rank + 8 + (1 if Mode(mode) is Mode.STATIC else 0)
    return 8 * nbytes


def footprint_bits(K: int, n_tilde: int, mode: Mode, element_count: int,
                   rank: int = 1, include_header: bool = True) -> int:
    total = element_count * element_bits(K, n_tilde, mode)
    if include_header:
        total += header_bits(mode, rank)
    return total


def _as_fxp8(src) -> np.ndarray:
    arr = np.asarray(src)
    if arr.dtype.kind == "f":
        if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
            raise RangeError("FxP8 source must hold integers")
    elif arr.dtype.kind not in "iub":
        raise RangeError(f"unsupported dtype {arr.dtype}")
    arr = arr.astype(np.int64)
    if arr.size and np.abs(arr).max() > MAX_MAGNITUDE:
        raise RangeError(f"FxP8 magnitude exceeds {MAX_MAGNITUDE}")
    return arr


def split_blocks(mag: np.ndarray, K: int) -> np.ndarray:
    """Unsigned blocks of ``mag`` along a new trailing axis, LSB block first."""
    N = num_blocks(K)
    shifts = np.arange(N) * K
    return (mag[..., None] >> shifts) & ((1 << K) - 1)


def msb_block_index(mag: np.ndarray, K: int) -> np.ndarray:
    """Most significant non-zero block per element; -1 where the value is 0."""
    blocks = split_blocks(mag, K)
    nz = blocks != 0
    N = blocks.shape[-1]
    last = N - 1 - np.argmax(nz[..., ::-1], axis=-1)
    return np.where(nz.any(axis=-1), last, -1)


def _check_n_tilde(K: int, n_tilde: int) -> int:
    check_k(K)
    N = num_blocks(K)
    if not 1 <= n_tilde <= N:
        raise ConfigurationError(f"n_tilde={n_tilde} outside [1, {N}] for K={K}")
    return N


@dataclass(frozen=True, eq=False)
class AxBxPTensor:
    """Block-truncated tensor.

    ``data`` has shape ``(size, n_tilde)`` with the most significant kept block
    in column 0. ``signs`` is +1/-1 per element. Exactly one of
    ``shared_index`` (static) and ``per_element_index`` (dynamic) is set; both
    hold start block indices, not offsets.
    """

    shape: tuple[int, ...]
    K: int
    N: int
    n_tilde: int
    mode: Mode
    signs: np.ndarray
    data: np.ndarray
    shared_index: int | None = None
    per_element_index: np.ndarray | None = None
    scale: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "shape", tuple(int(d) for d in self.shape))
        object.__setattr__(self, "mode", Mode(self.mode))
        N = _check_n_tilde(self.K, self.n_tilde)
        if self.N != N:
            raise ConfigurationError(f"N={self.N} inconsistent with K={self.K}")
        size = math.prod(self.shape)
        if self.data.shape != (size, self.n_tilde) or self.signs.shape != (size,):
            raise ConfigurationError("data/sign arrays do not match the tensor shape")
        lo, hi = self.n_tilde - 1, self.N - 1
        if self.mode is Mode.STATIC:
            if self.shared_index is None or self.per_element_index is not None:
                raise ConfigurationError("static tensors carry exactly one shared index")
            if not lo <= self.shared_index <= hi:
                raise ConfigurationError(f"shared start {self.shared_index} outside [{lo}, {hi}]")
        else:
            if self.per_element_index is None or self.shared_index is not None:
                raise ConfigurationError("dynamic tensors carry per-element indices only")
            idx = self.per_element_index
            if idx.shape != (size,) or (size and (idx.min() < lo or idx.max() > hi)):
                raise ConfigurationError(f"per-element starts outside [{lo}, {hi}]")
        if size and (self.data.min() < 0 or self.data.max() >= 1 << self.K):
            raise ConfigurationError("block values exceed K bits")
        if size and not np.all(np.abs(self.signs) == 1):
            raise ConfigurationError("signs must be +1 or -1")
        for arr in (self.signs, self.data, self.per_element_index):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def size(self) -> int:
        return math.prod(self.shape)

    def starts(self) -> np.ndarray:
        if self.mode is Mode.STATIC:
            return np.full(self.size, self.shared_index, dtype=np.int64)
        return self.per_element_index.astype(np.int64)

    def __eq__(self, other) -> bool:
        if not isinstance(other, AxBxPTensor):
            return NotImplemented
        same_idx = (
            self.shared_index == other.shared_index
            if self.mode is Mode.STATIC
            else other.per_element_index is not None
            and np.array_equal(self.per_element_index, other.per_element_index)
        )
        return (
            self.shape == other.shape and self.K == other.K and self.N == other.N
            and self.n_tilde == other.n_tilde and self.mode == other.mode
            and self.scale == other.scale and same_idx
            and np.array_equal(self.signs, other.signs)
            and np.array_equal(self.data, other.data)
        )

    __hash__ = None


def _build(src, K: int, n_tilde: int, mode: Mode, scale: float) -> AxBxPTensor:
    N = _check_n_tilde(K, n_tilde)
    arr = _as_fxp8(src)
    flat = arr.reshape(-1)
    mag = np.abs(flat)
    signs = np.where(flat < 0, -1, 1).astype(np.int8)
    msb = msb_block_index(mag, K)
    if mode is Mode.DYNAMIC:
        starts = np.maximum(msb, n_tilde - 1)
        shared = None
    else:
        top = int(msb.max()) if msb.size else -1
        shared = max(top, n_tilde - 1)
        starts = np.full(flat.shape, shared, dtype=np.int64)
    blocks = split_blocks(mag, K)
    cols = starts[:, None] - np.arange(n_tilde)[None, :]
    data = np.take_along_axis(blocks, cols, axis=1).astype(np.uint8)
    return AxBxPTensor(
        shape=arr.shape, K=K, N=N, n_tilde=n_tilde, mode=mode, signs=signs,
        data=data.reshape(flat.size, n_tilde),
        shared_index=shared,
        per_element_index=None if shared is not None else starts.astype(np.uint8),
        scale=float(scale),
    )


def convert_dynamic(src, K: int, n_tilde: int, scale: float = 1.0) -> AxBxPTensor:
    """Per-element selection anchored at each scalar's leading non-zero block.

    A scalar whose leading block sits below ``n_tilde - 1`` (including zero)
    is anchored at ``n_tilde - 1`` so that the kept range stays in bounds.
    """
    return _build(src, K, n_tilde, Mode.DYNAMIC, scale)


def convert_static(src, K: int, n_tilde: int, scale: float = 1.0) -> AxBxPTensor:
    """One selection for the whole tensor, anchored at its leading non-zero block."""
    return _build(src, K, n_tilde, Mode.STATIC, scale)


def convert(src, K: int, n_tilde: int, mode: Mode, scale: float = 1.0) -> AxBxPTensor:
    return _build(src, K, n_tilde, Mode(mode), scale)


def reconstruct(t: AxBxPTensor) -> np.ndarray:
    """Integer values represented by ``t`` (shape restored)."""
    shifts = (t.starts()[:, None] - np.arange(t.n_tilde)[None, :]) * t.K
    mag = (t.data.astype(np.int64) << shifts).sum(axis=1)
    return (t.signs.astype(np.int64) * mag).reshape(t.shape)


def start_indices(values: np.ndarray, K: int, n_tilde: int, mode: Mode,
                  batch_axis: int | None = None) -> np.ndarray:
    """Most significant kept block for every element of ``values``.

    With ``batch_axis`` set, static mode picks one shared start per slice along
    that axis instead of one for the whole array.
    """
    _check_n_tilde(K, n_tilde)
    arr = _as_fxp8(values)
    msb = msb_block_index(np.abs(arr), K)
    if Mode(mode) is Mode.DYNAMIC:
        return np.maximum(msb, n_tilde - 1)
    if batch_axis is None or arr.ndim == 0:
        top = int(msb.max()) if msb.size else -1
        return np.full(arr.shape, max(top, n_tilde - 1), dtype=np.int64)
    axes = tuple(a for a in range(arr.ndim) if a != batch_axis % arr.ndim)
    top = msb.max(axis=axes, keepdims=True) if msb.size else msb
    return np.broadcast_to(np.maximum(top, n_tilde - 1), arr.shape).copy()


def truncate_values(values: np.ndarray, K: int, n_tilde: int, mode: Mode,
                    batch_axis: int | None = None) -> np.ndarray:
    """``reconstruct(convert(values))`` computed in bulk (see :func:`start_indices`)."""
    N = _check_n_tilde(K, n_tilde)
    arr = _as_fxp8(values)
    if n_tilde == N:
        return arr
    start = start_indices(arr, K, n_tilde, mode, batch_axis)
    mag = np.abs(arr)
    low = (start - n_tilde + 1) * K
    high = (start + 1) * K
    kept = (mag & ((1 << high) - 1)) >> low << low
    return np.where(arr < 0, -kept, kept)


# ---------------------------------------------------------------- serialization


def _field_bits(values: np.ndarray, width: int) -> np.ndarray:
    return ((values[:, None].astype(np.int64) >> np.arange(width)) & 1).astype(np.uint8)


def _payload_columns(t: AxBxPTensor) -> list[tuple[np.ndarray, int]]:
    cols = []
    if t.mode is Mode.DYNAMIC:
        cols.append((t.per_element_index.astype(np.int64) - (t.n_tilde - 1), index_bits(t.N, t.n_tilde)))
    cols.append(((t.signs < 0).astype(np.int64), 1))
    for k in range(t.n_tilde):
        cols.append((t.data[:, k].astype(np.int64), t.K))
    return [(v, w) for v, w in cols if w > 0]


def serialize(t: AxBxPTensor) -> bytes:
    if len(t.shape) > 255:
        raise FormatError("rank exceeds 255")
    head = _FIXED_HEADER.pack(MAGIC, VERSION, t.mode.code, t.K, t.N, t.n_tilde, len(t.shape))
    head += struct.pack(f"<{len(t.shape)}I", *t.shape)
    head += struct.pack("<d", t.scale)
    if t.mode is Mode.STATIC:
        head += struct.pack("<B", t.shared_index)
    if t.size == 0:
        return head
    bits = np.concatenate([_field_bits(v, w) for v, w in _payload_columns(t)], axis=1)
    return head + np.packbits(bits.reshape(-1), bitorder="little").tobytes()


class _Reader:
    def __init__(self, buf: bytes) -> None:
        self.buf = buf
        self.pos = 0

    def take(self, fmt: str):
        s = struct.Struct(fmt)
        if self.pos + s.size > len(self.buf):
            raise FormatError("stream truncated inside header")
        out = s.unpack_from(self.buf, self.pos)
        self.pos += s.size
        return out


def _parse(buf: bytes) -> tuple[AxBxPTensor, int]:
    r = _Reader(bytes(buf))
    magic, version, mode_code, K, N, n_tilde, rank = r.take("<4sBBBBBB")
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    try:
        mode = Mode.from_code(mode_code)
        if N != num_blocks(K):
            raise ConfigurationError(f"N={N} inconsistent with K={K}")
        _check_n_tilde(K, n_tilde)
    except ConfigurationError as exc:
        raise FormatError(str(exc)) from exc
    shape = r.take(f"<{rank}I") if rank else ()
    (scale,) = r.take("<d")
    shared = r.take("<B")[0] if mode is Mode.STATIC else None
    size = math.prod(shape)
    per = element_bits(K, n_tilde, mode)
    nbits = size * per
    nbytes = (nbits + 7) // 8
    payload = r.buf[r.pos:]
    if len(payload) < nbytes:
        raise FormatError("stream truncated inside payload")
    if len(payload) > nbytes:
        raise FormatError("trailing bytes after payload")
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), bitorder="little")
    if bits[nbits:].any():
        raise FormatError("non-zero padding bits")
    bits = bits[:nbits].reshape(size, per).astype(np.int64)

    pos = 0

    def field(width: int) -> np.ndarray:
        nonlocal pos
        chunk = bits[:, pos:pos + width]
        pos += width
        return (chunk << np.arange(width)).sum(axis=1)

    starts = None
    if mode is Mode.DYNAMIC:
        offs = field(index_bits(N, n_tilde))
        if size and offs.max() > N - n_tilde:
            raise FormatError("index offset out of range")
        starts = (offs + n_tilde - 1).astype(np.uint8)
    signs = np.where(field(1) == 1, -1, 1).astype(np.int8)
    data = np.stack([field(K) for _ in range(n_tilde)], axis=1).astype(np.uint8) if size else \
        np.zeros((0, n_tilde), dtype=np.uint8)
    try:
        t = AxBxPTensor(shape=shape, K=K, N=N, n_tilde=n_tilde, mode=mode, signs=signs,
                        data=data, shared_index=shared, per_element_index=starts, scale=scale)
    except ConfigurationError as exc:
        raise FormatError(str(exc)) from exc
    if size and np.abs(reconstruct(t)).max() > MAX_MAGNITUDE:
        raise FormatError(f"decoded magnitude exceeds {MAX_MAGNITUDE}")
    return t, size * pos


def deserialize(buf: bytes) -> AxBxPTensor:
    return _parse(buf)[0]


def payload_bit_length(buf: bytes) -> int:
    """Number of meaningful payload bits in a stream (padding excluded)."""
    return _parse(buf)[1]
