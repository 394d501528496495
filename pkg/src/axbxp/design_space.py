"""Counting and enumerating the Ax-BxP design space.

Three levels are exposed: the unconstrained space of arbitrary partial-product
subsets for a bit-width, the constrained space (``K`` in 2..4, ``L <= N``),
and the pruned space of regular, significance-anchored selections with
``n_tilde_a >= n_tilde_w`` that the configuration search walks.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from math import comb

from .blocked import VALID_K, check_k, num_blocks
from .config import AxBxPConfig, Mode
from .errors import ConfigurationError

CONSTRAINED_N = (2, 3, 4)


class ConstraintLevel(str, Enum):
    UNCONSTRAINED = "unconstrained"
    CONSTRAINED = "constrained"
    PRUNED = "pruned"


@dataclass(frozen=True)
class DesignSpace:
    configs: tuple[AxBxPConfig, ...]
    constraint_level: ConstraintLevel = ConstraintLevel.PRUNED

    def __len__(self) -> int:
        return len(self.configs)

    def __iter__(self):
        return iter(self.configs)

    def tuples(self) -> list[tuple[int, int, int]]:
        return [c.tuple for c in self.configs]


def size_unconstrained(bw: int) -> int:
    """Number of partial-product subsets over every block count 1..bw."""
    if bw < 1:
        raise ConfigurationError(f"bit-width must be >= 1, got {bw}")
    return sum(comb(n * n, L) for n in range(1, bw + 1) for L in range(1, n * n + 1))


def size_constrained() -> int:
    """Subsets of at most N partial products for N in {2, 3, 4}."""
    return sum(comb(n * n, L) for n in CONSTRAINED_N for L in range(1, n + 1))


def size_pruned_subsets() -> int:
    """Weight/activation block-subset choices with ``n_tilde_a >= n_tilde_w``.

    Counts arbitrary (possibly non-contiguous) block subsets and does not apply
    ``L <= N``; the final enumerated table is much smaller.
    """
    return sum(
        comb(n, na) * comb(n, nw)
        for n in CONSTRAINED_N
        for na in range(1, n + 1)
        for nw in range(1, na + 1)
    )


def canonical_key(c: AxBxPConfig) -> tuple[int, int, int]:
    """Cheapest first: ascending L, then n_tilde_a, then n_tilde_w."""
    return (c.L, c.n_tilde_a, c.n_tilde_w)


def enumerate_pruned(K: int | None = None, mode: Mode = Mode.DYNAMIC) -> DesignSpace:
    """Pruned configurations for one block width, or all of them, in search order."""
    ks = VALID_K if K is None else (K,)
    if K is not None:
        check_k(K)
    out = []
    for k in ks:
        N = num_blocks(k)
        cands = [
            AxBxPConfig(k, nw, na, mode)
            for na in range(1, N + 1)
            for nw in range(1, na + 1)
            if nw * na <= N
        ]
        out.extend(sorted(cands, key=canonical_key))
    return DesignSpace(tuple(out), ConstraintLevel.PRUNED)


def table_rows() -> dict[int, list[tuple[int, int, int]]]:
    """Per-K configuration lists in publication order (widest activation first)."""
    rows = {}
    for k in sorted(VALID_K):
        cfgs = sorted(enumerate_pruned(k), key=lambda c: (c.n_tilde_a, c.n_tilde_w), reverse=True)
        rows[k] = [c.tuple for c in cfgs]
    return rows


def format_row(configs: list[tuple[int, int, int]]) -> str:
    return "{" + ", ".join("(" + ",".join(map(str, t)) + ")" for t in configs) + "}"
