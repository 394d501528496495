"""Ax-BxP configuration tuples ``(K, n_tilde_w, n_tilde_a)`` and selection modes."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .blocked import check_k, num_blocks
from .errors import ConfigurationError


class Mode(str, Enum):
    STATIC = "static"
    DYNAMIC = "dynamic"

    @property
    def code(self) -> int:
        return 0 if self is Mode.STATIC else 1

    @classmethod
    def from_code(cls, code: int) -> "Mode":
        if code == 0:
            return cls.STATIC
        if code == 1:
            return cls.DYNAMIC
        raise ConfigurationError(f"unknown mode code {code}")


def _pruned_ok(K: int, n_tilde_w: int, n_tilde_a: int) -> bool:
    N = num_blocks(K)
    return 1 <= n_tilde_w <= n_tilde_a <= N and n_tilde_w * n_tilde_a <= N


@dataclass(frozen=True, order=False)
class AxBxPConfig:
    """Block width plus the number of blocks kept for weights and activations.

    ``L = n_tilde_w * n_tilde_a`` block products are evaluated per MAC. The
    constructor checks only structural validity (``1 <= n_tilde <= N``); use
    :attr:`in_pruned_space` / :meth:`require_pruned` for the search-space
    constraints. :meth:`lossless` builds the ``n_tilde = N`` reference config.
    """

    K: int
    n_tilde_w: int
    n_tilde_a: int
    mode: Mode = Mode.DYNAMIC

    def __post_init__(self) -> None:
        check_k(self.K)
        object.__setattr__(self, "mode", Mode(self.mode))
        N = self.N
        for name, v in (("n_tilde_w", self.n_tilde_w), ("n_tilde_a", self.n_tilde_a)):
            if not isinstance(v, int) or not 1 <= v <= N:
                raise ConfigurationError(f"{name}={v!r} outside [1, {N}] for K={self.K}")

    @classmethod
    def lossless(cls, K: int, mode: Mode = Mode.DYNAMIC) -> "AxBxPConfig":
        N = num_blocks(K)
        return cls(K, N, N, mode)

    @property
    def N(self) -> int:
        return num_blocks(self.K)

    @property
    def L(self) -> int:
        return self.n_tilde_w * self.n_tilde_a

    @property
    def tuple(self) -> tuple[int, int, int]:
        return (self.K, self.n_tilde_w, self.n_tilde_a)

    @property
    def is_lossless(self) -> bool:
        return self.n_tilde_w == self.N and self.n_tilde_a == self.N

    @property
    def in_pruned_space(self) -> bool:
        return _pruned_ok(self.K, self.n_tilde_w, self.n_tilde_a)

    def require_pruned(self, allow_lossless: bool = False) -> None:
        if self.in_pruned_space or (allow_lossless and self.is_lossless):
            return
        raise ConfigurationError(
            f"config {self.tuple} violates n_tilde_a >= n_tilde_w / L <= N"
        )

    def with_mode(self, mode: Mode) -> "AxBxPConfig":
        return AxBxPConfig(self.K, self.n_tilde_w, self.n_tilde_a, Mode(mode))

    def to_dict(self) -> dict:
        return {"K": self.K, "n_tilde_w": self.n_tilde_w, "n_tilde_a": self.n_tilde_a,
                "mode": self.mode.value}

    @classmethod
    def from_dict(cls, d: dict) -> "AxBxPConfig":
        return cls(int(d["K"]), int(d["n_tilde_w"]), int(d["n_tilde_a"]), Mode(d.get("mode", "dynamic")))

    def __str__(self) -> str:
        return f"({self.K},{self.n_tilde_w},{self.n_tilde_a})/{self.mode.value}"
