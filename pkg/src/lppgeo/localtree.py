"""Directed trees on ``{|z| <= m}`` and the interval witness that forces one.

A tree is stored as one bit per interior site ``(x, y)``, ``x, y >= 1``,
``x + y <= m``, sites ordered by ``(x + y, x)``; bit 1 means the parent is
``(x, y - 1)``.  Axis edges are implicit.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator

import numpy as np

from .core import PassageField, compute_field, DiagonalNotKept
from .env import EnvSpec

# iteration over T_m is refused from this many trees on (m = 8)
ENUMERATION_GUARD = 1 << 28


@lru_cache(maxsize=None)
def interior_sites(m: int) -> tuple[tuple[int, int], ...]:
    return tuple((x, s - x) for s in range(2, m + 1) for x in range(1, s))


def n_bits(m: int) -> int:
    return m * (m - 1) // 2


@dataclass(frozen=True)
class TmTree:
    m: int
    mask: int

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be positive")
        if not 0 <= self.mask < (1 << n_bits(self.m)):
            raise ValueError(f"mask {self.mask:#x} does not fit {n_bits(self.m)} bits")

    @property
    def nbits(self) -> int:
        return n_bits(self.m)

    def bit(self, x: int, y: int) -> int:
        return (self.mask >> interior_sites(self.m).index((x, y))) & 1

    def parent(self, x: int, y: int) -> tuple[int, int]:
        if x == 0:
            return (0, y - 1)
        if y == 0:
            return (x - 1, 0)
        return (x, y - 1) if self.bit(x, y) else (x - 1, y)

    def restrict(self, k: int) -> "TmTree":
        """The tree restricted to ``{|z| <= k}``."""
        if not 1 <= k <= self.m:
            raise ValueError("k out of range")
        return TmTree(k, self.mask & ((1 << n_bits(k)) - 1))

    def to_str(self) -> str:
        return f"{self.m}:{self.mask:x}"

    @classmethod
    def parse(cls, text: str) -> "TmTree":
        try:
            m, mask = text.strip().split(":")
            return cls(int(m), int(mask, 16))
        except ValueError as exc:
            raise ValueError(f"bad tree {text!r}, expected 'm:hexmask'") from exc

    def __str__(self):
        return self.to_str()


def count_Tm(m: int) -> int:
    return 1 << n_bits(m)


def enumerate_Tm(m: int) -> Iterator[TmTree]:
    """Every tree of T_m, masks in increasing order."""
    total = count_Tm(m)
    if total >= ENUMERATION_GUARD:
        raise ValueError(f"refusing to iterate {total} trees (m={m})")
    return (TmTree(m, mask) for mask in range(total))


def tree_from_bits(field_bits, m: int) -> TmTree:
    mask = 0
    for i, (x, y) in enumerate(interior_sites(m)):
        if field_bits(x, y):
            mask |= 1 << i
    return TmTree(m, mask)


def extract_Tm(field: PassageField, m: int) -> TmTree:
    """Restriction of the geodesic tree to ``{|z| <= m}``.

    Read twice: from the parent bits, and from the sign of
    ``G(z) - G(z + (1, -1))`` on the kept diagonals (ties count as positive,
    matching the left-parent tie rule).  The two readings must agree.
    """
    if m < 1 or m > field.N:
        raise ValueError(f"m must lie in [1, {field.N}]")
    by_parent = tree_from_bits(field.parent_bit, m)
    if m - 1 > field.keep_m:
        raise DiagonalNotKept(f"sign reading needs diagonals up to {m - 1}, kept {field.keep_m}")
    by_sign = tree_from_bits(lambda x, y: int(field.G(x - 1, y) - field.G(x, y - 1) < 0), m)
    if by_sign != by_parent:
        raise AssertionError(f"parent bits {by_parent} disagree with sign conditions {by_sign}")
    return by_parent


def sample_Tm(spec: EnvSpec, m: int) -> TmTree:
    return extract_Tm(compute_field(spec, m, keep_m=m), m)


# --------------------------------------------------------------------------
# witness


@dataclass(frozen=True)
class WitnessAssignment:
    tree: TmTree
    times: dict  # (x, y) -> time for |z| <= m - 1
    eps: tuple  # eps[k - 1] = eps_k, k = 1..m
    indices: dict  # (x, y) -> interval index j, time in ]j eps_k, (j + 1) eps_k[

    def grid(self, fill: float = 1.0, size: int | None = None) -> np.ndarray:
        """Explicit time grid indexed ``[x, y]``; sites off the assignment get ``fill``."""
        size = self.tree.m + 1 if size is None else size
        out = np.full((size, size), float(fill))
        for (x, y), t in self.times.items():
            out[x, y] = t
        return out


def eps_schedule(m: int, eps1: float) -> tuple:
    eps = [float(eps1)]
    for k in range(1, m):
        eps.append((4 * k + 2) * eps[-1])
    return tuple(eps)


def witness_times(T: TmTree, eps1: float = 1.0) -> WitnessAssignment:
    """Times on ``{|z| <= m - 1}`` under which the geodesic tree restricts to ``T``.

    The origin gets ``eps_1 / 2``.  On diagonal ``k`` the walk starts at
    interval ``2k`` for ``(0, k)`` and moves two intervals down (left parent
    of the site above-right) or up (bottom parent) per site, placing each
    time at its interval midpoint scaled by ``eps_k``.
    """
    if not eps1 > 0:
        raise ValueError("eps1 must be positive")
    m = T.m
    eps = eps_schedule(m, eps1)
    times = {(0, 0): eps[0] / 2}
    indices = {}
    for k in range(1, m):
        e = eps[k - 1]
        j = 2 * k
        indices[(0, k)] = j
        times[(0, k)] = (j + 0.5) * e
        for x in range(1, k + 1):
            # the child (x, k + 1 - x) chooses between (x - 1, k + 1 - x) and (x, k - x)
            j = j + 2 if T.bit(x, k + 1 - x) else j - 2
            indices[(x, k - x)] = j
            times[(x, k - x)] = (j + 0.5) * e
    return WitnessAssignment(tree=T, times=times, eps=eps, indices=indices)


def witness_field(w: WitnessAssignment, fill: float = 1.0) -> PassageField:
    m = w.tree.m
    return compute_field(w.grid(fill), m, keep_m=m)


def witness_bounds_ok(w: WitnessAssignment) -> bool:
    """Check ``max G`` on diagonal ``k - 1`` is at most ``eps_k`` for every ``k <= m``
    and consecutive-site gaps on each diagonal lie in ``(eps_k, 3 eps_k)``."""
    m = w.tree.m
    f = witness_field(w)
    for k in range(1, m + 1):
        if f.diagonal(k - 1).max() > w.eps[k - 1]:
            return False
    for k in range(1, m):
        e = w.eps[k - 1]
        for x in range(1, k + 1):
            gap = abs(w.times[(x, k - x)] - w.times[(x - 1, k - x + 1)])
            if not e < gap < 3 * e:
                return False
    return True
