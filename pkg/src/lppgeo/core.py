"""Last-passage times and the geodesic parent map.

``compute_field`` runs the recursion ``G(z) = w(z) + max(G(z-(1,0)), G(z-(0,1)))``
over a box, either the triangle ``x + y <= N`` or the square ``[0, N]^2``.
The box is cut into square tiles that are swept one tile anti-diagonal at a
time; tiles on the same tile anti-diagonal touch disjoint state and can run on
separate threads (the kernels release the GIL).  Only O(N) passage values are
alive at once; the geodesic tree is kept as one parent bit per site.

Parent bit convention: 1 means the parent is ``z - (0, 1)`` (below), 0 means
``z - (1, 0)`` (left).  Ties go left.  x-axis sites carry 0, y-axis sites 1,
the origin 0.
"""

from __future__ import annotations

import itertools
import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Union

import numba as nb
import numpy as np

from .env import EnvSpec, hashed_time, sample_time

TimeSource = Union[EnvSpec, np.ndarray]

# refuse parent maps above this many bytes before allocating anything
MAX_PARENT_BYTES = 1 << 32
DEFAULT_TILE = 256
DUMP_MAGIC = b"LPPT"
DUMP_VERSION = 1
BRUTE_FORCE_CAP = 8


class SizeOverflowError(ValueError):
    """The requested box does not fit in an addressable parent map."""


class DiagonalNotKept(LookupError):
    pass


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1


def row_bytes(N: int) -> int:
    return (N + 1 + 7) // 8


def tri_index(x: int, y: int) -> int:
    s = x + y
    return s * (s + 1) // 2 + x


# --------------------------------------------------------------------------
# kernels


@nb.njit(nogil=True, cache=True)
def _sweep_tile(key, scale, times, x0, x1, y0, y1, limit, N, keep_m,
                H, V, parents, diag, kept):
    use_times = times.shape[0] > 0
    for y in range(y0, y1):
        xe = min(x1, limit - y + 1)
        if xe <= x0:
            break
        left = V[y]
        byte = np.uint8(0)
        for x in range(x0, xe):
            if use_times:
                w = times[x, y]
            else:
                w = scale * hashed_time(key, x, y)
            below = H[x]
            if below > left:
                g = w + below
                byte |= np.uint8(1) << np.uint8(x & 7)
            else:
                g = w + left
            H[x] = g
            left = g
            if x & 7 == 7:
                parents[y, x >> 3] = byte
                byte = np.uint8(0)
            s = x + y
            if s == N:
                diag[x] = g
            if s <= keep_m:
                kept[s * (s + 1) // 2 + x] = g
        if (xe - 1) & 7 != 7:
            parents[y, (xe - 1) >> 3] = byte
        V[y] = left


def _tile_jobs(N: int, limit: int, tile: int):
    nt = (N + tile) // tile
    for s in range(2 * nt - 1):
        jobs = []
        for i in range(max(0, s - nt + 1), min(s, nt - 1) + 1):
            j = s - i
            x0, y0 = i * tile, j * tile
            if x0 + y0 > limit:
                continue
            jobs.append((x0, min(x0 + tile, N + 1), y0, min(y0 + tile, N + 1)))
        if jobs:
            yield jobs


# --------------------------------------------------------------------------
# data types


@dataclass
class PassageField:
    """Passage times and parent bits over a box of size ``N``.

    ``diag_G[x]`` holds ``G(x, N - x)``; ``top_G``/``right_G`` hold the top row
    and right column in square mode.  ``kept`` stores diagonals ``0..keep_m``
    in triangular order (see :func:`tri_index`).
    """

    N: int
    square: bool
    source: TimeSource
    parents: np.ndarray
    diag_G: np.ndarray
    keep_m: int
    kept: np.ndarray
    top_G: np.ndarray | None = None
    right_G: np.ndarray | None = None
    meta: dict = dc_field(default_factory=dict)

    def contains(self, x: int, y: int) -> bool:
        if x < 0 or y < 0:
            return False
        if self.square:
            return x <= self.N and y <= self.N
        return x + y <= self.N

    def parent_bit(self, x: int, y: int) -> int:
        return int(self.parents[y, x >> 3] >> (x & 7)) & 1

    def parent(self, x: int, y: int) -> tuple[int, int]:
        if x == 0 and y == 0:
            raise ValueError("the origin has no parent")
        return (x, y - 1) if self.parent_bit(x, y) else (x - 1, y)

    def time(self, x: int, y: int) -> float:
        return site_time(self.source, x, y)

    def G(self, x: int, y: int) -> float:
        """Passage time at a retained site (kept diagonal or diagonal N)."""
        s = x + y
        if s <= self.keep_m:
            return float(self.kept[tri_index(x, y)])
        if s == self.N:
            return float(self.diag_G[x])
        if self.square and y == self.N and self.top_G is not None:
            return float(self.top_G[x])
        if self.square and x == self.N and self.right_G is not None:
            return float(self.right_G[y])
        raise DiagonalNotKept(f"G({x}, {y}) is not retained (keep_m={self.keep_m}, N={self.N})")

    def diagonal(self, k: int) -> np.ndarray:
        """G on diagonal ``k`` indexed by x."""
        if k <= self.keep_m:
            start = k * (k + 1) // 2
            return self.kept[start:start + k + 1].copy()
        if k == self.N:
            return self.diag_G.copy()
        raise DiagonalNotKept(f"diagonal {k} not kept (keep_m={self.keep_m})")

    def parent_bits(self) -> np.ndarray:
        """Parent bits unpacked to a ``(N+1, N+1)`` array indexed ``[x, y]``."""
        bits = np.unpackbits(self.parents, axis=1, bitorder="little")[:, : self.N + 1]
        return bits.T.copy()


@dataclass(frozen=True)
class DiagonalVectors:
    """Diagonal ``m`` vectors ordered from ``(m, 0)`` to ``(0, m)``."""

    m: int
    G: np.ndarray
    X: np.ndarray
    Y: np.ndarray


def site_time(source: TimeSource, x: int, y: int) -> float:
    if isinstance(source, EnvSpec):
        return sample_time(source, (x, y))
    return float(source[x, y])


def _check_times(times: np.ndarray, N: int, square: bool) -> np.ndarray:
    times = np.ascontiguousarray(times, dtype=np.float64)
    if times.ndim != 2 or times.shape[0] < N + 1 or times.shape[1] < N + 1:
        raise ValueError(f"explicit times must cover [0, {N}]^2, got shape {times.shape}")
    return times


def compute_field(source: TimeSource, N: int, keep_m: int = 0, *, square: bool = False,
                  workers: int | None = 1, tile: int = DEFAULT_TILE) -> PassageField:
    """Last-passage times and parent map on the box of size ``N``.

    ``source`` is an :class:`EnvSpec` or an explicit array of times indexed
    ``[x, y]``.  Diagonal mode covers ``x + y <= N``; ``square=True`` covers
    ``[0, N]^2``.  Output is bit-identical for every ``workers`` value.
    """
    if N < 0:
        raise ValueError("N must be nonnegative")
    if not 0 <= keep_m <= N:
        raise ValueError(f"keep_m must lie in [0, N], got {keep_m}")
    if tile <= 0 or tile % 8:
        raise ValueError("tile must be a positive multiple of 8")
    nbytes = (N + 1) * row_bytes(N)
    if nbytes > MAX_PARENT_BYTES:
        raise SizeOverflowError(f"parent map for N={N} needs {nbytes} bytes (cap {MAX_PARENT_BYTES})")

    if isinstance(source, EnvSpec):
        key, scale, times = np.uint64(source.key), float(source.scale), np.empty((0, 0))
    else:
        key, scale, times = np.uint64(0), 1.0, _check_times(source, N, square)

    limit = 2 * N if square else N
    H = np.full(N + 1, -np.inf)
    H[0] = 0.0
    V = np.full(N + 1, -np.inf)
    parents = np.zeros((N + 1, row_bytes(N)), dtype=np.uint8)
    diag = np.empty(N + 1)
    kept = np.empty((keep_m + 1) * (keep_m + 2) // 2)

    def run(job):
        x0, x1, y0, y1 = job
        _sweep_tile(key, scale, times, x0, x1, y0, y1, limit, N, keep_m, H, V, parents, diag, kept)

    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1:
        for jobs in _tile_jobs(N, limit, tile):
            for job in jobs:
                run(job)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for jobs in _tile_jobs(N, limit, tile):
                list(pool.map(run, jobs))
    parents[0, 0] &= np.uint8(0xFE)

    top = right = None
    if square:
        top, right = H.copy(), V.copy()
    return PassageField(N=N, square=square, source=source, parents=parents, diag_G=diag,
                        keep_m=keep_m, kept=kept, top_G=top, right_G=right)


def diagonal_vectors(field: PassageField, m: int) -> DiagonalVectors:
    """``G_m``, ``X_m`` (site times) and ``Y_m`` (best predecessor on diagonal
    ``m - 1``); ``G_m == X_m + Y_m`` holds exactly as computed in the sweep."""
    if m < 1:
        raise ValueError("m must be positive")
    if (m > field.keep_m and m != field.N) or m - 1 > field.keep_m:
        raise DiagonalNotKept(f"diagonal {m} not kept (keep_m={field.keep_m})")
    G = field.diagonal(m)[::-1].copy()
    X = np.array([field.time(x, m - x) for x in range(m, -1, -1)])
    prev = field.diagonal(m - 1)
    Y = np.empty(m + 1)
    for i, x in enumerate(range(m, -1, -1)):
        left = prev[x - 1] if x > 0 else -np.inf
        below = prev[x] if x < m else -np.inf
        Y[i] = max(left, below)
    return DiagonalVectors(m=m, G=G, X=X, Y=Y)


# --------------------------------------------------------------------------
# exhaustive oracle


@dataclass(frozen=True)
class BruteForceResult:
    G: np.ndarray
    count: np.ndarray
    paths: np.ndarray


def monotone_paths(x: int, y: int):
    """All directed paths from the origin to ``(x, y)`` as site lists."""
    n = x + y
    for ups in itertools.combinations(range(n), y):
        ups = set(ups)
        cx = cy = 0
        path = [(0, 0)]
        for i in range(n):
            if i in ups:
                cy += 1
            else:
                cx += 1
            path.append((cx, cy))
        yield path


def brute_force_G(times, rtol: float = 1e-12) -> BruteForceResult:
    """Maximise the path sum over every directed path, site by site.

    ``count`` is the number of paths whose sum is within ``rtol`` of the max.
    """
    times = np.asarray(times, dtype=np.float64)
    w, h = times.shape
    if w > BRUTE_FORCE_CAP or h > BRUTE_FORCE_CAP:
        raise ValueError(f"brute force is capped at {BRUTE_FORCE_CAP}x{BRUTE_FORCE_CAP}, got {w}x{h}")
    G = np.empty((w, h))
    count = np.zeros((w, h), dtype=np.int64)
    paths = np.zeros((w, h), dtype=np.int64)
    for x in range(w):
        for y in range(h):
            sums = []
            for path in monotone_paths(x, y):
                total = 0.0
                for px, py in path:
                    total += times[px, py]
                sums.append(total)
            best = max(sums)
            G[x, y] = best
            count[x, y] = sum(1 for s in sums if s >= best - rtol * abs(best))
            paths[x, y] = len(sums)
    return BruteForceResult(G=G, count=count, paths=paths)


def dense_G(field: PassageField) -> np.ndarray:
    """Full G grid recovered by replaying the DP with the parent bits.

    Meant for small boxes (tests, CSV dumps); sites outside the box are NaN.
    """
    N = field.N
    G = np.full((N + 1, N + 1), np.nan)
    for s in range(0, 2 * N + 1 if field.square else N + 1):
        for x in range(max(0, s - N), min(s, N) + 1):
            y = s - x
            if not field.contains(x, y):
                continue
            w = field.time(x, y)
            if x == 0 and y == 0:
                G[x, y] = w
            else:
                px, py = field.parent(x, y)
                G[x, y] = w + G[px, py]
    return G


# --------------------------------------------------------------------------
# LPPT dump


def dump_parents(field: PassageField, fh) -> None:
    """Write the parent map: magic, version, N (u64 LE), padded LSB-first rows."""
    fh.write(DUMP_MAGIC)
    fh.write(bytes([DUMP_VERSION]))
    fh.write(struct.pack("<Q", field.N))
    fh.write(np.ascontiguousarray(field.parents).tobytes())


def load_parents(fh) -> tuple[int, np.ndarray]:
    """Read an LPPT dump; returns ``(N, rows)`` with rows shaped ``(N+1, row_bytes)``."""
    head = fh.read(13)
    if len(head) != 13 or head[:4] != DUMP_MAGIC:
        raise ValueError("not an LPPT parent-map dump")
    if head[4] != DUMP_VERSION:
        raise ValueError(f"unsupported LPPT version {head[4]}")
    (N,) = struct.unpack("<Q", head[5:])
    rb = row_bytes(N)
    body = fh.read((N + 1) * rb)
    if len(body) != (N + 1) * rb:
        raise ValueError("truncated LPPT dump")
    return N, np.frombuffer(body, dtype=np.uint8).reshape(N + 1, rb).copy()

