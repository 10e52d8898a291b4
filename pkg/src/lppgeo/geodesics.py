"""Geodesics, competing subtrees and the competition interface.

"Infinite" is always proxied by "reaches the anti-diagonal ``x + y = N``".
Because the environment is counter based, every event below is exactly
nested in ``N`` for a fixed seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numba as nb
import numpy as np

from .core import PassageField, TimeSource
from .env import EnvSpec, Site, hashed_time

RIGHT, UP = "R", "U"


class Side(str, Enum):
    HIGH = "high"
    LOW = "low"


class NotSurviving(ValueError):
    """The start site's subtree never reaches the far diagonal."""


@dataclass(frozen=True)
class GeodesicPath:
    sites: np.ndarray  # (n, 2) int64, origin first

    @property
    def steps(self) -> str:
        d = np.diff(self.sites[:, 0])
        return "".join(RIGHT if s else UP for s in d)

    @property
    def end(self) -> tuple[int, int]:
        return int(self.sites[-1, 0]), int(self.sites[-1, 1])

    def __len__(self):
        return self.sites.shape[0]


@dataclass(frozen=True)
class InterfacePath:
    sites: np.ndarray  # (N+1, 2), sites[k] on diagonal k

    @property
    def angle(self) -> float:
        x, y = self.sites[-1]
        return math.atan2(float(y), float(x))


@dataclass
class ClusterLabeling:
    """Root labels for subtrees rooted on diagonal ``d``.

    Root ``i`` is the site ``(i, d - i)``.  ``labels[x, y]`` holds the root
    index for ``d <= x + y <= N`` and ``sentinel`` elsewhere.
    ``boundary[x]`` is the label of ``(x, N - x)``.
    """

    d: int
    N: int
    labels: np.ndarray
    boundary: np.ndarray
    boundary_hits: np.ndarray

    @property
    def sentinel(self) -> int:
        return int(np.iinfo(self.labels.dtype).max)

    def root_index(self, root) -> int:
        x, y = root
        if x + y != self.d:
            raise ValueError(f"root {tuple(root)} is not on diagonal {self.d}")
        return x

    def label(self, x: int, y: int) -> int:
        return int(self.labels[x, y])

    def diagonal_labels(self, k: int) -> np.ndarray:
        if not self.d <= k <= self.N:
            raise ValueError(f"diagonal {k} outside labeled range [{self.d}, {self.N}]")
        xs = np.arange(k + 1)
        return self.labels[xs, k - xs]


# --------------------------------------------------------------------------
# kernels


@nb.njit(inline="always", cache=True)
def _time(key, scale, times, use_times, x, y):
    if use_times:
        return times[x, y]
    return scale * hashed_time(key, x, y)


@nb.njit(nogil=True, cache=True)
def _label_sweep(key, scale, times, N, d, labels, store, checkpoints, counts, early_stop):
    """Forward sweep propagating root labels from diagonal ``d`` to ``N``.

    Returns the last diagonal processed (``N`` unless ``early_stop`` fired
    because some root lost every descendant).
    """
    use_times = times.shape[0] > 0
    G = np.empty(N + 1)
    lab = np.zeros(N + 1, dtype=np.int64)
    G[0] = _time(key, scale, times, use_times, 0, 0)
    nroots = d + 1
    ci = 0
    if d == 0:
        if store:
            labels[0, 0] = 0
        while ci < checkpoints.shape[0] and checkpoints[ci] == 0:
            counts[ci, 0] += 1
            ci += 1
    for k in range(1, N + 1):
        changes = 0
        for x in range(k, -1, -1):
            y = k - x
            w = _time(key, scale, times, use_times, x, y)
            if x == k:
                g = w + G[x - 1]
                below = False
            elif x == 0:
                g = w + G[0]
                below = True
            else:
                below = G[x] > G[x - 1]
                g = w + (G[x] if below else G[x - 1])
            G[x] = g
            if k > d:
                if not below:
                    lab[x] = lab[x - 1]
            elif k == d:
                lab[x] = x
            if k >= d:
                if store:
                    labels[x, y] = lab[x]
                if x < k and lab[x] != lab[x + 1]:
                    changes += 1
        if k >= d:
            while ci < checkpoints.shape[0] and checkpoints[ci] == k:
                for x in range(k + 1):
                    counts[ci, lab[x]] += 1
                ci += 1
            if early_stop and changes + 1 < nroots:
                return k
    return N


@nb.njit(nogil=True, cache=True)
def _interface_sweep(key, scale, times, N, px):
    use_times = times.shape[0] > 0
    G = np.empty(N + 1)
    G[0] = _time(key, scale, times, use_times, 0, 0)
    px[0] = 0
    for k in range(1, N + 1):
        for x in range(k, -1, -1):
            w = _time(key, scale, times, use_times, x, k - x)
            if x == k:
                G[x] = w + G[x - 1]
            elif x == 0:
                G[x] = w + G[0]
            else:
                G[x] = w + max(G[x], G[x - 1])
        a = px[k - 1]
        # candidate (a+1, .) versus (a, .) on diagonal k; ties step up
        px[k] = a + 1 if G[a + 1] < G[a] else a


@nb.njit(inline="always", cache=True)
def _bit(parents, x, y):
    return (parents[y, x >> 3] >> (x & 7)) & 1


@nb.njit(nogil=True, cache=True)
def _survival(parents, N, surv):
    for x in range(N + 1):
        surv[x, N - x] = 1
    for k in range(N - 1, -1, -1):
        for x in range(k + 1):
            y = k - x
            alive = 0
            if _bit(parents, x + 1, y) == 0 and surv[x + 1, y]:
                alive = 1
            elif _bit(parents, x, y + 1) == 1 and surv[x, y + 1]:
                alive = 1
            surv[x, y] = alive


@nb.njit(nogil=True, cache=True)
def _backtrack(parents, x, y, out):
    n = x + y
    for i in range(n, -1, -1):
        out[i, 0] = x
        out[i, 1] = y
        if i == 0:
            break
        if _bit(parents, x, y):
            y -= 1
        else:
            x -= 1


def _source_args(source: TimeSource):
    if isinstance(source, EnvSpec):
        return np.uint64(source.key), float(source.scale), np.empty((0, 0))
    return np.uint64(0), 1.0, np.ascontiguousarray(source, dtype=np.float64)


def label_dtype(d: int):
    return np.uint8 if d + 1 <= 255 else np.uint16


# --------------------------------------------------------------------------
# operations


def geodesic_to(field: PassageField, z) -> GeodesicPath:
    """Backtrack the parent bits from ``z`` to the origin."""
    x, y = z
    if not field.contains(x, y):
        raise ValueError(f"site {(x, y)} lies outside the field (N={field.N})")
    out = np.empty((x + y + 1, 2), dtype=np.int64)
    _backtrack(field.parents, x, y, out)
    return GeodesicPath(out)


def path_weight(field: PassageField, path: GeodesicPath) -> float:
    return float(sum(field.time(int(x), int(y)) for x, y in path.sites))


def label_clusters(source: TimeSource, N: int, d: int) -> ClusterLabeling:
    """Label every site with ``d <= |z| <= N`` by its ancestor on diagonal ``d``.

    One forward sweep; no parent map is built.
    """
    if not 0 <= d < N:
        raise ValueError(f"need 0 <= d < N, got d={d}, N={N}")
    if not isinstance(source, EnvSpec):
        source = np.ascontiguousarray(source, dtype=np.float64)
        if source.shape[0] < N + 1 or source.shape[1] < N + 1:
            raise ValueError(f"explicit times must cover [0, {N}]^2")
    key, scale, times = _source_args(source)
    dtype = label_dtype(d)
    labels = np.full((N + 1, N + 1), np.iinfo(dtype).max, dtype=dtype)
    counts = np.zeros((1, d + 1), dtype=np.int64)
    _label_sweep(key, scale, times, N, d, labels, True, np.array([N], dtype=np.int64), counts, False)
    xs = np.arange(N + 1)
    boundary = labels[xs, N - xs].astype(np.int64)
    return ClusterLabeling(d=d, N=N, labels=labels, boundary=boundary, boundary_hits=counts[0].copy())


def competition_interface(field: PassageField, N: int | None = None) -> InterfacePath:
    """Interface between the subtrees of ``(1, 0)`` and ``(0, 1)``.

    Replays the passage-time wavefront from the field's environment and at
    each diagonal steps toward the smaller of ``G(phi + (1, 0))`` and
    ``G(phi + (0, 1))``.
    """
    N = field.N if N is None else N
    if not 1 <= N <= field.N:
        raise ValueError(f"N must lie in [1, {field.N}]")
    return interface_path(field.source, N)


def interface_path(source: TimeSource, N: int) -> InterfacePath:
    key, scale, times = _source_args(source)
    px = np.empty(N + 1, dtype=np.int64)
    _interface_sweep(key, scale, times, N, px)
    ks = np.arange(N + 1)
    return InterfacePath(np.column_stack([px, ks - px]))


def survival_map(field: PassageField, N: int | None = None) -> np.ndarray:
    """``surv[x, y] = 1`` iff the subtree of ``(x, y)`` reaches diagonal ``N``."""
    N = field.N if N is None else N
    if N > field.N:
        raise ValueError("N exceeds the field")
    cache = field.meta.setdefault("survival", {})
    if N not in cache:
        surv = np.zeros((N + 1, N + 1), dtype=np.uint8)
        _survival(field.parents, N, surv)
        cache[N] = surv
    return cache[N]


def extreme_survivor_path(field: PassageField, start, side: Side | str, N: int | None = None) -> GeodesicPath:
    """Highest (``side='high'``) or lowest surviving path through ``start``.

    At each site the walk takes the only surviving child, or, when both
    children survive, goes up for ``high`` and right for ``low``.  The result
    is the full path from the origin.
    """
    side = Side(side)
    N = field.N if N is None else N
    sx, sy = start
    if sx + sy > N:
        raise ValueError(f"start {tuple(start)} lies beyond diagonal {N}")
    surv = survival_map(field, N)
    if not surv[sx, sy]:
        raise NotSurviving(f"subtree of {tuple(start)} does not reach diagonal {N}")
    prefix = geodesic_to(field, (sx, sy)).sites
    tail = []
    x, y = sx, sy
    while x + y < N:
        right = field.parent_bit(x + 1, y) == 0 and surv[x + 1, y]
        up = field.parent_bit(x, y + 1) == 1 and surv[x, y + 1]
        if right and up:
            right = side is Side.LOW
        if right:
            x += 1
        else:
            y += 1
        tail.append((x, y))
    tail = np.array(tail, dtype=np.int64).reshape(-1, 2)
    return GeodesicPath(np.vstack([prefix, tail]))


def split_points(labeling: ClusterLabeling, N: int | None = None) -> list[tuple[float, int, int]]:
    """Label changes along diagonal ``N`` scanned from ``(N, 0)`` to ``(0, N)``.

    Each entry is ``(angle, root, next_root)``: the angle of the last site
    owned by ``root`` before ``next_root`` takes over.
    """
    N = labeling.N if N is None else N
    labs = labeling.boundary if N == labeling.N else labeling.diagonal_labels(N)
    out = []
    for x in range(N, 0, -1):
        a, b = int(labs[x]), int(labs[x - 1])
        if a != b:
            out.append((math.atan2(N - x, x), a, b))
    return out


def split_directions(labeling: ClusterLabeling, N: int | None = None) -> list[float]:
    return [a for a, _, _ in split_points(labeling, N)]


def transversal_fluctuation(path: GeodesicPath) -> float:
    """Largest Euclidean distance from a path site to the chord origin-endpoint."""
    pts = path.sites.astype(np.float64)
    e = pts[-1]
    ee = float(e @ e)
    if ee == 0.0:
        raise ValueError("path must end away from the origin")
    t = np.clip(pts @ e / ee, 0.0, 1.0)
    d = pts - t[:, None] * e
    return float(np.sqrt((d * d).sum(axis=1)).max())


def subtree_density(labeling: ClusterLabeling, root, n: int) -> float:
    """Share of labeled sites in ``[0, n]^2`` that descend from ``root``."""
    if not 1 <= n or 2 * n > labeling.N:
        raise ValueError(f"need 1 <= n <= N/2, got n={n}, N={labeling.N}")
    idx = labeling.root_index(root)
    box = labeling.labels[: n + 1, : n + 1]
    xs, ys = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    counted = (xs + ys) >= labeling.d
    total = int(counted.sum())
    return float(((box == idx) & counted).sum()) / total if total else 0.0


def nearest_diagonal_site(N: int, alpha: float) -> tuple[int, int]:
    """Site of diagonal ``N`` whose direction is closest to ``alpha``."""
    if not 0.0 <= alpha <= math.pi / 2 + 1e-15:
        raise ValueError("alpha must lie in [0, pi/2]")
    xs = np.arange(N + 1)
    ang = np.arctan2(N - xs, xs)
    x = int(np.argmin(np.abs(ang - alpha)))
    return x, N - x
