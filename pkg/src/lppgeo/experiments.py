"""Monte Carlo harness: coexistence, tree frequencies, coalescence, fluctuations.

Replicate ``r`` always runs on the environment seeded by
``replicate_seed(seed_base, r)``, and all sizes of one replicate share that
environment, so per-replicate indicators are exactly nested in ``N``.
Replicates are independent and may run on a thread pool; results are
assembled in replicate order, so the worker count never changes the output.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from statistics import NormalDist

import numba as nb
import numpy as np

from .core import compute_field, default_workers
from .env import EnvSpec, hashed_time, replicate_seed
from .geodesics import (
    _interface_sweep,
    _label_sweep,
    geodesic_to,
    label_clusters,
    nearest_diagonal_site,
    subtree_density,
    transversal_fluctuation,
)
from .localtree import count_Tm, interior_sites, TmTree

SIX_MINUS_8LOG2 = 6.0 - 8.0 * math.log(2.0)
Z95 = NormalDist().inv_cdf(0.975)


def wilson_interval(hits: int, reps: int, z: float = Z95) -> tuple[float, float]:
    if reps <= 0:
        raise ValueError("reps must be positive")
    p = hits / reps
    denom = 1.0 + z * z / reps
    centre = (p + z * z / (2 * reps)) / denom
    half = z / denom * math.sqrt(p * (1 - p) / reps + z * z / (4 * reps * reps))
    # the exact bounds at the extremes are 0 and 1; avoid rounding residue
    lo = 0.0 if hits == 0 else max(0.0, centre - half)
    hi = 1.0 if hits == reps else min(1.0, centre + half)
    return lo, hi


@dataclass
class McSummary:
    reps: int
    hits: int
    estimate: float
    ci_low: float
    ci_high: float
    N: int | None = None

    @classmethod
    def from_counts(cls, hits: int, reps: int, N: int | None = None) -> "McSummary":
        if not 0 <= hits <= reps:
            raise ValueError("need 0 <= hits <= reps")
        lo, hi = wilson_interval(hits, reps)
        est = hits / reps
        # keep estimate inside the rounded interval
        return cls(reps=reps, hits=hits, estimate=est, ci_low=min(lo, est), ci_high=max(hi, est), N=N)

    def to_dict(self) -> dict:
        return {"N": self.N, "reps": self.reps, "hits": self.hits, "estimate": self.estimate,
                "ci_low": self.ci_low, "ci_high": self.ci_high}


@dataclass
class ExperimentConfig:
    seed_base: int
    reps: int
    sizes: tuple = ()
    n: int | None = None
    m: int | None = None
    alpha: float | None = None
    workers: int = 1

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        if self.reps < 1:
            raise ValueError("reps must be positive")
        if any(b <= a for a, b in zip(self.sizes, self.sizes[1:])):
            raise ValueError(f"sizes must be strictly increasing, got {self.sizes}")
        if self.sizes and self.sizes[0] < 1:
            raise ValueError("sizes must be positive")

    def seed(self, r: int) -> int:
        return replicate_seed(self.seed_base, r)

    def keys(self) -> np.ndarray:
        return np.array([EnvSpec(self.seed(r)).key for r in range(self.reps)], dtype=np.uint64)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sizes"] = list(self.sizes)
        return {k: v for k, v in d.items() if v is not None}


def _chunks(reps: int, workers: int):
    workers = max(1, min(workers, reps))
    step = -(-reps // workers)
    return [(lo, min(lo + step, reps)) for lo in range(0, reps, step)]


def _run_chunked(fn, reps: int, workers: int | None):
    """Call ``fn(lo, hi)`` over replicate ranges, possibly on threads."""
    workers = default_workers() if workers is None else workers
    chunks = _chunks(reps, workers)
    if len(chunks) == 1:
        return [fn(*chunks[0])]
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        return list(pool.map(lambda c: fn(*c), chunks))


def result_document(experiment: str, cfg: ExperimentConfig, per_size: list, violations: int,
                    wall: float, **extra) -> dict:
    doc = {"experiment": experiment, "config": cfg.to_dict(), "per_size": per_size,
           "violations": int(violations), "wall_time_s": float(wall)}
    doc.update(extra)
    return doc


# --------------------------------------------------------------------------
# coexistence


@nb.njit(nogil=True, cache=True)
def _coexist_batch(keys, d, checkpoints, out):
    empty_times = np.empty((0, 0))
    labels = np.zeros((1, 1), dtype=np.uint8)
    N = checkpoints[-1]
    for r in range(keys.shape[0]):
        counts = np.zeros((checkpoints.shape[0], d + 1), dtype=np.int64)
        _label_sweep(keys[r], 1.0, empty_times, N, d, labels, False, checkpoints, counts, True)
        for c in range(checkpoints.shape[0]):
            ok = True
            for i in range(d + 1):
                if counts[c, i] == 0:
                    ok = False
            out[r, c] = ok


@dataclass
class CoexistenceResult:
    n: int
    roots: list
    per_size: list
    indicators: np.ndarray
    violations: int
    wall_time_s: float
    config: ExperimentConfig = field(repr=False, default=None)

    def summary(self, N: int) -> McSummary:
        for s in self.per_size:
            if s.N == N:
                return s
        raise KeyError(N)

    def to_document(self) -> dict:
        return result_document("coexist", self.config, [s.to_dict() for s in self.per_size],
                               self.violations, self.wall_time_s, roots=self.roots)


def coexistence_indicators(cfg: ExperimentConfig, d: int) -> np.ndarray:
    """``(reps, len(sizes))`` booleans: every root of diagonal ``d`` reaches diagonal N."""
    keys = cfg.keys()
    checkpoints = np.array(cfg.sizes, dtype=np.int64)
    out = np.zeros((cfg.reps, len(cfg.sizes)), dtype=np.bool_)

    def work(lo, hi):
        _coexist_batch(keys[lo:hi], d, checkpoints, out[lo:hi])

    _run_chunked(work, cfg.reps, cfg.workers)
    return out


def estimate_coexistence(cfg: ExperimentConfig) -> CoexistenceResult:
    """n-coexistence: the ``n`` subtrees rooted on diagonal ``n - 1`` all reach diagonal N."""
    n = cfg.n
    if n is None or n < 2:
        raise ValueError("coexistence needs n >= 2")
    if not cfg.sizes or cfg.sizes[0] < 4 * n:
        raise ValueError(f"sizes must all be >= 4n = {4 * n}")
    t0 = time.perf_counter()
    d = n - 1
    ind = coexistence_indicators(cfg, d)
    violations = int(np.sum(ind[:, 1:] & ~ind[:, :-1]))
    per_size = [McSummary.from_counts(int(ind[:, j].sum()), cfg.reps, N) for j, N in enumerate(cfg.sizes)]
    return CoexistenceResult(n=n, roots=[[i, d - i] for i in range(d + 1)], per_size=per_size,
                             indicators=ind, violations=violations,
                             wall_time_s=time.perf_counter() - t0, config=cfg)


# --------------------------------------------------------------------------
# T_m frequencies


@nb.njit(nogil=True, cache=True)
def _tm_batch(keys, m, xs, ys, out):
    """Tree masks read from the sign of G(x-1, y) - G(x, y-1)."""
    G = np.empty((m + 1, m + 1))
    for r in range(keys.shape[0]):
        key = keys[r]
        for s in range(m):
            for x in range(s + 1):
                y = s - x
                w = hashed_time(key, x, y)
                if x == 0 and y == 0:
                    G[x, y] = w
                elif x == 0:
                    G[x, y] = w + G[x, y - 1]
                elif y == 0:
                    G[x, y] = w + G[x - 1, y]
                else:
                    G[x, y] = w + max(G[x - 1, y], G[x, y - 1])
        mask = 0
        for i in range(xs.shape[0]):
            if G[xs[i] - 1, ys[i]] - G[xs[i], ys[i] - 1] < 0:
                mask |= 1 << i
        out[r] = mask


@dataclass
class TmFrequency:
    m: int
    reps: int
    counts: np.ndarray  # indexed by mask
    wall_time_s: float
    config: ExperimentConfig = field(repr=False, default=None)

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.reps

    def summaries(self) -> dict:
        return {TmTree(self.m, mask).to_str(): McSummary.from_counts(int(c), self.reps)
                for mask, c in enumerate(self.counts)}

    def to_document(self) -> dict:
        per = []
        for mask, c in enumerate(self.counts):
            d = McSummary.from_counts(int(c), self.reps, self.m).to_dict()
            d["tree"] = TmTree(self.m, mask).to_str()
            per.append(d)
        return result_document("tm", self.config, per, 0, self.wall_time_s)


def tree_masks(cfg: ExperimentConfig, m: int) -> np.ndarray:
    sites = interior_sites(m)
    xs = np.array([s[0] for s in sites], dtype=np.int64)
    ys = np.array([s[1] for s in sites], dtype=np.int64)
    keys = cfg.keys()
    out = np.zeros(cfg.reps, dtype=np.int64)

    def work(lo, hi):
        _tm_batch(keys[lo:hi], m, xs, ys, out[lo:hi])

    _run_chunked(work, cfg.reps, cfg.workers)
    return out


def tm_frequency(cfg: ExperimentConfig) -> TmFrequency:
    m = cfg.m
    if m is None or not 1 <= m <= 4:
        raise ValueError("tm_frequency needs 1 <= m <= 4")
    t0 = time.perf_counter()
    masks = tree_masks(cfg, m)
    counts = np.bincount(masks, minlength=count_Tm(m))
    return TmFrequency(m=m, reps=cfg.reps, counts=counts, wall_time_s=time.perf_counter() - t0, config=cfg)


# --------------------------------------------------------------------------
# coalescence


def agreement_length(a: np.ndarray, b: np.ndarray) -> int:
    """Diagonal of the last site shared by two paths that start at the origin."""
    n = min(len(a), len(b))
    diff = np.any(a[:n] != b[:n], axis=1)
    first = int(np.argmax(diff)) if diff.any() else n
    return first - 1


@dataclass
class CoalescenceResult:
    alpha: float
    pairs: list
    per_pair: list
    agreement: np.ndarray  # (reps, len(pairs))
    wall_time_s: float
    config: ExperimentConfig = field(repr=False, default=None)

    def to_document(self) -> dict:
        per = []
        for (n1, n2), s in zip(self.pairs, self.per_pair):
            d = s.to_dict()
            d["N2"] = n2
            j = self.pairs.index((n1, n2))
            d["mean_agreement"] = float(self.agreement[:, j].mean())
            per.append(d)
        return result_document("coalesce", self.config, per, 0, self.wall_time_s)


def coalescence(cfg: ExperimentConfig) -> CoalescenceResult:
    """Shared prefix of the geodesics aimed at ``alpha`` on consecutive sizes.

    A replicate hits for the pair ``(N, N')`` when the two geodesics agree
    through diagonal ``N / 2`` at least.
    """
    alpha = cfg.alpha
    if alpha is None or not 0.0 <= alpha <= math.pi / 2:
        raise ValueError("alpha must lie in [0, pi/2]")
    if len(cfg.sizes) < 2:
        raise ValueError("coalescence needs at least two sizes")
    t0 = time.perf_counter()
    pairs = list(zip(cfg.sizes, cfg.sizes[1:]))
    targets = [nearest_diagonal_site(N, alpha) for N in cfg.sizes]
    agree = np.zeros((cfg.reps, len(pairs)), dtype=np.int64)

    def work(lo, hi):
        for r in range(lo, hi):
            f = compute_field(EnvSpec(cfg.seed(r)), cfg.sizes[-1])
            paths = [geodesic_to(f, z).sites for z in targets]
            for j in range(len(pairs)):
                agree[r, j] = agreement_length(paths[j], paths[j + 1])

    _run_chunked(work, cfg.reps, cfg.workers)
    per_pair = [McSummary.from_counts(int(np.sum(agree[:, j] >= n1 / 2)), cfg.reps, n1)
                for j, (n1, _) in enumerate(pairs)]
    return CoalescenceResult(alpha=alpha, pairs=pairs, per_pair=per_pair, agreement=agree,
                             wall_time_s=time.perf_counter() - t0, config=cfg)


# --------------------------------------------------------------------------
# transversal fluctuations


@dataclass
class FluctuationResult:
    sizes: tuple
    mean: np.ndarray
    mean_over_N: np.ndarray
    slope: float
    samples: np.ndarray  # (reps, len(sizes))
    wall_time_s: float
    config: ExperimentConfig = field(repr=False, default=None)

    def to_document(self) -> dict:
        per = [{"N": int(N), "reps": int(self.samples.shape[0]), "mean_fluctuation": float(mu),
                "mean_over_N": float(r)} for N, mu, r in zip(self.sizes, self.mean, self.mean_over_N)]
        return result_document("fluct", self.config, per, 0, self.wall_time_s, slope=self.slope)


def fluctuation_target(N: int, direction: str) -> tuple[int, int]:
    if direction == "diagonal":
        return N // 2, N - N // 2
    if direction == "axis":
        return N, 0
    raise ValueError(f"unknown direction {direction!r}")


def fluctuation_scaling(cfg: ExperimentConfig, direction: str = "diagonal") -> FluctuationResult:
    """Mean transversal fluctuation of the geodesic to the middle of diagonal N."""
    if len(cfg.sizes) < 3:
        raise ValueError("fluctuation scaling needs at least three sizes")
    t0 = time.perf_counter()
    sizes = cfg.sizes
    samples = np.zeros((cfg.reps, len(sizes)))

    def work(lo, hi):
        for r in range(lo, hi):
            f = compute_field(EnvSpec(cfg.seed(r)), sizes[-1])
            for j, N in enumerate(sizes):
                samples[r, j] = transversal_fluctuation(geodesic_to(f, fluctuation_target(N, direction)))

    _run_chunked(work, cfg.reps, cfg.workers)
    mean = samples.mean(axis=0)
    ns = np.array(sizes, dtype=float)
    slope = float(np.polyfit(np.log(ns), np.log(mean), 1)[0]) if np.all(mean > 0) else float("nan")
    return FluctuationResult(sizes=sizes, mean=mean, mean_over_N=mean / ns, slope=slope,
                             samples=samples, wall_time_s=time.perf_counter() - t0, config=cfg)


# --------------------------------------------------------------------------
# interface direction, null density, shape


def interface_endpoints(cfg: ExperimentConfig, N: int) -> np.ndarray:
    """x coordinate of the interface on diagonal N, one per replicate."""
    keys = cfg.keys()
    out = np.zeros(cfg.reps, dtype=np.int64)

    def work(lo, hi):
        px = np.empty(N + 1, dtype=np.int64)
        empty = np.empty((0, 0))
        for r in range(lo, hi):
            _interface_sweep(keys[r], 1.0, empty, N, px)
            out[r] = px[N]

    _run_chunked(work, cfg.reps, cfg.workers)
    return out


@dataclass
class AngleHistogram:
    N: int
    reps: int
    counts: np.ndarray  # counts[x] for interface ending at (x, N - x)

    @property
    def angles(self) -> np.ndarray:
        xs = np.arange(self.N + 1)
        return np.arctan2(self.N - xs, xs)

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.reps

    @property
    def boundary_frequencies(self) -> tuple[float, float]:
        f = self.frequencies
        return float(f[self.N]), float(f[0])  # angle 0, angle pi/2

    @property
    def max_interior_frequency(self) -> float:
        return float(self.frequencies[1:self.N].max()) if self.N > 1 else 0.0


def interface_angle_histogram(cfg: ExperimentConfig, N: int) -> AngleHistogram:
    ends = interface_endpoints(cfg, N)
    return AngleHistogram(N=N, reps=cfg.reps, counts=np.bincount(ends, minlength=N + 1))


@dataclass
class DensityResult:
    N: int
    n: int
    reps: int
    surviving: int
    densities: np.ndarray

    def percentile(self, q: float) -> float:
        return float(np.percentile(self.densities, q))


def middle_subtree_density(cfg: ExperimentConfig, N: int, n: int) -> DensityResult:
    """Density of C(1,1) in ``[0, n]^2`` over replicates where it reaches diagonal N."""
    dens = [None] * cfg.reps

    def work(lo, hi):
        for r in range(lo, hi):
            lab = label_clusters(EnvSpec(cfg.seed(r)), N, 2)
            if lab.boundary_hits[1] > 0:
                dens[r] = subtree_density(lab, (1, 1), n)

    _run_chunked(work, cfg.reps, cfg.workers)
    vals = np.array([d for d in dens if d is not None])
    return DensityResult(N=N, n=n, reps=cfg.reps, surviving=len(vals), densities=vals)


def shape_ratios(cfg: ExperimentConfig, N: int) -> np.ndarray:
    """``G(N, N) / N`` per replicate (square box)."""
    out = np.zeros(cfg.reps)

    def work(lo, hi):
        for r in range(lo, hi):
            f = compute_field(EnvSpec(cfg.seed(r)), N, square=True)
            out[r] = f.top_G[N] / N

    _run_chunked(work, cfg.reps, cfg.workers)
    return out
