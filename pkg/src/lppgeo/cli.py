"""Command-line front end.

Exit status: 0 on success, 2 on bad flags (argparse convention), 1 on
runtime failures such as an oversized box or a failed oracle check.
Every randomized command needs ``--seed`` or ``--seed-base``.
"""

from __future__ import annotations

import argparse
import math
import sys
import time

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import io
from .core import SizeOverflowError, brute_force_G, compute_field, default_workers, dense_G, dump_parents
from .env import EnvSpec, time_grid
from .experiments import (
    ExperimentConfig,
    McSummary,
    coalescence,
    estimate_coexistence,
    fluctuation_scaling,
    result_document,
    tm_frequency,
)
from .geodesics import (
    competition_interface,
    geodesic_to,
    label_clusters,
    split_directions,
    transversal_fluctuation,
)
from .localtree import TmTree, enumerate_Tm, extract_Tm, witness_times


class _Parser(argparse.ArgumentParser):
    def __init__(self, *a, **kw):
        kw.setdefault("allow_abbrev", False)
        super().__init__(*a, **kw)


def _sizes(text: str) -> tuple:
    try:
        vals = tuple(int(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty size list")
    return vals


def _site(text: str) -> tuple:
    try:
        x, y = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected X,Y, got {text!r}")
    return x, y


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("must fit in 64 unsigned bits")
    return v


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--workers", type=int, default=None, help="thread cap (default: available cores)")
    p.add_argument("--config", default=None, help="TOML file whose keys mirror the flags; flags win")


def _env_flags(p):
    p.add_argument("--seed", type=_u64, default=None, help="environment seed (required)")
    p.add_argument("--scale", type=float, default=1.0, help="rate rescaling of every time")


def _exp_flags(p, sizes, reps):
    p.add_argument("--seed-base", type=_u64, default=None, help="replicate seed base (required)")
    p.add_argument("--reps", type=int, default=reps)
    p.add_argument("--sizes", type=_sizes, default=sizes)
    p.add_argument("--json", default=None, help="write the result document here")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lppgeo", description="Exponential last-passage percolation toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="build a passage field and summarise it")
    _env_flags(p)
    p.add_argument("--size", type=int, default=256, help="box size N")
    p.add_argument("--square", action="store_true", help="fill [0,N]^2 instead of x+y<=N")
    p.add_argument("--keep-m", type=int, default=0)
    p.add_argument("--emit-parents", default=None, help="write the LPPT parent-map dump")
    p.add_argument("--csv", default=None, help="G on diagonal N as x,y,G")
    p.add_argument("--roots-diagonal", type=int, default=None, help="label subtrees rooted on this diagonal")
    p.add_argument("--splits-csv", default=None)
    p.add_argument("--boundary-csv", default=None)
    _common(p)

    p = sub.add_parser("geodesic", help="geodesic to one site")
    _env_flags(p)
    p.add_argument("--to", type=_site, required=False, default=None, help="target X,Y")
    p.add_argument("--csv", default=None)
    _common(p)

    p = sub.add_parser("interface", help="competition interface up to diagonal N")
    _env_flags(p)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--csv", default=None)
    _common(p)

    p = sub.add_parser("coexist", help="n-coexistence Monte Carlo")
    p.add_argument("--n", type=int, default=None, help="number of roots, on diagonal n-1 (required)")
    _exp_flags(p, (128, 256, 512), 20000)
    _common(p)

    p = sub.add_parser("tm", help="directed trees on {|z|<=m}")
    p.add_argument("--m", type=int, default=None)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--enumerate", action="store_true")
    mode.add_argument("--extract", action="store_true")
    p.add_argument("--times", default=None, help="x,y,time CSV for --extract")
    p.add_argument("--seed", type=_u64, default=None, help="environment for --extract")
    p.add_argument("--seed-base", type=_u64, default=None, help="frequency run over replicates")
    p.add_argument("--reps", type=int, default=10000)
    p.add_argument("--json", default=None)
    _common(p)

    p = sub.add_parser("witness", help="times forcing a given tree")
    p.add_argument("--tree", default=None, help="tree as m:hexmask (required)")
    p.add_argument("--eps1", type=float, default=1.0)
    p.add_argument("--csv", default=None, help="output CSV (default stdout)")
    _common(p)

    p = sub.add_parser("oracle-check", help="DP against exhaustive path enumeration")
    p.add_argument("--seed-base", type=_u64, default=None)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--max-size", type=int, default=6, help="largest grid side (<= 8)")
    p.add_argument("--json", default=None)
    _common(p)

    p = sub.add_parser("fluct", help="transversal fluctuation scaling")
    _exp_flags(p, (64, 128, 256, 512), 200)
    p.add_argument("--direction", choices=("diagonal", "axis"), default="diagonal")
    _common(p)

    p = sub.add_parser("coalesce", help="geodesic agreement across scales")
    _exp_flags(p, (64, 128, 256, 512), 2000)
    p.add_argument("--alpha", type=float, default=math.pi / 4, help="direction in radians")
    _common(p)
    return parser


def _subparser(parser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def _apply_config(parser, argv):
    """Re-parse with config-file values installed as defaults."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    sp = _subparser(parser, args.command)
    try:
        with open(args.config, "rb") as fh:
            cfg = tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        sp.error(f"argument --config: {exc}")
    known = {a.dest: a for a in sp._actions}
    defaults = {}
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if dest not in known or dest in ("help", "config"):
            sp.error(f"argument --config: unknown key {key!r}")
        action = known[dest]
        if action.type is not None and not isinstance(value, bool):
            try:
                value = action.type(value if isinstance(value, str) else
                                    ",".join(map(str, value)) if isinstance(value, list) else str(value))
            except (argparse.ArgumentTypeError, ValueError) as exc:
                sp.error(f"argument --config: {key}: {exc}")
        defaults[dest] = value
    sp.set_defaults(**defaults)
    return parser.parse_args(argv)


def _require(sp, args, *names):
    for name in names:
        if getattr(args, name.lstrip("-").replace("-", "_")) is None:
            sp.error(f"argument {name} is required")


def _workers(args):
    return default_workers() if args.workers is None else args.workers


def _emit(args, doc):
    if getattr(args, "json", None):
        io.write_json(args.json, doc)


# --------------------------------------------------------------------------
# commands


def cmd_simulate(args, sp):
    _require(sp, args, "--seed")
    if args.size < 1:
        sp.error("argument --size: must be positive")
    if not 0 <= args.keep_m <= args.size:
        sp.error("argument --keep-m: must lie in [0, size]")
    spec = EnvSpec(args.seed, args.scale)
    t0 = time.perf_counter()
    f = compute_field(spec, args.size, args.keep_m, square=args.square, workers=_workers(args))
    wall = time.perf_counter() - t0
    N = args.size
    print(f"N={N} mode={'square' if args.square else 'diagonal'} wall_s={wall:.3f}")
    print(f"G({N},0)={float(f.diag_G[N])!r} G(0,{N})={float(f.diag_G[0])!r} max_diag_G={float(f.diag_G.max())!r}")
    if args.square:
        print(f"G({N},{N})={float(f.top_G[N])!r} G(N,N)/N={f.top_G[N] / N:.6f}")
    if args.emit_parents:
        with open(args.emit_parents, "wb") as fh:
            dump_parents(f, fh)
    if args.csv:
        io.write_diagonal_csv(args.csv, N, f.diag_G)
    if args.roots_diagonal is not None:
        d = args.roots_diagonal
        if not 0 <= d < N:
            sp.error("argument --roots-diagonal: must lie in [0, size)")
        lab = label_clusters(spec, N, d)
        print("boundary_hits=" + ",".join(str(int(h)) for h in lab.boundary_hits))
        print(f"splits={len(split_directions(lab))}")
        if args.splits_csv:
            io.write_splits_csv(args.splits_csv, lab)
        if args.boundary_csv:
            io.write_boundary_csv(args.boundary_csv, lab)
    return 0


def cmd_geodesic(args, sp):
    _require(sp, args, "--seed", "--to")
    x, y = args.to
    if x < 0 or y < 0 or x + y == 0:
        sp.error("argument --to: need a nonnegative site other than the origin")
    spec = EnvSpec(args.seed, args.scale)
    f = compute_field(spec, x + y, workers=_workers(args))
    path = geodesic_to(f, (x, y))
    print(f"G={float(f.diag_G[x])!r} steps={path.steps} fluctuation={transversal_fluctuation(path):.6f}")
    if args.csv:
        io.write_path_csv(args.csv, path)
    return 0


def cmd_interface(args, sp):
    _require(sp, args, "--seed")
    if args.size < 1:
        sp.error("argument --size: must be positive")
    spec = EnvSpec(args.seed, args.scale)
    f = compute_field(spec, args.size, workers=_workers(args))
    phi = competition_interface(f, args.size)
    x, y = phi.sites[-1]
    print(f"end=({x},{y}) angle={phi.angle!r}")
    if args.csv:
        io.write_path_csv(args.csv, phi)
    return 0


def cmd_coexist(args, sp):
    _require(sp, args, "--n")
    if args.n < 2:
        sp.error("argument --n: must be >= 2")
    _require(sp, args, "--seed-base")
    if args.reps < 1:
        sp.error("argument --reps: must be positive")
    if min(args.sizes) < 4 * args.n:
        sp.error(f"argument --sizes: every size must be >= 4n = {4 * args.n}")
    try:
        cfg = ExperimentConfig(args.seed_base, args.reps, args.sizes, n=args.n, workers=_workers(args))
    except ValueError as exc:
        sp.error(f"argument --sizes: {exc}")
    res = estimate_coexistence(cfg)
    for s in res.per_size:
        print(f"N={s.N} hits={s.hits}/{s.reps} estimate={s.estimate:.6f} ci=[{s.ci_low:.6f},{s.ci_high:.6f}]")
    print(f"violations={res.violations}")
    _emit(args, res.to_document())
    return 0


def cmd_tm(args, sp):
    if args.enumerate:
        _require(sp, args, "--m")
        if args.m < 1:
            sp.error("argument --m: must be positive")
        try:
            trees = enumerate_Tm(args.m)
        except ValueError as exc:
            sp.error(f"argument --m: {exc}")
        for T in trees:
            print(T.to_str())
        return 0
    if args.extract:
        if args.times:
            times = io.read_times_csv(args.times)
            m = args.m if args.m is not None else max(x + y for x, y in times) + 1
            grid = io.times_grid(times, m + 1)
            f = compute_field(grid, m, keep_m=m)
        else:
            _require(sp, args, "--m")
            if args.seed is None:
                sp.error("argument --seed or --times is required with --extract")
            m = args.m
            f = compute_field(EnvSpec(args.seed), m, keep_m=m)
        print(extract_Tm(f, m).to_str())
        return 0
    _require(sp, args, "--m", "--seed-base")
    if not 1 <= args.m <= 4:
        sp.error("argument --m: frequency runs need 1 <= m <= 4")
    cfg = ExperimentConfig(args.seed_base, args.reps, m=args.m, workers=_workers(args))
    res = tm_frequency(cfg)
    for mask, c in enumerate(res.counts):
        print(f"{TmTree(args.m, mask).to_str()} {int(c)} {c / res.reps:.6f}")
    _emit(args, res.to_document())
    return 0


def cmd_witness(args, sp):
    _require(sp, args, "--tree")
    try:
        T = TmTree.parse(args.tree)
    except ValueError as exc:
        sp.error(f"argument --tree: {exc}")
    if not args.eps1 > 0:
        sp.error("argument --eps1: must be positive")
    wa = witness_times(T, args.eps1)
    io.write_witness_csv(args.csv if args.csv else sys.stdout, wa)
    return 0


def cmd_oracle(args, sp):
    _require(sp, args, "--seed-base")
    if not 1 <= args.max_size <= 8:
        sp.error("argument --max-size: must lie in [1, 8]")
    cfg = ExperimentConfig(args.seed_base, args.reps)
    t0 = time.perf_counter()
    per = []
    failures = 0
    for side in range(1, args.max_size + 1):
        N = side - 1
        ok = 0
        for r in range(cfg.reps):
            spec = EnvSpec(cfg.seed(r))
            f = compute_field(spec, N, keep_m=N, square=True)
            bf = brute_force_G(time_grid(spec, side))
            if np.allclose(dense_G(f), bf.G, rtol=1e-12, atol=0) and (bf.count == 1).all():
                ok += 1
        failures += cfg.reps - ok
        per.append(McSummary.from_counts(ok, cfg.reps, N).to_dict())
        print(f"{side}x{side}: {ok}/{cfg.reps} agree")
    _emit(args, result_document("oracle-check", cfg, per, failures, time.perf_counter() - t0))
    return 0 if failures == 0 else 1


def cmd_fluct(args, sp):
    _require(sp, args, "--seed-base")
    if len(args.sizes) < 3:
        sp.error("argument --sizes: need at least three sizes")
    try:
        cfg = ExperimentConfig(args.seed_base, args.reps, args.sizes, workers=_workers(args))
    except ValueError as exc:
        sp.error(f"argument --sizes: {exc}")
    res = fluctuation_scaling(cfg, args.direction)
    for N, mu, r in zip(res.sizes, res.mean, res.mean_over_N):
        print(f"N={N} mean={mu:.6f} mean/N={r:.6f}")
    print(f"slope={res.slope:.6f}")
    _emit(args, res.to_document())
    return 0


def cmd_coalesce(args, sp):
    _require(sp, args, "--seed-base")
    if not 0 <= args.alpha <= math.pi / 2:
        sp.error("argument --alpha: must lie in [0, pi/2]")
    if len(args.sizes) < 2:
        sp.error("argument --sizes: need at least two sizes")
    try:
        cfg = ExperimentConfig(args.seed_base, args.reps, args.sizes, alpha=args.alpha, workers=_workers(args))
    except ValueError as exc:
        sp.error(f"argument --sizes: {exc}")
    res = coalescence(cfg)
    for (n1, n2), s, j in zip(res.pairs, res.per_pair, range(len(res.pairs))):
        print(f"pair=({n1},{n2}) hits={s.hits}/{s.reps} estimate={s.estimate:.6f} "
              f"mean_agreement={res.agreement[:, j].mean():.3f}")
    _emit(args, res.to_document())
    return 0


HANDLERS = {
    "simulate": cmd_simulate,
    "geodesic": cmd_geodesic,
    "interface": cmd_interface,
    "coexist": cmd_coexist,
    "tm": cmd_tm,
    "witness": cmd_witness,
    "oracle-check": cmd_oracle,
    "fluct": cmd_fluct,
    "coalesce": cmd_coalesce,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        sp = _subparser(parser, args.command)
        if args.workers is not None and args.workers < 1:
            sp.error("argument --workers: must be positive")
        return HANDLERS[args.command](args, sp)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    except (SizeOverflowError, ValueError, OSError, AssertionError) as exc:
        print(f"lppgeo: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
