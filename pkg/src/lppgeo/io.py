"""CSV and JSON emitters shared by the command line."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .geodesics import ClusterLabeling, GeodesicPath, InterfacePath, split_points
from .localtree import WitnessAssignment


def _open(path):
    return open(path, "w", newline="")


def write_path_csv(path, p: GeodesicPath | InterfacePath) -> None:
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(["k", "x", "y"])
        for k, (x, y) in enumerate(p.sites):
            w.writerow([k, int(x), int(y)])


def write_splits_csv(path, labeling: ClusterLabeling) -> None:
    """Columns: angle, left_root (owner before the change, scanning from the
    x-axis), right_root (owner after it)."""
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(["angle", "left_root", "right_root"])
        for angle, a, b in split_points(labeling):
            w.writerow([repr(angle), a, b])


def write_boundary_csv(path, labeling: ClusterLabeling) -> None:
    N = labeling.N
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "root"])
        for x in range(N + 1):
            w.writerow([x, N - x, int(labeling.boundary[x])])


def write_diagonal_csv(path, N: int, G: np.ndarray) -> None:
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "G"])
        for x in range(N + 1):
            w.writerow([x, N - x, repr(float(G[x]))])


def write_witness_csv(fh_or_path, wa: WitnessAssignment) -> None:
    rows = sorted(wa.times.items(), key=lambda kv: (kv[0][0] + kv[0][1], kv[0][0]))
    own = isinstance(fh_or_path, (str, Path))
    fh = _open(fh_or_path) if own else fh_or_path
    try:
        w = csv.writer(fh)
        w.writerow(["x", "y", "time"])
        for (x, y), t in rows:
            w.writerow([x, y, repr(t)])
    finally:
        if own:
            fh.close()


def read_times_csv(path) -> dict:
    """``(x, y) -> time`` from a CSV with header ``x,y,time``."""
    out = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out[int(row["x"]), int(row["y"])] = float(row["time"])
    if not out:
        raise ValueError(f"{path}: no times found")
    return out


def times_grid(times: dict, size: int, fill: float = 1.0) -> np.ndarray:
    grid = np.full((size, size), float(fill))
    for (x, y), t in times.items():
        if x < size and y < size:
            grid[x, y] = t
    return grid


def write_json(path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")
