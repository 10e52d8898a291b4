"""Exponential last-passage percolation: geodesic trees, competing subtrees,
local tree witnesses and Monte Carlo checks."""

from .core import (
    DiagonalNotKept,
    DiagonalVectors,
    PassageField,
    SizeOverflowError,
    brute_force_G,
    compute_field,
    diagonal_vectors,
)
from .env import EnvSpec, Site, sample_time, sample_times
from .experiments import (
    ExperimentConfig,
    McSummary,
    coalescence,
    estimate_coexistence,
    fluctuation_scaling,
    tm_frequency,
    wilson_interval,
)
from .geodesics import (
    ClusterLabeling,
    GeodesicPath,
    InterfacePath,
    Side,
    competition_interface,
    extreme_survivor_path,
    geodesic_to,
    label_clusters,
    split_directions,
    subtree_density,
    transversal_fluctuation,
)
from .localtree import TmTree, WitnessAssignment, enumerate_Tm, extract_Tm, witness_times

__version__ = "0.1.0"
