import json
import math
from pathlib import Path

import numpy as np
import pytest

from lppgeo.env import EnvSpec
from lppgeo.experiments import (
    SIX_MINUS_8LOG2,
    ExperimentConfig,
    McSummary,
    agreement_length,
    coalescence,
    coexistence_indicators,
    estimate_coexistence,
    fluctuation_scaling,
    interface_angle_histogram,
    middle_subtree_density,
    shape_ratios,
    tm_frequency,
    tree_masks,
    wilson_interval,
)
from lppgeo.geodesics import interface_path, label_clusters
from lppgeo.localtree import sample_Tm

SCHEMA = json.loads((Path(__file__).resolve().parents[1] / "docs" / "result.schema.json").read_text())


def validate(doc):
    jsonschema = pytest.importorskip("jsonschema")
    jsonschema.validate(json.loads(json.dumps(doc)), SCHEMA)


def test_constant():
    assert SIX_MINUS_8LOG2 == pytest.approx(0.454823, abs=1e-6)


@pytest.mark.parametrize("reps", [1, 10, 1000, 20000])
def test_wilson_extremes(reps):
    for hits in (0, reps):
        lo, hi = wilson_interval(hits, reps)
        assert 0.0 <= lo < hi <= 1.0
    lo, hi = wilson_interval(0, reps)
    assert lo == 0.0
    lo, hi = wilson_interval(reps, reps)
    assert hi == 1.0


def test_wilson_known_value():
    lo, hi = wilson_interval(50, 100)
    assert lo == pytest.approx(0.4038, abs=1e-4)
    assert hi == pytest.approx(0.5962, abs=1e-4)


def test_summary_invariants():
    for hits, reps in [(0, 5), (3, 7), (7, 7), (1, 20000)]:
        s = McSummary.from_counts(hits, reps)
        assert 0 <= s.ci_low <= s.estimate <= s.ci_high <= 1
    with pytest.raises(ValueError):
        McSummary.from_counts(8, 7)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(seed_base=1, reps=0)
    with pytest.raises(ValueError):
        ExperimentConfig(seed_base=1, reps=5, sizes=(64, 64))
    cfg = ExperimentConfig(seed_base=1, reps=3, sizes=[8, 16])
    assert cfg.sizes == (8, 16)
    assert EnvSpec(cfg.seed(2)).key == int(cfg.keys()[2])


def test_coexistence_matches_label_clusters():
    cfg = ExperimentConfig(seed_base=3, reps=60, sizes=(16, 32, 64), n=3)
    ind = coexistence_indicators(cfg, 2)
    for r in range(cfg.reps):
        for j, N in enumerate(cfg.sizes):
            hits = label_clusters(EnvSpec(cfg.seed(r)), N, 2).boundary_hits
            assert ind[r, j] == bool((hits > 0).all())


def test_coexistence_reproducible_and_worker_free():
    a = estimate_coexistence(ExperimentConfig(seed_base=7, reps=400, sizes=(16, 32, 64), n=3, workers=1))
    b = estimate_coexistence(ExperimentConfig(seed_base=7, reps=400, sizes=(16, 32, 64), n=3, workers=4))
    np.testing.assert_array_equal(a.indicators, b.indicators)
    assert [s.to_dict() for s in a.per_size] == [s.to_dict() for s in b.per_size]
    assert a.violations == 0
    est = [s.estimate for s in a.per_size]
    assert est == sorted(est, reverse=True)
    validate(a.to_document())


def test_coexistence_rejects_bad_n():
    with pytest.raises(ValueError):
        estimate_coexistence(ExperimentConfig(seed_base=1, reps=5, sizes=(64,), n=1))
    with pytest.raises(ValueError):
        estimate_coexistence(ExperimentConfig(seed_base=1, reps=5, sizes=(8,), n=3))


def test_tm_batch_matches_extraction():
    cfg = ExperimentConfig(seed_base=5, reps=300, m=4)
    masks = tree_masks(cfg, 4)
    for r in range(cfg.reps):
        assert masks[r] == sample_Tm(EnvSpec(cfg.seed(r)), 4).mask


def test_tm_frequency_document():
    res = tm_frequency(ExperimentConfig(seed_base=2, reps=2000, m=3))
    assert res.counts.sum() == 2000
    assert res.frequencies.sum() == pytest.approx(1.0, abs=0)
    assert len(res.summaries()) == 8
    validate(res.to_document())


def test_agreement_length():
    a = np.array([[0, 0], [1, 0], [1, 1], [2, 1]])
    b = np.array([[0, 0], [1, 0], [2, 0], [2, 1]])
    assert agreement_length(a, b) == 1
    assert agreement_length(a, a) == 3


def test_coalescence_axis_is_full():
    res = coalescence(ExperimentConfig(seed_base=1, reps=20, sizes=(16, 32, 64), alpha=0.0))
    assert all(s.estimate == 1.0 for s in res.per_pair)
    np.testing.assert_array_equal(res.agreement, [[16, 32]] * 20)
    validate(res.to_document())


def test_fluctuation_axis_is_zero():
    res = fluctuation_scaling(ExperimentConfig(seed_base=1, reps=10, sizes=(16, 32, 64)), "axis")
    assert np.all(res.samples == 0)


def test_fluctuation_document():
    res = fluctuation_scaling(ExperimentConfig(seed_base=1, reps=20, sizes=(16, 32, 64)))
    assert np.all(res.mean > 0)
    assert math.isfinite(res.slope)
    validate(res.to_document())


def test_angle_histogram_counts():
    cfg = ExperimentConfig(seed_base=4, reps=200)
    h = interface_angle_histogram(cfg, 32)
    assert h.counts.sum() == 200
    for r in (0, 17, 199):
        x = interface_path(EnvSpec(cfg.seed(r)), 32).sites[-1, 0]
        assert h.counts[x] > 0
    assert h.angles[0] == pytest.approx(math.pi / 2) and h.angles[-1] == 0.0


def test_density_range():
    res = middle_subtree_density(ExperimentConfig(seed_base=1, reps=40), 64, 32)
    assert 0 < res.surviving <= 40
    assert np.all((res.densities >= 0) & (res.densities <= 1))


def test_shape_ratio_small():
    r = shape_ratios(ExperimentConfig(seed_base=1, reps=5), 100)
    assert np.all((r > 2.5) & (r < 5.0))
