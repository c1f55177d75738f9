import json
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qs3orao.data import OrdinalDataset, make_ordinal_blobs
from qs3orao.evaluation import (Metrics, auc_rank_sum, bench_scaling, evaluate_model, metrics_from_scores,
                                overall_auc, timing_ratio, write_bench_csv)
from qs3orao.features import KernelSpec
from qs3orao.model import RankModel
from qs3orao.risk import auc_risk_pn
from qs3orao.thresholds import Thresholds, fit_thresholds
from qs3orao.trainer import TrainConfig


def test_auc_examples():
    assert auc_rank_sum([0.9, 0.8, 0.1], [True, True, False]) == 1.0
    assert auc_rank_sum([3.0, 3.0, 3.0, 3.0], [True, False, True, False]) == 0.5
    with pytest.raises(ValueError):
        auc_rank_sum([1.0, 2.0], [True, True])


@given(st.lists(st.tuples(st.integers(-6, 6), st.booleans()), min_size=2, max_size=60))
def test_rank_sum_equals_enumeration(pairs):
    scores = np.array([p[0] for p in pairs], dtype=float) / 3
    pos = np.array([p[1] for p in pairs])
    if pos.all() or not pos.any():
        return
    ref = 1 - auc_risk_pn(scores[pos], scores[~pos], method="enumerate")
    assert abs(auc_rank_sum(scores, pos) - ref) <= 1e-12


@given(st.lists(st.integers(1, 4), min_size=8, max_size=40), st.integers(0, 1000))
def test_monotone_transform_keeps_aucs(labels, seed):
    labels = np.array(labels)
    scores = np.random.default_rng(seed).normal(size=labels.size)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = overall_auc(scores, labels, 4)
        b = overall_auc(np.exp(2 * scores) - 5, labels, 4)
    assert a == b or (np.isnan(a) and np.isnan(b))


def test_null_model_auc_is_half(rng):
    labels = rng.integers(1, 5, size=50)
    labels[:4] = [1, 2, 3, 4]
    assert abs(overall_auc(np.zeros(50), labels, 4) - 0.5) <= 1e-12


def test_oracle_scores_give_perfect_metrics():
    labels = np.array([1, 2, 3, 4, 2, 3])
    scores = labels.astype(float)
    th = fit_thresholds(scores, labels, 4, margin=0.0)
    np.testing.assert_allclose(th.b, [1.5, 2.5, 3.5])
    m = metrics_from_scores(scores, labels, th, 4)
    assert m.overall_auc == 1.0 and m.mae == 0.0 and m.zero_one_error == 0.0
    assert len(m.per_subproblem_auc) == 3


def test_metrics_invariants_and_json():
    labels = np.array([1, 2, 3, 1, 2, 3])
    scores = np.array([0.1, 0.5, 0.4, 0.2, 0.3, 0.9])
    m = metrics_from_scores(scores, labels, Thresholds([0.25, 0.45]), 3, train_ns=5, peak_coeff_bytes=64)
    assert m.overall_auc == pytest.approx(np.mean(m.per_subproblem_auc))
    assert all(0 <= a <= 1 for a in m.per_subproblem_auc)
    doc = json.loads(m.to_json(extra="x"))
    assert doc["schema_version"] == 1 and doc["train_ns"] == 5 and doc["extra"] == "x"


def test_missing_class_subproblem_excluded():
    model = RankModel(KernelSpec(1.0, 1), 0, 2, np.zeros((0, 4)), Thresholds([-1.0, 1.0]), 3)
    ds = OrdinalDataset(np.zeros((4, 1)), np.array([1, 1, 1, 2]), 3)
    with pytest.warns(RuntimeWarning, match="subproblem 2"):
        m = evaluate_model(model, ds)
    assert m.per_subproblem_auc[1] is None
    assert m.overall_auc == 0.5


def test_constant_model_auc(separable_test):
    model = RankModel(KernelSpec(1.0, 1), 0, 2, np.zeros((0, 4)), Thresholds([-1.0, 1.0]), 3)
    m = evaluate_model(model, separable_test)
    assert m.overall_auc == 0.5
    assert m.zero_one_error == pytest.approx(2 / 3)


def test_k_mismatch(separable_test):
    model = RankModel(KernelSpec(1.0, 1), 0, 2, np.zeros((0, 4)), Thresholds([0.0]), 2)
    with pytest.raises(ValueError):
        evaluate_model(model, separable_test)


def test_timing_ratio_windows():
    times = np.arange(1, 401) * 10
    assert timing_ratio(times, 100, window=1) == pytest.approx(2.0, rel=0.01)


def test_bench_memory_constant(tmp_path):
    labeled = make_ordinal_blobs(5, seed=0)
    pool = make_ordinal_blobs(100, seed=1).features
    cfg = TrainConfig(m=4, t_max=10, batch=2)
    table = bench_scaling(labeled, pool, cfg, [10, 100, 1000], repeats=3)
    assert [r["n_u"] for r in table] == [10, 100, 1000]
    assert len({r["peak_coeff_bytes"] for r in table}) == 1
    assert all(len(r["trial_ns"]) == 3 and r["mean_train_ns"] == int(np.mean(r["trial_ns"])) for r in table)
    write_bench_csv(tmp_path / "b.csv", table)
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "n_u,mean_train_ns,peak_coeff_bytes" and len(lines) == 4


@pytest.mark.slow
def test_trained_separable_model_auc(separable_model, separable_test):
    assert evaluate_model(separable_model, separable_test).overall_auc >= 0.95
