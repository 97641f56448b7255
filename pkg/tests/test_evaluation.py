import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ovo_coupling.core import ClassSet, ValidationError
from ovo_coupling.evaluation import (
    BenchmarkConfig,
    ConfusionCounts,
    accuracy,
    class_means,
    confusion_counts,
    evaluate_predictions,
    gen_synthetic,
    metrics,
    per_class_report,
    run_benchmark,
    stratified_split,
    sub_seed,
)


def test_confusion_examples():
    assert confusion_counts([{1}, {1}, {2}], [{1}, {2}, {2}], 1) == ConfusionCounts(1, 1, 0, 1)
    c = confusion_counts([{0}, {2, 1}], [{0}, {2, 1}], 2)
    assert c.fp == 0 and c.fn == 0
    assert confusion_counts([], [], 0) == ConfusionCounts(0, 0, 0, 0)
    assert confusion_counts([1, 0], [1, 1], 1) == ConfusionCounts(1, 0, 1, 0)
    with pytest.raises(ValidationError):
        confusion_counts([{1}], [], 1)


def test_metrics_examples():
    m = metrics(ConfusionCounts(tp=3, fp=1, fn=1, tn=5))
    assert m == {"precision": 0.75, "recall": 0.75, "specificity": 5 / 6, "f1": 0.75}
    assert metrics(ConfusionCounts(tp=0, fp=0, fn=2, tn=3))["precision"] is None
    assert metrics(ConfusionCounts(tp=4, fp=0, fn=0, tn=6)) == {
        "precision": 1.0, "recall": 1.0, "specificity": 1.0, "f1": 1.0}
    assert metrics(ConfusionCounts(tp=0, fp=1, fn=1, tn=0))["f1"] is None


def test_accuracy_examples():
    assert accuracy([0, 1, 2, 2], [0, 1, 2, 0]) == 0.75
    assert accuracy([1, 2], [1, 2]) == 1.0
    assert accuracy([0, 0], [1, 1]) == 0.0
    with pytest.raises(ValidationError):
        accuracy([0], [0, 1])


counts = st.builds(ConfusionCounts, *(st.integers(0, 1000) for _ in range(4)))


@settings(max_examples=1000, deadline=None)
@given(counts)
def test_metric_identities(c):
    m = metrics(c)
    for v in m.values():
        assert v is None or 0.0 <= v <= 1.0
    if m["precision"] is not None and m["recall"] is not None and m["f1"] is not None:
        p, r = m["precision"], m["recall"]
        assert m["f1"] == pytest.approx(2 / (1 / p + 1 / r), rel=1e-12)
    if m["specificity"] is not None:
        assert m["specificity"] + c.fp / (c.fp + c.tn) == pytest.approx(1.0, abs=1e-15)


def test_tp_sum_equals_correct(rng):
    for _ in range(50):
        K = int(rng.integers(2, 6))
        n = int(rng.integers(0, 40))
        pred, truth = rng.integers(0, K, n), rng.integers(0, K, n)
        tp = sum(confusion_counts(list(pred), list(truth), k).tp for k in range(K))
        assert tp == int(np.sum(pred == truth))
        for k in range(K):
            c = confusion_counts(list(pred), list(truth), k)
            assert c.tp + c.fp + c.fn + c.tn == n


def test_per_class_report_keys():
    rep = per_class_report([0, 1], [0, 0], ClassSet(("a", "b")))
    assert set(rep) == {"a", "b"}
    assert rep["b"]["precision"] == 0.0 and rep["b"]["recall"] is None


def test_evaluate_predictions_multilabel():
    rep = evaluate_predictions([{0, 1}, {1}], [{0}, {1}], ClassSet(("a", "b")), single_label=False)
    assert "accuracy" not in rep and rep["per_class"]["b"]["fp"] == 1


def test_gen_synthetic_deterministic():
    a = gen_synthetic(4, 20, 3, 2.5, seed=9)
    b = gen_synthetic(4, 20, 3, 2.5, seed=9)
    assert a.features.tobytes() == b.features.tobytes() and a.labels == b.labels
    assert a.counts.tolist() == [20, 20, 20, 20]


@pytest.mark.parametrize("K, dim", [(3, 2), (4, 5), (5, 2), (3, 1)])
def test_class_means_spacing(K, dim):
    M = class_means(K, dim, 3.0)
    D = np.linalg.norm(M[:, None] - M[None], axis=2)
    if dim >= K - 1:
        np.testing.assert_allclose(D[~np.eye(K, dtype=bool)], 3.0, rtol=1e-12)
    else:
        np.testing.assert_allclose(np.diag(D, 1), 3.0, rtol=1e-12)


@pytest.mark.parametrize("args", [(1, 5, 2, 1.0), (3, 0, 2, 1.0), (3, 5, 0, 1.0), (3, 5, 2, -1.0)])
def test_gen_synthetic_rejects(args):
    with pytest.raises(ValidationError):
        gen_synthetic(*args, seed=0)


def test_stratified_split():
    ds = gen_synthetic(3, 11, 2, 1.0, seed=0)
    tr, te = stratified_split(ds, 0.5, seed=1)
    assert tr.counts.tolist() == [6, 6, 6] and te.counts.tolist() == [5, 5, 5]


def test_sub_seed_named():
    assert sub_seed(1, "data") == sub_seed(1, "data")
    assert sub_seed(1, "data") != sub_seed(1, "split")


def test_no_separation_is_chance():
    cfg = BenchmarkConfig(K=3, per_class=200, separation=0.0, strategies=("proposed",),
                          seeds=range(20))
    mean = run_benchmark(cfg)["strategies"]["proposed"]["mean_accuracy"]
    assert abs(mean - 1 / 3) <= 0.1


def test_wide_separation_is_near_perfect():
    cfg = BenchmarkConfig(K=3, per_class=100, separation=10.0, strategies=("proposed",), seeds=[0])
    assert run_benchmark(cfg)["strategies"]["proposed"]["per_seed_accuracy"][0] >= 0.99


def test_benchmark_single_seed_separable():
    cfg = BenchmarkConfig(per_class=100, separation=8.0, strategies=("proposed",), seeds=[3])
    rep = run_benchmark(cfg)
    assert len(rep["strategies"]["proposed"]["per_seed_accuracy"]) == 1
    assert rep["strategies"]["proposed"]["mean_accuracy"] >= 0.95


def test_benchmark_self_consistent_and_deterministic():
    cfg = BenchmarkConfig(per_class=40, separation=2.0, seeds=range(4),
                          strategies=("proposed", "voting", "ova", "refined"), epochs=50)
    a = run_benchmark(cfg)
    for rec in a["strategies"].values():
        accs = rec["per_seed_accuracy"]
        assert rec["mean_accuracy"] == pytest.approx(np.mean(accs), abs=1e-15)
        assert rec["std_accuracy"] == pytest.approx(np.std(accs, ddof=1), abs=1e-15)
        for m in rec["per_class"].values():
            assert all(v is None or 0 <= v <= 1 for k, v in m.items()
                       if k in ("precision", "recall", "specificity", "f1"))
    b = run_benchmark(BenchmarkConfig(**{**cfg.echo(), "threads": 3}))
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
    assert a["config"]["seeds"] == [0, 1, 2, 3]


def test_benchmark_config_validation():
    with pytest.raises(ValidationError):
        BenchmarkConfig(strategies=("nope",))
    with pytest.raises(ValidationError):
        BenchmarkConfig(seeds=())
