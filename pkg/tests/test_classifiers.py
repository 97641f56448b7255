import json

import numpy as np
import pytest

import ovo_coupling.classifiers as clf_mod
from ovo_coupling.classifiers import (
    BinaryLinearClassifier,
    ClassifierSuite,
    LogisticHyper,
    Provenance,
    RefineHyper,
    binary_loss,
    binary_loss_grad,
    load_external_scores,
    refine_ova_to_ovo,
    score_batch,
    score_sample,
    train_binary_logistic,
    train_multioutput,
    train_pairwise_suite,
)
from ovo_coupling.core import (
    ClassSet,
    LabeledDataset,
    MissingClassError,
    ShapeError,
    ValidationError,
    validate_scores,
)
from ovo_coupling.evaluation import accuracy, gen_synthetic, stratified_split
from ovo_coupling.pipeline import fit_suite_calibration, predict_matrices

from oracles import central_diff


def test_binary_separable_1d():
    rng = np.random.default_rng(0)
    xi = rng.uniform(1, 3, (50, 1))
    xj = rng.uniform(-3, -1, (50, 1))
    clf = train_binary_logistic(xi, xj)
    acc = (np.sum(clf.score(xi) > 0.5) + np.sum(clf.score(xj) < 0.5)) / 100
    assert acc == 1.0


def test_binary_identical_sample():
    x = np.array([[0.7, -1.2]])
    clf = train_binary_logistic(x, x)
    assert clf.score(x)[0] == pytest.approx(0.5, abs=0.05)


def test_binary_deterministic():
    rng = np.random.default_rng(1)
    xi, xj = rng.normal(1, 1, (20, 3)), rng.normal(-1, 1, (30, 3))
    a = train_binary_logistic(xi, xj, LogisticHyper(seed=5))
    b = train_binary_logistic(xi, xj, LogisticHyper(seed=5))
    assert a.weights.tobytes() == b.weights.tobytes() and a.bias == b.bias


def test_binary_shape_error():
    with pytest.raises(ShapeError):
        train_binary_logistic(np.zeros((3, 2)), np.zeros((3, 4)))


def test_binary_loss_trace_monotone():
    rng = np.random.default_rng(2)
    xi, xj = rng.normal(0.3, 1, (40, 2)), rng.normal(-0.3, 1, (40, 2)) * 5
    clf = train_binary_logistic(xi, xj, LogisticHyper(lr=50.0, epochs=100))
    assert np.all(np.diff(clf.loss_trace) <= 0)


def test_binary_loss_gradient(rng):
    for _ in range(50):
        n, d = int(rng.integers(2, 20)), int(rng.integers(1, 5))
        X = rng.normal(size=(n, d))
        y = (rng.random(n) < 0.5).astype(float)
        w, b, l2 = rng.normal(size=d), rng.normal(), rng.uniform(0, 0.1)
        gw, gb = binary_loss_grad(w, b, X, y, l2)
        fd = central_diff(lambda v: binary_loss(v[:d], v[d], X, y, l2), np.append(w, b))
        g = np.append(gw, gb)
        assert np.all(np.abs(g - fd) <= 1e-5 * np.maximum(1.0, np.abs(g)))


def test_pairwise_suite_pairs(blobs):
    suite = train_pairwise_suite(blobs)
    assert sorted(suite.scorers) == [(0, 1), (0, 2), (1, 2)]
    assert suite.provenance is Provenance.PAIRWISE_SCRATCH
    assert suite.pair_counts[(0, 2)] == (100, 100)


def test_pairwise_suite_training_accuracy(blobs):
    suite = train_pairwise_suite(blobs)
    for (i, j), clf in suite.scorers.items():
        si = clf.score(blobs.features[blobs.members(i)])
        sj = clf.score(blobs.features[blobs.members(j)])
        acc = (np.sum(si > 0.5) + np.sum(sj < 0.5)) / (si.size + sj.size)
        assert acc >= 0.95


def test_pairwise_suite_only_sees_its_pair(blobs, monkeypatch):
    seen = {}
    real = clf_mod.train_binary_logistic

    def spy(X_i, X_j, hyper=None, pair=(0, 1)):
        seen[pair] = (np.array(X_i), np.array(X_j))
        return real(X_i, X_j, hyper, pair)

    monkeypatch.setattr(clf_mod, "train_binary_logistic", spy)
    train_pairwise_suite(blobs)
    rows = {tuple(x): next(iter(s)) for x, s in zip(blobs.features, blobs.labels)}
    for (i, j), (X_i, X_j) in seen.items():
        assert {rows[tuple(x)] for x in X_i} == {i}
        assert {rows[tuple(x)] for x in X_j} == {j}


def test_pairwise_suite_k2_reduces_to_binary():
    ds = gen_synthetic(2, 30, 3, 2.0, seed=3)
    hyper = LogisticHyper(seed=11)
    suite = train_pairwise_suite(ds, hyper)
    ref = train_binary_logistic(ds.features[ds.members(0)], ds.features[ds.members(1)], hyper)
    np.testing.assert_array_equal(suite.scorers[(0, 1)].weights, ref.weights)
    assert suite.scorers[(0, 1)].bias == ref.bias


def test_pairwise_suite_threads_deterministic(blobs):
    a = train_pairwise_suite(blobs, threads=1)
    b = train_pairwise_suite(blobs, threads=4)
    for pr in a.scorers:
        assert a.scorers[pr].weights.tobytes() == b.scorers[pr].weights.tobytes()


def test_missing_class():
    ds = LabeledDataset.single(np.zeros((3, 2)), [0, 0, 0], ClassSet.of_size(2))
    with pytest.raises(MissingClassError):
        train_pairwise_suite(ds)
    with pytest.raises(MissingClassError):
        train_multioutput(ds)
    with pytest.raises(MissingClassError):
        ClassSet(("only",))


def test_multioutput_accuracy_and_determinism(blobs):
    m1 = train_multioutput(blobs)
    assert accuracy(m1.predict(blobs.features), blobs.y()) >= 0.95
    m2 = train_multioutput(blobs)
    assert m1.W.tobytes() == m2.W.tobytes() and m1.b.tobytes() == m2.b.tobytes()
    out = m1.outputs(blobs.features)
    assert np.all((out > 0) & (out < 1))


def test_refine_zero_epochs_is_identity(blobs):
    model = train_multioutput(blobs)
    suite = refine_ova_to_ovo(model, blobs, RefineHyper(epochs=0))
    assert suite.provenance is Provenance.OVA_REFINED
    out = model.outputs(blobs.features)
    for (i, j), clf in suite.scorers.items():
        np.testing.assert_array_equal(clf.score(blobs.features), out[:, i])


def test_refine_deterministic(blobs):
    model = train_multioutput(blobs)
    a = refine_ova_to_ovo(model, blobs)
    b = refine_ova_to_ovo(model, blobs, threads=3)
    for pr in a.scorers:
        assert a.scorers[pr].weights.tobytes() == b.scorers[pr].weights.tobytes()


def test_refine_pushes_class_j_down(blobs):
    model = train_multioutput(blobs)
    suite = refine_ova_to_ovo(model, blobs)
    base = model.outputs(blobs.features)
    for (i, j), clf in suite.scorers.items():
        xj = blobs.features[blobs.members(j)]
        assert clf.score(xj).mean() <= base[blobs.members(j), i].mean()


def test_refine_shape_error(blobs):
    model = train_multioutput(gen_synthetic(3, 10, 4, 3.0, seed=1))
    with pytest.raises(ShapeError):
        refine_ova_to_ovo(model, blobs)


def test_refined_coupling_not_worse_than_ova():
    ds = gen_synthetic(3, 100, 2, 8.0, seed=7)
    train, test = stratified_split(ds, 0.5, seed=8)
    model = train_multioutput(train)
    suite = refine_ova_to_ovo(model, train)
    calib = fit_suite_calibration(suite, train)
    coupled = [pr.label for pr in predict_matrices(score_batch(suite, test.features), calib)]
    assert accuracy(coupled, test.y()) >= accuracy(model.predict(test.features), test.y()) - 0.02


def test_score_sample_examples(blobs):
    suite = train_pairwise_suite(blobs)
    x = blobs.features[0]
    m = score_sample(suite, x)
    assert m.raw[0, 1] == pytest.approx(suite.scorers[(0, 1)].score(x))
    assert m.raw[1, 0] == pytest.approx(1 - m.raw[0, 1])
    centroid = blobs.features[blobs.members(0)].mean(axis=0)
    mc = score_sample(suite, centroid)
    assert mc.raw[0, 1] > 0.5 and mc.raw[0, 2] > 0.5
    with pytest.raises(ShapeError):
        score_sample(suite, np.zeros(5))


def test_score_sample_constant_scorers():
    flat = {pr: BinaryLinearClassifier(np.zeros(2), 0.0, pr) for pr in [(0, 1), (0, 2), (1, 2)]}
    suite = ClassifierSuite(ClassSet.of_size(3), flat, Provenance.PAIRWISE_SCRATCH, {})
    m = score_sample(suite, np.array([3.0, -4.0]))
    assert np.all(m.raw[~np.eye(3, dtype=bool)] == 0.5)


def test_suite_requires_all_pairs():
    with pytest.raises(ValidationError):
        ClassifierSuite(ClassSet.of_size(3), {(0, 1): BinaryLinearClassifier([0.0], 0.0)},
                        Provenance.PAIRWISE_SCRATCH, {})


def test_scores_always_valid(blobs, rng):
    suite = train_pairwise_suite(blobs)
    X = rng.normal(0, 20, (1000, 2))
    for m in score_batch(suite, X):
        assert validate_scores(m)


# -- external score files -------------------------------------------------------------

def _write(tmp_path, doc):
    path = tmp_path / "scores.json"
    path.write_text(json.dumps(doc))
    return path


def test_external_two_records(tmp_path):
    doc = {"classes": ["a", "b", "c"], "samples": [
        {"id": "x1", "scores": {"0,1": 0.9, "0,2": 0.7, "1,2": 0.4}, "label": "a"},
        {"id": "x2", "scores": {"0,1": 0.2, "0,2": 0.1, "1,2": 0.3}, "label": ["b", "c"]},
    ]}
    classes, recs = load_external_scores(_write(tmp_path, doc))
    assert classes.labels == ("a", "b", "c") and len(recs) == 2
    assert recs[0].matrix.raw[2, 1] == pytest.approx(0.6)
    assert recs[1].labels == {1, 2}
    assert all(validate_scores(r.matrix) for r in recs)


def test_external_repairs_small_complement_gap(tmp_path):
    doc = {"classes": ["a", "b"], "samples": [
        {"id": "x", "scores": {"0,1": 0.6000004, "1,0": 0.4}}]}
    _, recs = load_external_scores(_write(tmp_path, doc))
    assert recs[0].matrix.raw[0, 1] == pytest.approx(0.6000002, abs=1e-12)
    assert recs[0].matrix.raw[0, 1] + recs[0].matrix.raw[1, 0] == pytest.approx(1.0, abs=1e-15)


def test_external_rejects_large_gap(tmp_path):
    doc = {"classes": ["a", "b"], "samples": [
        {"id": "ok", "scores": {"0,1": 0.5}},
        {"id": "bad", "scores": {"0,1": 0.9, "1,0": 0.6}}]}
    with pytest.raises(ValidationError, match="record 1"):
        load_external_scores(_write(tmp_path, doc))


@pytest.mark.parametrize("doc, msg", [
    ({"classes": ["a", "b"], "samples": [{"id": "x", "scores": {}}]}, "missing score"),
    ({"classes": ["a", "b"], "samples": [{"id": "x", "scores": {"0,1": 1.5}}]}, "outside"),
    ({"classes": ["a", "b"], "samples": [{"id": "x", "scores": {"0,1": 0.5}, "label": "z"}]}, "unknown"),
    ({"samples": []}, "classes"),
])
def test_external_validation_errors(tmp_path, doc, msg):
    with pytest.raises(ValidationError, match=msg):
        load_external_scores(_write(tmp_path, doc))


def test_external_parse_error(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ValidationError, match="not valid JSON"):
        load_external_scores(path)
