"""Pairwise score producers.

Three routes lead to a ``ClassifierSuite``: one logistic classifier trained
per unordered class pair, a one-vs-all multi-output model refined into
per-class copies, or scores computed elsewhere and read from a JSON file.
Every scorer is linear-logistic, so suites serialize as weight/bias pairs.
"""

from __future__ import annotations

import enum
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .core import (
    ClassSet,
    MissingClassError,
    PairwiseScoreMatrix,
    ShapeError,
    ValidationError,
    complete_from_upper,
    pair_indices,
    pmap,
)

logger = logging.getLogger(__name__)

MAX_HALVINGS = 60
EXTERNAL_TOL = 1e-6


class Provenance(str, enum.Enum):
    PAIRWISE_SCRATCH = "pairwise_scratch"
    OVA_REFINED = "ova_refined"
    EXTERNAL = "external"


@dataclass(frozen=True)
class LogisticHyper:
    lr: float = 1.0
    epochs: int = 300
    l2: float = 1e-3
    seed: int = 0


@dataclass(frozen=True)
class RefineHyper:
    lr: float = 0.5
    epochs: int = 10
    seed: int = 0


def logistic(z):
    return np.exp(-np.logaddexp(0.0, -z))


def _bce(z, y):
    # elementwise cross-entropy on logits, overflow-safe
    return np.logaddexp(0.0, z) - y * z


@dataclass(frozen=True)
class BinaryLinearClassifier:
    weights: np.ndarray
    bias: float
    pair: tuple[int, int] = (0, 1)
    loss_trace: tuple[float, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).ravel()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))

    def score(self, X):
        """Probability of the first class of the pair; near 1 means class ``i``."""
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.weights.size:
            raise ShapeError(f"expected {self.weights.size} features, got {X.shape[-1]}")
        return logistic(X @ self.weights + self.bias)


def binary_loss(w, b, X, y, l2):
    """Mean cross-entropy plus ``(l2/2) ||w||^2``; the bias is not penalized."""
    return float(np.mean(_bce(X @ w + b, y)) + 0.5 * l2 * np.dot(w, w))


def binary_loss_grad(w, b, X, y, l2):
    d = logistic(X @ w + b) - y
    n = X.shape[0]
    return X.T @ d / n + l2 * w, float(d.sum() / n)


def _descend(loss, grad, params, lr, epochs):
    """Full-batch gradient descent; the step is halved until the loss does not go up."""
    f = loss(params)
    trace = [f]
    for _ in range(epochs):
        g = grad(params)
        for _ in range(MAX_HALVINGS):
            cand = [p - lr * gp for p, gp in zip(params, g)]
            fc = loss(cand)
            if fc <= f:
                break
            lr *= 0.5
        else:
            break
        params, f = cand, fc
        trace.append(f)
    return params, trace


def _check_dims(*arrays):
    dims = {a.shape[1] for a in arrays}
    if len(dims) != 1:
        raise ShapeError(f"feature dimension mismatch: {sorted(dims)}")
    return dims.pop()


def train_binary_logistic(X_i, X_j, hyper: LogisticHyper | None = None,
                          pair: tuple[int, int] = (0, 1)) -> BinaryLinearClassifier:
    """Fit a logistic classifier with target 1 on ``X_i`` and 0 on ``X_j``."""
    hyper = hyper or LogisticHyper()
    X_i = np.atleast_2d(np.asarray(X_i, dtype=float))
    X_j = np.atleast_2d(np.asarray(X_j, dtype=float))
    if X_i.shape[0] == 0 or X_j.shape[0] == 0:
        raise MissingClassError(f"pair {pair}: both classes need samples")
    d = _check_dims(X_i, X_j)
    X = np.vstack([X_i, X_j])
    y = np.concatenate([np.ones(X_i.shape[0]), np.zeros(X_j.shape[0])])
    rng = np.random.default_rng(hyper.seed)
    w0 = rng.normal(0.0, 0.01, d)
    (w, b), trace = _descend(
        lambda p: binary_loss(p[0], p[1], X, y, hyper.l2),
        lambda p: binary_loss_grad(p[0], p[1], X, y, hyper.l2),
        [w0, 0.0], hyper.lr, hyper.epochs)
    return BinaryLinearClassifier(w, b, pair, tuple(trace))


@dataclass(frozen=True)
class MultiOutputModel:
    """K logistic output nodes sharing one input; node k scores class k against the rest."""

    W: np.ndarray
    b: np.ndarray
    loss_trace: tuple[float, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        W = np.array(self.W, dtype=float)
        b = np.array(self.b, dtype=float).ravel()
        if W.ndim != 2 or b.size != W.shape[0]:
            raise ShapeError(f"weights {W.shape} and bias {b.shape} disagree")
        W.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    @property
    def K(self) -> int:
        return self.W.shape[0]

    def outputs(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.W.shape[1]:
            raise ShapeError(f"expected {self.W.shape[1]} features, got {X.shape[1]}")
        # Node by node so each column matches a standalone linear scorer bit for bit.
        return np.stack([logistic(X @ w + c) for w, c in zip(self.W, self.b)], axis=1)

    def predict(self, X):
        return np.argmax(self.outputs(X), axis=1)


def _multi_loss(W, b, X, Y, mask, l2):
    n = X.shape[0]
    return float(np.sum(mask * _bce(X @ W.T + b, Y)) / n + 0.5 * l2 * np.sum(W * W))


def _multi_grad(W, b, X, Y, mask, l2):
    n = X.shape[0]
    D = mask * (logistic(X @ W.T + b) - Y)
    return D.T @ X / n + l2 * W, D.sum(axis=0) / n


def _require_all_classes(ds):
    counts = ds.counts
    missing = [ds.class_set.labels[k] for k in np.flatnonzero(counts == 0)]
    if missing:
        raise MissingClassError(f"classes without samples: {missing}")


def train_multioutput(ds, hyper: LogisticHyper | None = None) -> MultiOutputModel:
    """One-vs-all training: node k sees every class-k sample as positive, the rest negative."""
    hyper = hyper or LogisticHyper()
    _require_all_classes(ds)
    X = ds.features
    K = ds.class_set.K
    Y = np.zeros((ds.n, K))
    for n, s in enumerate(ds.labels):
        Y[n, list(s)] = 1.0
    mask = np.ones_like(Y)
    rng = np.random.default_rng(hyper.seed)
    W0 = rng.normal(0.0, 0.01, (K, ds.dim))
    (W, b), trace = _descend(
        lambda p: _multi_loss(p[0], p[1], X, Y, mask, hyper.l2),
        lambda p: _multi_grad(p[0], p[1], X, Y, mask, hyper.l2),
        [W0, np.zeros(K)], hyper.lr, hyper.epochs)
    return MultiOutputModel(W, b, tuple(trace))


@dataclass(frozen=True)
class ClassifierSuite:
    """One scorer per unordered pair ``(i, j)``, ``i < j``, plus the per-pair
    sample counts that become the calibration targets' ``N_i`` and ``N_j``."""

    classes: ClassSet
    scorers: dict
    provenance: Provenance
    pair_counts: dict

    def __post_init__(self):
        expected = set(pair_indices(self.classes.K))
        if set(self.scorers) != expected:
            raise ValidationError(
                f"suite needs exactly {len(expected)} pair scorers, got {len(self.scorers)}")

    @property
    def K(self) -> int:
        return self.classes.K

    @property
    def dim(self) -> int:
        return next(iter(self.scorers.values())).weights.size

    def pair_scores(self, X) -> np.ndarray:
        """Raw upper-triangular scores for a batch: shape ``(n, K, K)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.zeros((X.shape[0], self.K, self.K))
        for (i, j), clf in self.scorers.items():
            out[:, i, j] = clf.score(X)
        return out


def train_pairwise_suite(ds, hyper: LogisticHyper | None = None,
                         threads: int | None = 1) -> ClassifierSuite:
    """Train one classifier per class pair on just that pair's samples."""
    hyper = hyper or LogisticHyper()
    _require_all_classes(ds)
    K = ds.class_set.K
    members = [ds.members(k) for k in range(K)]

    def fit(pr):
        i, j = pr
        logger.debug("training pair (%d, %d): %d vs %d samples", i, j,
                     members[i].size, members[j].size)
        return train_binary_logistic(ds.features[members[i]], ds.features[members[j]],
                                     hyper, pair=pr)

    pairs = pair_indices(K)
    clfs = pmap(fit, pairs, threads)
    counts = {pr: (int(members[pr[0]].size), int(members[pr[1]].size)) for pr in pairs}
    return ClassifierSuite(ds.class_set, dict(zip(pairs, clfs)),
                           Provenance.PAIRWISE_SCRATCH, counts)


def refine_ova_to_ovo(model: MultiOutputModel, ds, hyper: RefineHyper | None = None,
                      threads: int | None = 1) -> ClassifierSuite:
    """Turn a one-vs-all model into pair scorers.

    For each class ``j`` the base model is copied and fine-tuned on the
    class-j samples alone, pushing every node ``i != j`` toward 0 while node
    ``j`` is masked out. The scorer for pair ``(i, j)`` is node ``i`` of the
    class-j copy. With zero epochs the scorers reproduce the base nodes.
    """
    hyper = hyper or RefineHyper()
    _require_all_classes(ds)
    K = ds.class_set.K
    if model.K != K or model.W.shape[1] != ds.dim:
        raise ShapeError(f"model is {model.K}x{model.W.shape[1]}, data has K={K}, d={ds.dim}")
    members = [ds.members(k) for k in range(K)]

    def refine(j):
        Xj = ds.features[members[j]]
        Y = np.zeros((Xj.shape[0], K))
        mask = np.ones_like(Y)
        mask[:, j] = 0.0
        (W, b), _ = _descend(
            lambda p: _multi_loss(p[0], p[1], Xj, Y, mask, 0.0),
            lambda p: _multi_grad(p[0], p[1], Xj, Y, mask, 0.0),
            [np.array(model.W), np.array(model.b)], hyper.lr, hyper.epochs)
        return W, b

    refined = pmap(refine, range(K), threads)
    scorers = {}
    for (i, j) in pair_indices(K):
        W, b = refined[j]
        scorers[(i, j)] = BinaryLinearClassifier(W[i], b[i], (i, j))
    counts = {pr: (int(members[pr[0]].size), int(members[pr[1]].size))
              for pr in pair_indices(K)}
    return ClassifierSuite(ds.class_set, scorers, Provenance.OVA_REFINED, counts)


def score_sample(suite: ClassifierSuite, x) -> PairwiseScoreMatrix:
    """Raw pairwise score matrix for a single feature vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ShapeError(f"expected one feature vector, got shape {x.shape}")
    upper = suite.pair_scores(x[None, :])[0]
    return PairwiseScoreMatrix(suite.classes, complete_from_upper(upper))


def score_batch(suite: ClassifierSuite, X) -> list[PairwiseScoreMatrix]:
    return [PairwiseScoreMatrix(suite.classes, complete_from_upper(u))
            for u in suite.pair_scores(X)]


@dataclass(frozen=True)
class ScoreRecord:
    id: str
    matrix: PairwiseScoreMatrix
    labels: frozenset | None = None


def _parse_pair(key: str, K: int) -> tuple[int, int]:
    try:
        a, b = (int(t) for t in key.split(","))
    except ValueError:
        raise ValidationError(f"bad pair key {key!r}; expected 'i,j'") from None
    if not (0 <= a < K and 0 <= b < K) or a == b:
        raise ValidationError(f"pair key {key!r} out of range for K={K}")
    return a, b


def parse_external_scores(doc) -> tuple[ClassSet, list[ScoreRecord]]:
    """Validate an already-decoded external score document."""
    if not isinstance(doc, dict) or "classes" not in doc or "samples" not in doc:
        raise ValidationError("score file must be an object with 'classes' and 'samples'")
    classes = ClassSet(tuple(doc["classes"]))
    K = classes.K
    records = []
    for idx, rec in enumerate(doc["samples"]):
        where = f"record {idx}"
        if not isinstance(rec, dict) or "scores" not in rec:
            raise ValidationError(f"{where}: missing 'scores'")
        given = {}
        for key, val in rec["scores"].items():
            try:
                v = float(val)
            except (TypeError, ValueError):
                raise ValidationError(f"{where}: score {key!r} is not a number") from None
            if not (np.isfinite(v) and 0.0 <= v <= 1.0):
                raise ValidationError(f"{where}: score {key!r}={v!r} outside [0, 1]")
            given[_parse_pair(key, K)] = v
        upper = np.zeros((K, K))
        for (i, j) in pair_indices(K):
            fwd, bwd = given.get((i, j)), given.get((j, i))
            if fwd is None and bwd is None:
                raise ValidationError(f"{where}: missing score for pair '{i},{j}'")
            if fwd is None:
                fwd = 1.0 - bwd
            elif bwd is not None:
                gap = fwd + bwd - 1.0
                if abs(gap) > EXTERNAL_TOL:
                    raise ValidationError(
                        f"{where}: complement violated for pair '{i},{j}' "
                        f"(s_ij + s_ji = {fwd + bwd!r})")
                fwd = 0.5 * (fwd + 1.0 - bwd)
            upper[i, j] = fwd
        labels = None
        if rec.get("label") is not None:
            lab = rec["label"]
            names = [lab] if isinstance(lab, str) else list(lab)
            try:
                labels = frozenset(classes.index(nm) for nm in names)
            except ValidationError as exc:
                raise ValidationError(f"{where}: {exc}") from None
        sid = str(rec.get("id", idx))
        records.append(ScoreRecord(sid, PairwiseScoreMatrix(classes, complete_from_upper(upper)),
                                   labels))
    return classes, records


def load_external_scores(path) -> tuple[ClassSet, list[ScoreRecord]]:
    """Read an external score file: ``{"classes": [...], "samples": [{"id", "scores", "label"}]}``.

    Scores are keyed ``"i,j"``. A record may also carry the reverse key
    ``"j,i"``; the two are averaged into one complement-consistent value
    when they agree within 1e-6 and rejected otherwise.
    """
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from None
    return parse_external_scores(doc)
