"""Metrics, synthetic data and the strategy-comparison benchmark."""

from __future__ import annotations

import logging
import zlib
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .classifiers import (
    LogisticHyper,
    RefineHyper,
    refine_ova_to_ovo,
    score_batch,
    train_multioutput,
    train_pairwise_suite,
)
from .coupling import vote_label
from .core import ClassSet, LabeledDataset, ValidationError, pmap
from .pipeline import fit_suite_calibration, predict_matrices

logger = logging.getLogger(__name__)

STRATEGIES = ("proposed", "voting", "ova", "refined")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0


def _as_sets(xs):
    return [frozenset([x]) if isinstance(x, (int, np.integer)) else frozenset(x) for x in xs]


def confusion_counts(predicted, truth, k: int) -> ConfusionCounts:
    """One-vs-rest counts for class ``k``; entries are label sets or single labels."""
    if len(predicted) != len(truth):
        raise ValidationError(f"{len(predicted)} predictions but {len(truth)} truths")
    tp = fp = fn = tn = 0
    for ps, ts in zip(_as_sets(predicted), _as_sets(truth)):
        hit, real = k in ps, k in ts
        if hit and real:
            tp += 1
        elif hit:
            fp += 1
        elif real:
            fn += 1
        else:
            tn += 1
    return ConfusionCounts(tp, fp, fn, tn)


def _ratio(a, b):
    return a / b if b else None


def metrics(c: ConfusionCounts) -> dict:
    """Precision, recall, specificity and F1; ``None`` marks a zero denominator."""
    precision = _ratio(c.tp, c.tp + c.fp)
    recall = _ratio(c.tp, c.tp + c.fn)
    specificity = _ratio(c.tn, c.tn + c.fp)
    f1 = None
    if precision is not None and recall is not None:
        f1 = _ratio(2 * precision * recall, precision + recall)
    return {"precision": precision, "recall": recall, "specificity": specificity, "f1": f1}


def accuracy(predicted: Sequence[int], truth: Sequence[int]) -> float:
    if len(predicted) != len(truth):
        raise ValidationError(f"{len(predicted)} predictions but {len(truth)} truths")
    if len(truth) == 0:
        return 0.0
    return float(np.mean(np.asarray(predicted) == np.asarray(truth)))


def per_class_report(predicted, truth, classes: ClassSet) -> dict:
    out = {}
    for k, name in enumerate(classes.labels):
        c = confusion_counts(predicted, truth, k)
        out[name] = {**asdict(c), **metrics(c)}
    return out


def sub_seed(seed: int, name: str) -> int:
    """Deterministic child seed for a named component."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(name.encode())])
    return int(ss.generate_state(1)[0])


def class_means(K: int, dim: int, separation: float) -> np.ndarray:
    """Cluster centres with pairwise distances proportional to ``separation``.

    With ``dim >= K - 1`` the centres form a regular simplex whose edges all
    equal ``separation``. Otherwise they sit on a regular polygon (or a line
    when ``dim == 1``) with neighbouring centres ``separation`` apart.
    """
    M = np.zeros((K, dim))
    if dim >= K - 1:
        C = np.eye(K) - 1.0 / K
        _, _, Vt = np.linalg.svd(C)
        coords = C @ Vt[:K - 1].T
        M[:, :K - 1] = coords * (separation / np.sqrt(2.0))
    elif dim == 1:
        M[:, 0] = separation * (np.arange(K) - (K - 1) / 2)
    else:
        ang = 2 * np.pi * np.arange(K) / K
        radius = separation / (2 * np.sin(np.pi / K))
        M[:, 0] = radius * np.cos(ang)
        M[:, 1] = radius * np.sin(ang)
    return M


def gen_synthetic(K: int, per_class: int, dim: int, separation: float, seed: int) -> LabeledDataset:
    """Unit-covariance Gaussian blobs, ``per_class`` samples each."""
    if K < 2 or per_class < 1 or dim < 1 or not separation >= 0:
        raise ValidationError(
            f"invalid synthetic config K={K} per_class={per_class} dim={dim} separation={separation}")
    rng = np.random.default_rng(seed)
    M = class_means(K, dim, separation)
    X = np.vstack([M[k] + rng.standard_normal((per_class, dim)) for k in range(K)])
    y = np.repeat(np.arange(K), per_class)
    return LabeledDataset.single(X, y, ClassSet(tuple(f"c{k}" for k in range(K))))


def stratified_split(ds: LabeledDataset, train_fraction: float, seed: int):
    """Per-class shuffled split; each class keeps at least one training sample."""
    if not 0 < train_fraction <= 1:
        raise ValidationError(f"train_fraction must be in (0, 1], got {train_fraction}")
    rng = np.random.default_rng(seed)
    y = ds.y()
    train, test = [], []
    for k in range(ds.class_set.K):
        idx = np.flatnonzero(y == k)
        idx = idx[rng.permutation(idx.size)]
        n_tr = max(1, int(round(train_fraction * idx.size))) if idx.size else 0
        train.extend(idx[:n_tr])
        test.extend(idx[n_tr:])
    return ds.subset(np.sort(train)), ds.subset(np.sort(test))


@dataclass(frozen=True)
class BenchmarkConfig:
    K: int = 3
    per_class: int = 300
    dim: int = 2
    separation: float = 2.0
    train_fraction: float = 0.5
    strategies: tuple[str, ...] = ("proposed", "voting", "ova")
    seeds: tuple[int, ...] = tuple(range(20))
    epochs: int = 300
    lr: float = 1.0
    l2: float = 1e-3
    refine_epochs: int = 10
    refine_lr: float = 0.5
    threads: int | None = field(default=1, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "strategies", tuple(self.strategies))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        bad = [s for s in self.strategies if s not in STRATEGIES]
        if bad:
            raise ValidationError(f"unknown strategies {bad}; choose from {list(STRATEGIES)}")
        if not self.strategies:
            raise ValidationError("strategies: need at least one")
        if not self.seeds:
            raise ValidationError("seeds: need at least one")

    def echo(self) -> dict:
        d = asdict(self)
        d.pop("threads")
        d["strategies"] = list(self.strategies)
        d["seeds"] = list(self.seeds)
        return d


def _run_seed(cfg: BenchmarkConfig, seed: int) -> dict:
    ds = gen_synthetic(cfg.K, cfg.per_class, cfg.dim, cfg.separation, sub_seed(seed, "data"))
    train, test = stratified_split(ds, cfg.train_fraction, sub_seed(seed, "split"))
    y_test = test.y()
    hyper = LogisticHyper(cfg.lr, cfg.epochs, cfg.l2, sub_seed(seed, "pairwise"))
    preds = {}

    if {"proposed", "voting"} & set(cfg.strategies):
        suite = train_pairwise_suite(train, hyper)
        mats = score_batch(suite, test.features)
        if "voting" in cfg.strategies:
            preds["voting"] = [vote_label(m) for m in mats]
        if "proposed" in cfg.strategies:
            calib = fit_suite_calibration(suite, train)
            preds["proposed"] = [pr.label for pr in predict_matrices(mats, calib)]

    if {"ova", "refined"} & set(cfg.strategies):
        model = train_multioutput(train, LogisticHyper(cfg.lr, cfg.epochs, cfg.l2,
                                                       sub_seed(seed, "ova")))
        if "ova" in cfg.strategies:
            preds["ova"] = [int(c) for c in model.predict(test.features)]
        if "refined" in cfg.strategies:
            rsuite = refine_ova_to_ovo(model, train, RefineHyper(cfg.refine_lr, cfg.refine_epochs,
                                                                 sub_seed(seed, "refine")))
            calib = fit_suite_calibration(rsuite, train)
            mats = score_batch(rsuite, test.features)
            preds["refined"] = [pr.label for pr in predict_matrices(mats, calib)]

    return {"seed": seed, "n_train": train.n, "n_test": test.n,
            "predictions": {s: preds[s] for s in cfg.strategies},
            "truth": [int(c) for c in y_test]}


def _std(xs):
    return float(np.std(xs, ddof=1)) if len(xs) > 1 else 0.0


def run_benchmark(cfg: BenchmarkConfig) -> dict:
    """Compare labeling strategies over several seeds.

    Returns a JSON-ready report with per-seed accuracies, their mean and
    sample standard deviation, and per-class metrics pooled over seeds.
    """
    runs = pmap(lambda s: _run_seed(cfg, s), cfg.seeds, cfg.threads)
    classes = ClassSet(tuple(f"c{k}" for k in range(cfg.K)))
    strategies = {}
    for name in cfg.strategies:
        per_seed = [accuracy(r["predictions"][name], r["truth"]) for r in runs]
        pooled_pred = [c for r in runs for c in r["predictions"][name]]
        pooled_true = [c for r in runs for c in r["truth"]]
        strategies[name] = {
            "per_seed_accuracy": per_seed,
            "mean_accuracy": float(np.mean(per_seed)),
            "std_accuracy": _std(per_seed),
            "per_class": per_class_report(pooled_pred, pooled_true, classes),
        }
        logger.info("%s: mean accuracy %.4f (std %.4f) over %d seeds", name,
                    strategies[name]["mean_accuracy"], strategies[name]["std_accuracy"],
                    len(per_seed))
    return {
        "kind": "eval_report",
        "config": cfg.echo(),
        "seeds": list(cfg.seeds),
        "runs": [{k: r[k] for k in ("seed", "n_train", "n_test")} for r in runs],
        "strategies": strategies,
    }


def evaluate_predictions(pred_labels, truth_labels, classes: ClassSet, single_label: bool) -> dict:
    """Report for already computed predictions against ground truth."""
    report = {"kind": "eval_report", "n": len(truth_labels),
              "per_class": per_class_report(pred_labels, truth_labels, classes)}
    if single_label:
        p = [next(iter(s)) if len(s) == 1 else -1 for s in _as_sets(pred_labels)]
        t = [next(iter(s)) for s in _as_sets(truth_labels)]
        report["accuracy"] = accuracy(p, t)
    return report
