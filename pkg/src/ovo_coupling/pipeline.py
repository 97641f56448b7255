"""End-to-end glue: fit per-pair calibration, then label samples."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .calibration import (
    CalibrationFitData,
    FitOptions,
    calibrate_matrix,
    fit_calibration,
    raw_as_calibrated,
)
from .classifiers import ClassifierSuite, ScoreRecord
from .core import CalibrationParams, PairwiseScoreMatrix, ValidationError, pair_indices, pmap
from .coupling import argmax_label, solve_coupling, threshold_labels, vote_counts


def fit_suite_calibration(suite: ClassifierSuite, ds, opts: FitOptions | None = None,
                          threads: int | None = 1) -> dict[tuple[int, int], CalibrationParams]:
    """Fit one sigmoid per pair on the suite's scores for that pair's samples."""
    if ds.dim != suite.dim:
        raise ValidationError(f"dataset has {ds.dim} features, suite expects {suite.dim}")
    members = [ds.members(k) for k in range(suite.K)]

    def fit(pr):
        i, j = pr
        clf = suite.scorers[pr]
        data = CalibrationFitData.from_groups(clf.score(ds.features[members[i]]),
                                              clf.score(ds.features[members[j]]))
        return fit_calibration(data, opts, pair=pr)

    pairs = pair_indices(suite.K)
    return dict(zip(pairs, pmap(fit, pairs, threads)))


def fit_record_calibration(K: int, records: Sequence[ScoreRecord],
                           opts: FitOptions | None = None) -> dict[tuple[int, int], CalibrationParams]:
    """Fit calibration from externally computed scores with known single labels."""
    labels = []
    for n, rec in enumerate(records):
        if rec.labels is None or len(rec.labels) != 1:
            raise ValidationError(f"record {n}: calibration needs exactly one true label")
        labels.append(next(iter(rec.labels)))
    labels = np.array(labels)
    raw = np.array([rec.matrix.raw for rec in records])
    out = {}
    for (i, j) in pair_indices(K):
        si, sj = raw[labels == i, i, j], raw[labels == j, i, j]
        if si.size == 0 or sj.size == 0:
            raise ValidationError(f"pair ({i}, {j}): no labeled samples for one of the classes")
        out[(i, j)] = fit_calibration(CalibrationFitData.from_groups(si, sj), opts, pair=(i, j))
    return out


@dataclass(frozen=True)
class Prediction:
    id: str
    p: np.ndarray
    label: int
    votes: np.ndarray
    method: str
    labels: frozenset | None = None


def predict_matrix(m: PairwiseScoreMatrix,
                   calib: Mapping[tuple[int, int], CalibrationParams] | None,
                   sample_id: str = "", theta: float | None = None) -> Prediction:
    """Couple one sample; with ``calib=None`` the raw scores serve as probabilities."""
    cm = raw_as_calibrated(m) if calib is None else calibrate_matrix(m, calib)
    sol = solve_coupling(cm)
    labels = None if theta is None else threshold_labels(sol.p, theta)
    return Prediction(sample_id, sol.p.values, argmax_label(sol.p), vote_counts(m),
                      sol.method.value, labels)


def predict_matrices(matrices: Sequence[PairwiseScoreMatrix], calib, ids=None,
                     theta: float | None = None, threads: int | None = 1) -> list[Prediction]:
    ids = [str(n) for n in range(len(matrices))] if ids is None else list(ids)
    return pmap(lambda a: predict_matrix(a[0], calib, a[1], theta),
                list(zip(matrices, ids)), threads)
