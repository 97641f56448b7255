"""Sigmoid calibration of pairwise scores.

A raw score ``s`` for the pair ``(i, j)`` is mapped to
``r = 1 / (1 + exp(eta * s + tau))``. The two parameters are fitted by
minimizing the cross-entropy against smoothed targets
``(N_i + 1) / (N_i + 2)`` for class-i samples and ``1 / (N_j + 2)`` for
class-j samples.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .core import (
    CalibrationParams,
    DegenerateFitError,
    EmptyDataError,
    InvalidParamsError,
    MissingCalibrationError,
    PairwiseScoreMatrix,
    ValidationError,
    pair_indices,
)

logger = logging.getLogger(__name__)

# Keeps r and 1 - r strictly inside (0, 1) in float64.
R_EPS = 2.0 ** -53
RIDGE = 1e-12
MAX_HALVINGS = 20
NOISE_ULPS = 16


@dataclass(frozen=True)
class FitOptions:
    tol: float = 1e-10
    max_iter: int = 100


@dataclass(frozen=True)
class CalibrationFitData:
    """Scores of one pair's classifier on the samples of its two classes."""

    scores: np.ndarray
    from_class_i: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=float).ravel()
        f = np.asarray(self.from_class_i, dtype=bool).ravel()
        if s.shape != f.shape:
            raise ValidationError(f"{s.size} scores but {f.size} class flags")
        if not np.all(np.isfinite(s)):
            raise ValidationError("calibration scores must be finite")
        s.setflags(write=False)
        f.setflags(write=False)
        object.__setattr__(self, "scores", s)
        object.__setattr__(self, "from_class_i", f)

    @classmethod
    def from_groups(cls, scores_i, scores_j) -> "CalibrationFitData":
        si = np.asarray(scores_i, dtype=float).ravel()
        sj = np.asarray(scores_j, dtype=float).ravel()
        flags = np.concatenate([np.ones(si.size, bool), np.zeros(sj.size, bool)])
        return cls(np.concatenate([si, sj]), flags)

    @property
    def N_i(self) -> int:
        return int(self.from_class_i.sum())

    @property
    def N_j(self) -> int:
        return int(self.from_class_i.size - self.from_class_i.sum())

    def targets(self) -> np.ndarray:
        t_pos, t_neg = platt_targets(self.N_i, self.N_j)
        return np.where(self.from_class_i, t_pos, t_neg)


def platt_targets(N_i: int, N_j: int) -> tuple[float, float]:
    """Smoothed targets for class-i and class-j samples."""
    if N_i < 0 or N_j < 0:
        raise ValidationError(f"class counts must be nonnegative, got ({N_i}, {N_j})")
    return (N_i + 1) / (N_i + 2), 1.0 / (N_j + 2)


def _softplus(z):
    return np.logaddexp(0.0, z)


def _sigmoid_neg(z):
    """``1 / (1 + exp(z))`` without overflow."""
    return np.exp(-_softplus(z))


def apply_calibration(params: CalibrationParams, score):
    """Calibrated probability for one score or an array of scores."""
    eta, tau = float(params.eta), float(params.tau)
    if not (math.isfinite(eta) and math.isfinite(tau)):
        raise InvalidParamsError(f"non-finite calibration params ({eta}, {tau})")
    z = eta * np.asarray(score, dtype=float) + tau
    r = np.clip(_sigmoid_neg(z), R_EPS, 1.0 - R_EPS)
    return float(r) if r.ndim == 0 else r


def _nll_at(eta: float, tau: float, s: np.ndarray, t: np.ndarray) -> float:
    # -log r = softplus(z), -log(1 - r) = softplus(-z)
    z = eta * s + tau
    return float(np.sum(t * _softplus(z) + (1.0 - t) * _softplus(-z)))


def nll(params: CalibrationParams, data: CalibrationFitData) -> float:
    """Negative log-likelihood of the calibration parameters on ``data``."""
    if data.scores.size == 0:
        raise EmptyDataError("calibration data is empty")
    return max(_nll_at(params.eta, params.tau, data.scores, data.targets()), 0.0)


def nll_gradient(eta: float, tau: float, data: CalibrationFitData) -> np.ndarray:
    """Gradient of the NLL with respect to ``(eta, tau)``."""
    s, t = data.scores, data.targets()
    d = t - _sigmoid_neg(eta * s + tau)
    return np.array([np.dot(d, s), d.sum()])


def _grad_hess(eta, tau, s, t):
    r = _sigmoid_neg(eta * s + tau)
    d = t - r
    w = r * (1.0 - r)
    g = np.array([np.dot(d, s), d.sum()])
    H = np.array([[np.dot(w, s * s), np.dot(w, s)],
                  [np.dot(w, s), w.sum()]])
    return g, H


def fit_calibration(data: CalibrationFitData, opts: FitOptions | None = None,
                    pair: tuple[int, int] = (0, 1)) -> CalibrationParams:
    """Fit ``(eta, tau)`` by damped Newton with backtracking.

    Backtracking halves the step until the objective does not increase.
    Once the expected decrease falls below the rounding error of the
    objective, a full Newton step is still taken if it shrinks the gradient.
    Hitting ``max_iter`` returns the current iterate with ``converged=False``.
    """
    opts = opts or FitOptions()
    N_i, N_j = data.N_i, data.N_j
    if N_i < 1 or N_j < 1:
        raise ValidationError(f"need samples from both classes, got N_i={N_i}, N_j={N_j}")
    s, t = data.scores, data.targets()
    if np.ptp(s) == 0:
        # eta * s + tau only depends on eta * s0 + tau: one flat direction
        raise DegenerateFitError(
            f"pair {pair}: all {s.size} calibration scores equal {s[0]!r}; eta is unidentifiable")

    x = np.array([0.0, math.log((N_j + 1) / (N_i + 1))])
    f = _nll_at(x[0], x[1], s, t)
    trace = [f]
    converged = False
    it = 0
    while True:
        g, H = _grad_hess(x[0], x[1], s, t)
        if np.max(np.abs(g)) < opts.tol:
            converged = True
            break
        if it >= opts.max_iter:
            break
        it += 1
        H[0, 0] += RIDGE
        H[1, 1] += RIDGE
        det = H[0, 0] * H[1, 1] - H[0, 1] * H[1, 0]
        if det > 0:
            step = np.array([H[1, 1] * g[0] - H[0, 1] * g[1],
                             H[0, 0] * g[1] - H[1, 0] * g[0]]) / det
        else:
            step = g
        lam = 1.0
        accepted = False
        for _ in range(MAX_HALVINGS + 1):
            cand = x - lam * step
            if np.array_equal(cand, x):
                break
            fc = _nll_at(cand[0], cand[1], s, t)
            if fc <= f:
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            # Near the optimum the predicted decrease drops below the rounding
            # error of F; take the full Newton step if it shrinks the gradient.
            cand = x - step
            fc = _nll_at(cand[0], cand[1], s, t)
            g_c, _ = _grad_hess(cand[0], cand[1], s, t)
            if not (fc - f <= NOISE_ULPS * np.spacing(f) * np.sqrt(s.size)
                    and np.max(np.abs(g_c)) < np.max(np.abs(g))):
                break
        x, f = cand, fc
        trace.append(f)

    if not converged:
        logger.warning("calibration for pair %s stopped after %d iterations without converging "
                       "(|grad|=%.3g)", pair, it, float(np.max(np.abs(g))))
    if x[0] >= 0:
        logger.warning("calibration for pair %s has eta=%.6g >= 0; calibrated probability does "
                       "not increase with the score", pair, x[0])
    return CalibrationParams(eta=float(x[0]), tau=float(x[1]), pair=pair, iterations=it,
                             converged=converged, final_nll=max(f, 0.0),
                             nll_trace=tuple(trace))


def calibrate_matrix(m: PairwiseScoreMatrix,
                     params: Mapping[tuple[int, int], CalibrationParams]) -> PairwiseScoreMatrix:
    """Attach calibrated entries: ``r_ij`` from the pair's sigmoid for i < j, complement below."""
    K = m.K
    cal = np.zeros((K, K))
    for (i, j) in pair_indices(K):
        p = params.get((i, j))
        if p is None:
            raise MissingCalibrationError(f"no calibration parameters for pair ({i}, {j})")
        r = apply_calibration(p, m.raw[i, j])
        cal[i, j] = r
        cal[j, i] = 1.0 - r
    return m.with_calibrated(cal)


def identity_params(K: int) -> dict[tuple[int, int], CalibrationParams]:
    """Parameters that map every score to 0.5."""
    return {pr: CalibrationParams(0.0, 0.0, pr) for pr in pair_indices(K)}


def raw_as_calibrated(m: PairwiseScoreMatrix) -> PairwiseScoreMatrix:
    """Use raw scores directly as calibrated probabilities, nudged inside (0, 1)."""
    K = m.K
    cal = np.zeros((K, K))
    for (i, j) in pair_indices(K):
        r = min(max(float(m.raw[i, j]), R_EPS), 1.0 - R_EPS)
        cal[i, j] = r
        cal[j, i] = 1.0 - r
    return m.with_calibrated(cal)
