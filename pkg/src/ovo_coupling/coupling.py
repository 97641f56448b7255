"""Combine calibrated pairwise probabilities into one class-probability vector.

The production path minimizes ``(1/2) sum_{i<j} (r_ij p_j - r_ji p_i)^2`` over
the simplex by solving the bordered system ``[[Q, e], [e^T, 0]] [p; b] = [0; 1]``.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass

import numpy as np

from .core import (
    DegenerateCouplingError,
    InvalidThresholdError,
    MissingCalibrationError,
    CouplingWeights,
    PairwiseScoreMatrix,
    ProbabilityVector,
    ValidationError,
    mu_matrix,
    validate_scores,
)
from .linalg import SingularMatrixError, gauss_solve, project_simplex

logger = logging.getLogger(__name__)

NEG_TOL = 1e-9
RIDGE = 1e-12


class Method(str, enum.Enum):
    KKT = "kkt"
    PROJECTED_GRADIENT = "projected_gradient"
    REPAIRED = "repaired"


@dataclass(frozen=True)
class CouplingSolution:
    p: ProbabilityVector
    b: float
    method: Method
    quadratic_objective: float
    residual_norm: float
    iterations: int = 0


def _calibrated(m: PairwiseScoreMatrix) -> np.ndarray:
    if m.calibrated is None:
        raise MissingCalibrationError("pairwise matrix has no calibrated entries")
    r = np.array(m.calibrated)
    np.fill_diagonal(r, 0.0)
    return r


def build_q(m: PairwiseScoreMatrix) -> np.ndarray:
    """``Q_ii = sum_{s != i} r_si^2`` and ``Q_ij = -r_ji r_ij``."""
    r = _calibrated(m)
    Q = -(r * r.T)
    np.fill_diagonal(Q, np.sum(r * r, axis=0))
    return Q


def quadratic_objective(p, m: PairwiseScoreMatrix) -> float:
    """Evaluate the coupling objective directly from its pairwise sum."""
    r = _calibrated(m)
    v = p.values if isinstance(p, ProbabilityVector) else np.asarray(p, dtype=float)
    i, j = np.triu_indices(m.K, 1)
    d = r[i, j] * v[j] - r[j, i] * v[i]
    return 0.5 * float(np.dot(d, d))


def _solution(p: ProbabilityVector, b: float, method: Method, Q, m, iterations=0):
    v = p.values
    residual = float(np.max(np.abs(Q @ v + b)))
    return CouplingSolution(p, float(b), method, quadratic_objective(p, m), residual, iterations)


def solve_coupling(m: PairwiseScoreMatrix, check: bool = True) -> CouplingSolution:
    """Solve the coupling problem through its KKT linear system.

    Entries in ``(-1e-9, 0)`` are clamped and renormalized; anything more
    negative switches to ``projected_gradient_coupling``.
    """
    if check:
        res = validate_scores(m)
        if not res:
            raise ValidationError(f"invalid score matrix at {res.index}: {res.reason}")
    Q = build_q(m)
    K = m.K
    A = np.zeros((K + 1, K + 1))
    A[:K, :K] = Q
    A[:K, K] = 1.0
    A[K, :K] = 1.0
    rhs = np.zeros(K + 1)
    rhs[K] = 1.0
    try:
        x = gauss_solve(A, rhs)
    except SingularMatrixError:
        A[np.arange(K), np.arange(K)] += RIDGE
        try:
            x = gauss_solve(A, rhs)
        except SingularMatrixError as exc:
            raise DegenerateCouplingError(f"KKT system singular even with ridge: {exc}") from None
    if not np.all(np.isfinite(x)):
        raise DegenerateCouplingError("KKT solve produced non-finite values")

    p, b = x[:K], x[K]
    if p.min() < -NEG_TOL:
        logger.debug("KKT solution has entry %.3g; falling back to projected gradient", p.min())
        return projected_gradient_coupling(m)
    method = Method.KKT
    if p.min() < 0:
        method = Method.REPAIRED
    return _solution(ProbabilityVector.from_unnormalized(p), b, method, Q, m)


def projected_gradient_coupling(m: PairwiseScoreMatrix, max_iter: int = 100000,
                                tol: float = 1e-12) -> CouplingSolution:
    """Minimize ``(1/2) p^T Q p`` over the simplex with projected gradient steps.

    Step size is ``1/L`` with ``L`` the largest eigenvalue of ``Q``, so the
    objective never increases from the uniform start.
    """
    Q = build_q(m)
    K = m.K
    L = float(np.linalg.eigvalsh(Q)[-1])
    p = np.full(K, 1.0 / K)
    f = 0.5 * p @ Q @ p
    it = 0
    if L > 0:
        while it < max_iter:
            it += 1
            q = project_simplex(p - (Q @ p) / L)
            fq = 0.5 * q @ Q @ q
            dec = f - fq
            if fq <= f:
                p, f = q, fq
            if dec < tol:
                break
    pv = ProbabilityVector.from_unnormalized(p)
    # multiplier estimate from complementary slackness: p^T (Qp + b e) = 0
    b = -float(pv.values @ Q @ pv.values)
    return _solution(pv, b, Method.PROJECTED_GRADIENT, Q, m, it)


def kl_objective(p, m: PairwiseScoreMatrix, w: CouplingWeights) -> float:
    """Weighted KL divergence ``sum_{i != j} n_ij r_ij log(r_ij / mu_ij)``.

    Returns ``math.inf`` when some ``mu_ij`` is zero against a positive ``r_ij``.
    """
    r = _calibrated(m)
    v = p.values if isinstance(p, ProbabilityVector) else np.asarray(p, dtype=float)
    mus = mu_matrix(v)
    total = 0.0
    K = m.K
    for i in range(K):
        for j in range(K):
            if i == j or r[i, j] == 0:
                continue
            mij = mus[i, j]
            if not mij > 0:
                return math.inf
            total += w.n[i, j] * r[i, j] * math.log(r[i, j] / mij)
    return total


def vote_counts(m: PairwiseScoreMatrix) -> np.ndarray:
    """Pairwise wins per class on the raw scores (strict comparisons)."""
    s = m.raw
    wins = s > s.T
    np.fill_diagonal(wins, False)
    return wins.sum(axis=1)


def vote_label(m: PairwiseScoreMatrix) -> int:
    """Class with the most pairwise wins; ties go to the smallest index."""
    return int(np.argmax(vote_counts(m)))


def argmax_label(p) -> int:
    v = p.values if isinstance(p, ProbabilityVector) else np.asarray(p, dtype=float)
    return int(np.argmax(v))


def threshold_labels(p, theta: float) -> frozenset:
    """Every class whose probability reaches ``theta`` (inclusive)."""
    if not (0.0 < theta < 1.0):
        raise InvalidThresholdError(f"threshold must lie in (0, 1), got {theta!r}")
    v = p.values if isinstance(p, ProbabilityVector) else np.asarray(p, dtype=float)
    return frozenset(int(i) for i in np.flatnonzero(v >= theta))
