"""Domain types shared across the package.

Class indices are zero-based everywhere in code and in every file format.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

SIMPLEX_TOL = 1e-12
SCORE_TOL = 1e-9


class OvoError(Exception):
    """Base class for all package errors."""


class ValidationError(OvoError, ValueError):
    """Bad input: shapes, ranges, missing pieces, malformed files."""


class ShapeError(ValidationError):
    pass


class InvalidPairError(ValidationError):
    pass


class DegeneratePairError(ValidationError):
    pass


class MissingClassError(ValidationError):
    pass


class MissingCalibrationError(ValidationError):
    pass


class InvalidParamsError(ValidationError):
    pass


class InvalidThresholdError(ValidationError):
    pass


class EmptyDataError(ValidationError):
    pass


class NumericalError(OvoError, ArithmeticError):
    """A well-formed problem that the numerics could not solve."""


class DegenerateFitError(NumericalError):
    pass


class DegenerateCouplingError(NumericalError):
    pass


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def pmap(fn: Callable, items, threads: int | None = 1) -> list:
    """Ordered map; ``threads=None`` uses the executor default, ``<= 1`` runs inline."""
    items = list(items)
    if threads is not None and threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def pair_indices(K: int) -> list[tuple[int, int]]:
    """All unordered pairs (i, j) with i < j, in lexicographic order."""
    return [(i, j) for i in range(K) for j in range(i + 1, K)]


@dataclass(frozen=True)
class ClassSet:
    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 2:
            raise MissingClassError(f"need at least 2 classes, got {len(labels)}")
        if len(set(labels)) != len(labels):
            raise ValidationError(f"duplicate class labels in {list(labels)}")

    @property
    def K(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(str(label))
        except ValueError:
            raise ValidationError(f"unknown class label {label!r}") from None

    def __len__(self):
        return len(self.labels)

    @classmethod
    def of_size(cls, K: int) -> "ClassSet":
        return cls(tuple(str(i) for i in range(K)))


@dataclass(frozen=True)
class ProbabilityVector:
    """A point on the probability simplex.

    Construction is the single gate for the simplex invariants: no negative
    entries and a sum within ``SIMPLEX_TOL`` of one. Callers that may hold
    tiny negatives from round-off must repair first (see ``from_unnormalized``).
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 1:
            raise ShapeError(f"probability vector must be 1-D and nonempty, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValidationError("probability vector has non-finite entries")
        if np.any(v < 0):
            raise ValidationError(f"probability vector has negative entry {v.min()!r}")
        if abs(v.sum() - 1.0) > SIMPLEX_TOL:
            raise ValidationError(f"probability vector sums to {v.sum()!r}, not 1")
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def from_unnormalized(cls, v) -> "ProbabilityVector":
        v = np.clip(np.asarray(v, dtype=float), 0.0, None)
        s = v.sum()
        if not s > 0:
            raise ValidationError("cannot normalize a vector with no positive mass")
        return cls(v / s)

    def __len__(self):
        return self.values.size

    def __getitem__(self, i):
        return float(self.values[i])


def mu(p: ProbabilityVector | Sequence[float], i: int, j: int) -> float:
    """Pairwise conditional ``p_i / (p_i + p_j)``."""
    if i == j:
        raise InvalidPairError(f"pair needs two distinct classes, got ({i}, {j})")
    v = p.values if isinstance(p, ProbabilityVector) else np.asarray(p, dtype=float)
    den = v[i] + v[j]
    if not den > 0:
        raise DegeneratePairError(f"p[{i}] + p[{j}] = 0")
    return float(v[i] / den)


def mu_matrix(p) -> np.ndarray:
    """All pairwise conditionals at once; diagonal is 0.5 by convention."""
    v = p.values if isinstance(p, ProbabilityVector) else np.asarray(p, dtype=float)
    den = v[:, None] + v[None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        out = v[:, None] / den
    np.fill_diagonal(out, 0.5)
    return out


def complete_from_upper(upper: np.ndarray) -> np.ndarray:
    """Fill the strict lower triangle as ``1 - upper.T`` and zero the diagonal."""
    K = upper.shape[0]
    out = np.zeros((K, K))
    iu = np.triu_indices(K, 1)
    out[iu] = upper[iu]
    out[(iu[1], iu[0])] = 1.0 - upper[iu]
    return out


@dataclass(frozen=True)
class PairwiseScoreMatrix:
    """Raw pairwise scores and, optionally, their calibrated counterparts.

    Entry ``[i, j]`` estimates the probability of class ``i`` against class
    ``j``. Diagonal entries are unused and stored as zero. The arrays are
    stored as given so that ``validate_scores`` can report violations; build
    consistent matrices with ``from_pairs``.
    """

    classes: ClassSet
    raw: np.ndarray
    calibrated: np.ndarray | None = None

    def __post_init__(self):
        K = self.classes.K
        raw = np.asarray(self.raw, dtype=float)
        if raw.shape != (K, K):
            raise ShapeError(f"raw scores must be {K}x{K}, got {raw.shape}")
        object.__setattr__(self, "raw", _frozen(raw))
        if self.calibrated is not None:
            cal = np.asarray(self.calibrated, dtype=float)
            if cal.shape != (K, K):
                raise ShapeError(f"calibrated scores must be {K}x{K}, got {cal.shape}")
            object.__setattr__(self, "calibrated", _frozen(cal))

    @property
    def K(self) -> int:
        return self.classes.K

    @classmethod
    def from_pairs(cls, classes: ClassSet, raw: Mapping[tuple[int, int], float],
                   calibrated: Mapping[tuple[int, int], float] | None = None):
        """Build from ``{(i, j): s_ij}`` with ``i < j``; the rest is the complement."""
        K = classes.K

        def fill(d):
            upper = np.zeros((K, K))
            for (i, j) in pair_indices(K):
                if (i, j) not in d:
                    raise ValidationError(f"missing score for pair ({i}, {j})")
                upper[i, j] = d[(i, j)]
            return complete_from_upper(upper)

        return cls(classes, fill(raw), None if calibrated is None else fill(calibrated))

    @classmethod
    def from_upper(cls, classes: ClassSet, raw_upper, calibrated_upper=None):
        raw = complete_from_upper(np.asarray(raw_upper, dtype=float))
        cal = None if calibrated_upper is None else complete_from_upper(
            np.asarray(calibrated_upper, dtype=float))
        return cls(classes, raw, cal)

    def with_calibrated(self, calibrated: np.ndarray) -> "PairwiseScoreMatrix":
        return PairwiseScoreMatrix(self.classes, self.raw, calibrated)


@dataclass(frozen=True)
class ScoreValidation:
    ok: bool
    index: tuple[int, int] | None = None
    reason: str = ""

    def __bool__(self):
        return self.ok


def _check(a: np.ndarray, strict: bool, what: str, tol: float) -> ScoreValidation:
    K = a.shape[0]
    for i in range(K):
        for j in range(K):
            if i == j:
                continue
            v = a[i, j]
            if not np.isfinite(v):
                return ScoreValidation(False, (i, j), f"{what} score is not finite")
            if strict:
                if not (0.0 < v < 1.0):
                    return ScoreValidation(False, (i, j), f"{what} score {v!r} outside (0, 1)")
            elif v < -tol or v > 1.0 + tol:
                return ScoreValidation(False, (i, j), f"{what} score {v!r} outside [0, 1]")
            if i > j and abs(v - (1.0 - a[j, i])) > tol:
                return ScoreValidation(
                    False, (i, j),
                    f"{what} complement violated: s[{i},{j}] + s[{j},{i}] = {v + a[j, i]!r}")
    return ScoreValidation(True)


def validate_scores(m: PairwiseScoreMatrix, tol: float = SCORE_TOL) -> ScoreValidation:
    """Check range and complement conventions, row-major, first violation wins."""
    res = _check(m.raw, strict=False, what="raw", tol=tol)
    if not res or m.calibrated is None:
        return res
    return _check(m.calibrated, strict=True, what="calibrated", tol=tol)


@dataclass(frozen=True)
class CalibrationParams:
    eta: float
    tau: float
    pair: tuple[int, int] = (0, 1)
    iterations: int = 0
    converged: bool = True
    final_nll: float = 0.0
    nll_trace: tuple[float, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if not (np.isfinite(self.eta) and np.isfinite(self.tau)):
            raise InvalidParamsError(f"eta and tau must be finite, got ({self.eta}, {self.tau})")
        i, j = self.pair
        if not i < j:
            raise InvalidPairError(f"calibration pair must satisfy i < j, got {self.pair}")
        if self.final_nll < 0:
            raise InvalidParamsError(f"final_nll must be >= 0, got {self.final_nll}")


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix with one label set per sample.

    Single-label data simply has singleton sets.
    """

    features: np.ndarray
    labels: tuple[frozenset, ...]
    class_set: ClassSet
    ids: tuple[str, ...] | None = None

    def __post_init__(self):
        X = np.asarray(self.features, dtype=float)
        if X.ndim != 2 or X.shape[1] < 1:
            raise ShapeError(f"features must be an n x d array with d >= 1, got shape {X.shape}")
        labels = tuple(frozenset(int(c) for c in s) for s in self.labels)
        if len(labels) != X.shape[0]:
            raise ShapeError(f"{X.shape[0]} feature rows but {len(labels)} label sets")
        K = self.class_set.K
        for n, s in enumerate(labels):
            for c in s:
                if not 0 <= c < K:
                    raise ValidationError(f"sample {n}: label index {c} out of range for K={K}")
        object.__setattr__(self, "features", _frozen(X))
        object.__setattr__(self, "labels", labels)
        if self.ids is not None:
            ids = tuple(str(x) for x in self.ids)
            if len(ids) != X.shape[0]:
                raise ShapeError(f"{X.shape[0]} feature rows but {len(ids)} ids")
            object.__setattr__(self, "ids", ids)

    @classmethod
    def single(cls, features, y: Iterable[int], class_set: ClassSet, ids=None):
        return cls(features, tuple(frozenset([int(c)]) for c in y), class_set, ids)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def counts(self) -> np.ndarray:
        c = np.zeros(self.class_set.K, dtype=int)
        for s in self.labels:
            for k in s:
                c[k] += 1
        return c

    @property
    def is_single_label(self) -> bool:
        return all(len(s) == 1 for s in self.labels)

    def y(self) -> np.ndarray:
        """Integer label vector; only meaningful in single-label mode."""
        if not self.is_single_label:
            raise ValidationError("dataset is multi-label; no single label vector")
        return np.array([next(iter(s)) for s in self.labels], dtype=int)

    def members(self, k: int) -> np.ndarray:
        """Row indices of samples carrying class ``k``."""
        return np.array([n for n, s in enumerate(self.labels) if k in s], dtype=int)

    def subset(self, rows) -> "LabeledDataset":
        rows = np.asarray(rows, dtype=int)
        ids = None if self.ids is None else [self.ids[r] for r in rows]
        return LabeledDataset(self.features[rows], [self.labels[r] for r in rows],
                              self.class_set, ids)


@dataclass(frozen=True)
class CouplingWeights:
    n: np.ndarray

    @classmethod
    def from_counts(cls, counts) -> "CouplingWeights":
        c = np.asarray(counts, dtype=float)
        w = c[:, None] + c[None, :]
        np.fill_diagonal(w, 0.0)
        return cls(_frozen(w))
