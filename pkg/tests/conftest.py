import numpy as np
import pytest

from ovo_coupling.core import ClassSet, PairwiseScoreMatrix, mu_matrix
from ovo_coupling.evaluation import gen_synthetic


def consistent_matrix(p):
    """Calibrated matrix whose entries are exactly the pairwise conditionals of ``p``."""
    p = np.asarray(p, dtype=float)
    r = mu_matrix(p)
    np.fill_diagonal(r, 0.0)
    return PairwiseScoreMatrix(ClassSet.of_size(p.size), r, r)


def random_calibrated(rng, K, lo=0.001, hi=0.999):
    u = rng.uniform(lo, hi, (K, K))
    return PairwiseScoreMatrix.from_upper(ClassSet.of_size(K), u, u)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def blobs():
    """Separable 3-class fixture: 100 samples per class, seed 7."""
    return gen_synthetic(K=3, per_class=100, dim=2, separation=8.0, seed=7)
