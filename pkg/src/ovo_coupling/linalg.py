"""Small dense numerics used by the coupling solver."""

import numpy as np


class SingularMatrixError(ArithmeticError):
    pass


def gauss_solve(a, b, tol=1e-14):
    """Solve ``a x = b`` by Gaussian elimination with partial pivoting.

    Inputs are copied. Raises ``SingularMatrixError`` when a pivot falls
    below ``tol`` relative to the largest entry of ``a``.
    """
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    n = b.size
    if a.shape != (n, n):
        raise ValueError(f"matrix shape {a.shape} does not match rhs of length {n}")
    scale = max(np.max(np.abs(a)), 1.0)

    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        if abs(a[p, k]) <= tol * scale:
            raise SingularMatrixError(f"pivot {a[p, k]!r} at column {k}")
        if p != k:
            a[[k, p]] = a[[p, k]]
            b[[k, p]] = b[[p, k]]
        lam = a[k + 1:, k] / a[k, k]
        a[k + 1:, k:] -= np.outer(lam, a[k, k:])
        b[k + 1:] -= lam * b[k]

    x = np.zeros(n)
    for k in range(n - 1, -1, -1):
        x[k] = (b[k] - np.dot(a[k, k + 1:], x[k + 1:])) / a[k, k]
    return x


def project_simplex(v):
    """Euclidean projection of ``v`` onto the probability simplex (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = np.count_nonzero(u - css / ind > 0)
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)
