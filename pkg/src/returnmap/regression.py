"""Sparse regression: sequentially thresholded least squares on a feature library.

The least-squares core is a Householder QR with column pivoting written
against numpy primitives.  Rank-deficient problems get the basic solution on
the pivoted basis: coefficients of non-pivot columns are set to zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class StlsqConfig:
    """Threshold lambda, iteration cap and optional ridge regularization."""

    threshold: float
    max_iterations: int = 25
    ridge: float = 0.0

    def __post_init__(self):
        if not self.threshold > 0:
            raise ValueError("stlsq threshold must be positive")
        if self.max_iterations < 1:
            raise ValueError("stlsq max_iterations must be >= 1")
        if self.ridge < 0:
            raise ValueError("stlsq ridge must be >= 0")


@dataclass(frozen=True)
class CoefficientMatrix:
    """Sparse coefficient matrix with its support mask and library binding."""

    values: np.ndarray  # (p, d)
    support: np.ndarray  # (p, d) bool
    library_fingerprint: str
    threshold: float
    empty_columns: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if self.values.shape != self.support.shape:
            raise ValueError("values and support shapes differ")
        if np.any(self.values[~self.support] != 0.0):
            raise ValueError("values must vanish off support")


def least_squares(a: np.ndarray, b: np.ndarray, ridge: float = 0.0,
                  rank_tol: float | None = None) -> np.ndarray:
    """Minimum-residual solve of a @ X = b via pivoted Householder QR.

    b may be a vector or an (m, d) matrix.  With ridge > 0 the augmented
    system [a; sqrt(ridge) I] X = [b; 0] is solved instead.  Columns judged
    dependent (remaining norm below rank_tol) receive zero coefficients.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValueError("non-finite entries in least-squares input")
    single = b.ndim == 1
    if single:
        b = b[:, None]
    if a.shape[0] != b.shape[0]:
        raise ValueError("row counts of a and b differ")
    if ridge > 0.0:
        p = a.shape[1]
        a = np.vstack([a, np.sqrt(ridge) * np.eye(p)])
        b = np.vstack([b, np.zeros((p, b.shape[1]))])
    m, p = a.shape
    r = a.copy()
    qtb = b.copy()
    perm = np.arange(p)
    if rank_tol is None:
        col_norms = np.sqrt(np.sum(a * a, axis=0))
        rank_tol = max(m, p) * np.finfo(float).eps * (col_norms.max() if p else 0.0)
    rank = min(m, p)
    for j in range(min(m, p)):
        norms = np.sqrt(np.sum(r[j:, j:] ** 2, axis=0))
        k = int(np.argmax(norms)) + j
        if norms[k - j] <= rank_tol:
            rank = j
            break
        if k != j:
            r[:, [j, k]] = r[:, [k, j]]
            perm[[j, k]] = perm[[k, j]]
        x = r[j:, j]
        alpha = -np.copysign(np.linalg.norm(x), x[0] if x[0] != 0.0 else 1.0)
        v = x.copy()
        v[0] -= alpha
        vn2 = v @ v
        if vn2 > 0.0:
            w = (v @ r[j:, j:]) * (2.0 / vn2)
            r[j:, j:] -= np.outer(v, w)
            wb = (v @ qtb[j:]) * (2.0 / vn2)
            qtb[j:] -= np.outer(v, wb)
        r[j, j] = alpha
        r[j + 1:, j] = 0.0
    x = np.zeros((p, b.shape[1]))
    if rank > 0:
        y = qtb[:rank].copy()
        for i in range(rank - 1, -1, -1):
            y[i] -= r[i, i + 1:rank] @ y[i + 1:rank]
            y[i] /= r[i, i]
        x[perm[:rank]] = y
    return x[:, 0] if single else x


def stlsq(theta: np.ndarray, x2: np.ndarray, config: StlsqConfig,
          library_fingerprint: str = "") -> CoefficientMatrix:
    """Sequentially thresholded least squares, per output coordinate.

    Full solve, zero entries with |coef| <= lambda, re-solve on the surviving
    columns, and repeat until the support is stable or the iteration cap is
    hit.  A coordinate whose support empties is returned as the zero map and
    flagged in `empty_columns` rather than raising: lambda sweeps legitimately
    reach that regime.
    """
    theta = np.asarray(theta, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x2.ndim == 1:
        x2 = x2[:, None]
    if theta.shape[0] != x2.shape[0]:
        raise ValueError("theta and x2 row counts differ")
    p = theta.shape[1]
    d = x2.shape[1]
    lam = config.threshold
    values = np.zeros((p, d))
    support = np.zeros((p, d), dtype=bool)
    empty = []
    for j in range(d):
        col = x2[:, j]
        coef = least_squares(theta, col, ridge=config.ridge)
        active = np.abs(coef) > lam
        for _ in range(config.max_iterations):
            if not active.any():
                break
            coef = np.zeros(p)
            coef[active] = least_squares(theta[:, active], col, ridge=config.ridge)
            new_active = np.abs(coef) > lam
            if np.array_equal(new_active, active):
                break
            active = new_active
        coef[~active] = 0.0
        if not active.any():
            empty.append(j)
        values[:, j] = coef
        support[:, j] = active
    return CoefficientMatrix(values, support, library_fingerprint, lam, tuple(empty))


def residual_rms(theta: np.ndarray, xi: CoefficientMatrix, x2: np.ndarray) -> np.ndarray:
    """Per-coordinate root-mean-square of x2 - theta @ xi.values."""
    theta = np.asarray(theta, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x2.ndim == 1:
        x2 = x2[:, None]
    res = x2 - theta @ xi.values
    return np.sqrt(np.mean(res * res, axis=0))
