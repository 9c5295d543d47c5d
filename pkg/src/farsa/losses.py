"""Smooth losses: binary logistic regression and a convex quadratic."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .exceptions import DimensionError


def log1pexp_neg(t: np.ndarray) -> np.ndarray:
    """Overflow-safe ``log(1 + exp(-t))``."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = np.log1p(np.exp(-t[pos]))
    neg = ~pos
    out[neg] = -t[neg] + np.log1p(np.exp(t[neg]))
    return out


class LogisticLoss:
    """Average logistic loss ``(1/N) sum_i log(1 + exp(-y_i d_i^T x))``.

    Parameters
    ----------
    data : array-like or sparse matrix of shape (N, n)
        Rows are samples. Sparse input is kept in CSR with a CSC copy for
        column slicing.
    labels : array-like of shape (N,)
        Values in {-1, +1}.
    delta : float
        Floor on the per-sample curvature weights used by the Hessian model.
    """

    def __init__(self, data, labels, delta: float = 1e-8):
        if sp.issparse(data):
            self.data = sp.csr_matrix(data, dtype=float)
            self.data.sum_duplicates()
            self._data_csc = self.data.tocsc()
        else:
            self.data = np.asarray(data, dtype=float)
            if self.data.ndim != 2:
                raise DimensionError("data must be 2-d")
            self._data_csc = self.data
        labels = np.asarray(labels, dtype=float).ravel()
        if labels.shape[0] != self.data.shape[0]:
            raise DimensionError("row count does not match label count")
        if not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        if delta < 0:
            raise ValueError("delta must be nonnegative")
        self.labels = labels
        self.delta = float(delta)
        self.n_samples, self.n_features = self.data.shape

    @property
    def lipschitz_bound(self) -> float:
        """``||D||_F^2 / (4N)``, an upper bound on the gradient Lipschitz constant."""
        if sp.issparse(self.data):
            fro2 = float(self.data.multiply(self.data).sum())
        else:
            fro2 = float(np.sum(self.data**2))
        return fro2 / (4.0 * self.n_samples)

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_features,):
            raise DimensionError(f"expected length {self.n_features}, got {x.shape}")
        return x

    def margins(self, x) -> np.ndarray:
        """``y_i d_i^T x`` for every sample."""
        return self.labels * (self.data @ self._check(x))

    def value(self, x) -> float:
        return float(np.mean(log1pexp_neg(self.margins(x))))

    def gradient(self, x) -> np.ndarray:
        # 1 - sigma(t) == sigma(-t); avoids cancellation at large margins
        w = self.labels * expit(-self.margins(x))
        return -np.asarray(self.data.T @ w).ravel() / self.n_samples

    def change_from(self, x):
        """Return ``y -> f(y) - f(x)`` computed from margin differences.

        Uses ``log(1+e^{-t'}) - log(1+e^{-t}) = log1p(sigma(-t) * expm1(t - t'))``.
        """
        t = self.margins(x)
        sig_neg = expit(-t)
        base = log1pexp_neg(t)

        def change(y):
            dt = self.labels * (self.data @ (np.asarray(y, dtype=float) - x))
            out = np.empty_like(dt)
            ok = np.abs(dt) <= 30.0
            out[ok] = np.log1p(sig_neg[ok] * np.expm1(-dt[ok]))
            far = ~ok
            out[far] = log1pexp_neg(t[far] + dt[far]) - base[far]
            return float(np.mean(out))

        return change

    def curvature_weights(self, x) -> np.ndarray:
        """Diagonal of the clamped weight matrix ``max(sigma(1 - sigma), delta)``."""
        t = self.margins(x)
        return np.maximum(expit(t) * expit(-t), self.delta)

    def hessian_operator(self, x, idx):
        """Closure ``v -> [(1/N) D^T W D]_{idx,idx} v`` with ``W`` the clamped weights."""
        idx = np.asarray(idx, dtype=np.intp)
        weights = self.curvature_weights(x) / self.n_samples
        cols = self._data_csc[:, idx]
        if sp.issparse(cols):
            cols = cols.tocsr()
        cols_t = cols.T

        def hvp(v):
            return np.asarray(cols_t @ (weights * (cols @ v))).ravel()

        return hvp

    def hvp(self, x, idx, v) -> np.ndarray:
        """Reduced Hessian-model product on the coordinates ``idx``."""
        v = np.asarray(v, dtype=float)
        if v.shape != (len(idx),):
            raise DimensionError("reduced vector has wrong length")
        return self.hessian_operator(x, idx)(v)


class QuadraticLoss:
    """``f(x) = 0.5 x^T A x - b^T x`` with ``A`` symmetric positive definite."""

    def __init__(self, A, b):
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float).ravel()
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise DimensionError("A must be square")
        if b.shape != (A.shape[0],):
            raise DimensionError("b has wrong length")
        if not np.allclose(A, A.T, rtol=1e-12, atol=1e-12 * np.abs(A).max()):
            raise ValueError("A must be symmetric")
        eig = np.linalg.eigvalsh(A)
        if eig[0] <= 0:
            raise ValueError("A must be positive definite")
        self.A = A
        self.b = b
        self.n_features = A.shape[0]
        self.lipschitz_bound = float(eig[-1])
        self.strong_convexity = float(eig[0])

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ (self.A @ x) - self.b @ x)

    def gradient(self, x) -> np.ndarray:
        return self.A @ np.asarray(x, dtype=float) - self.b

    def change_from(self, x):
        """Return ``y -> f(y) - f(x) = (y - x)^T grad f(x) + 0.5 (y - x)^T A (y - x)``."""
        x = np.asarray(x, dtype=float)
        g = self.gradient(x)

        def change(y):
            delta = np.asarray(y, dtype=float) - x
            return float(delta @ g + 0.5 * delta @ (self.A @ delta))

        return change

    def hessian_operator(self, x, idx):
        sub = self.A[np.ix_(idx, idx)]
        return lambda v: sub @ v

    def hvp(self, x, idx, v):
        return self.hessian_operator(x, idx)(np.asarray(v, dtype=float))
