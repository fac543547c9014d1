"""Epsilon-SVR with an RBF kernel, trained by SMO on the dual."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import ConvergenceError, DataError

MODEL_MAGIC = "pivotsvr-svr 1"


def rbf_kernel(x, y, sigma: float) -> float:
    """``exp(-||x - y||^2 / sigma^2)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    d = x - y
    return float(np.exp(-np.dot(d, d) / sigma ** 2))


def kernel_matrix(A, B, sigma: float) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    return np.exp(-cdist(A, B, "sqeuclidean") / sigma ** 2)


@numba.njit(cache=True)
def _smo(K, y, C, eps, tol, max_iter):
    # Variables 0..n-1 are alpha (sign +1), n..2n-1 are alpha* (sign -1).
    n = y.shape[0]
    nn = 2 * n
    a = np.zeros(nn)
    G = np.empty(nn)
    for t in range(n):
        G[t] = eps - y[t]
        G[t + n] = eps + y[t]
    it = 0
    gap = np.inf
    while True:
        vmax = -np.inf
        vmin = np.inf
        i = -1
        j = -1
        for t in range(nn):
            if t < n:
                v = -G[t]
                if a[t] < C and v > vmax:
                    vmax = v
                    i = t
                if a[t] > 0 and v < vmin:
                    vmin = v
                    j = t
            else:
                v = G[t]
                if a[t] > 0 and v > vmax:
                    vmax = v
                    i = t
                if a[t] < C and v < vmin:
                    vmin = v
                    j = t
        gap = vmax - vmin
        if i < 0 or j < 0 or gap <= tol:
            break
        if it >= max_iter:
            return a, G, it, gap, False
        it += 1
        ki = i if i < n else i - n
        kj = j if j < n else j - n
        eta = K[ki, ki] + K[kj, kj] - 2.0 * K[ki, kj]
        if eta <= 1e-12:
            eta = 1e-12
        lam = gap / eta
        bi = C - a[i] if i < n else a[i]
        bj = a[j] if j < n else C - a[j]
        hit_i = False
        hit_j = False
        if bi <= lam:
            lam = bi
            hit_i = True
        if bj <= lam:
            lam = bj
            hit_j = True
            hit_i = bi <= bj
        if i < n:
            a[i] = C if hit_i else a[i] + lam
        else:
            a[i] = 0.0 if hit_i else a[i] - lam
        if j < n:
            a[j] = 0.0 if hit_j else a[j] - lam
        else:
            a[j] = C if hit_j else a[j] + lam
        for t in range(n):
            d = lam * (K[t, ki] - K[t, kj])
            G[t] += d
            G[t + n] -= d
    return a, G, it, gap, True


def _intercept(a, G, C):
    n = len(a) // 2
    sign = np.concatenate([np.ones(n), -np.ones(n)])
    v = -sign * G
    # values within rounding of a bound count as bounded
    margin = 1e-10 * C
    below_c = a < C - margin
    above_0 = a > margin
    free = above_0 & below_c
    if free.any():
        return float(v[free].mean())
    up = ((sign > 0) & below_c) | ((sign < 0) & above_0)
    low = ((sign < 0) & below_c) | ((sign > 0) & above_0)
    hi = v[up].max() if up.any() else v[low].min()
    lo = v[low].min() if low.any() else v[up].max()
    return float((hi + lo) / 2)


class EpsilonSVR(RegressorMixin, BaseEstimator):
    """Epsilon-insensitive support vector regression with kernel
    ``exp(-||x - y||^2 / sigma^2)``.

    Parameters
    ----------
    C : float
        Penalty on deviations beyond the tube.
    epsilon : float
        Half-width of the insensitive tube.
    sigma : float
        Kernel width.
    tol : float
        Stopping tolerance on the maximal KKT violating pair.
    max_iter : int or None
        Cap on pair updates; ``None`` means ``10 * n**2``.

    Attributes
    ----------
    support_ : ndarray of int
        Training indices with non-zero coefficient.
    support_vectors_ : ndarray
    dual_coef_ : ndarray
        ``alpha_i - alpha_i*`` for each support vector.
    intercept_ : float
    n_iter_ : int
    kkt_gap_ : float
        Final maximal violation ``m(alpha) - M(alpha)``.
    """

    def __init__(self, C=1.0, epsilon=0.1, sigma=1.0, tol=1e-3, max_iter=None):
        self.C = C
        self.epsilon = epsilon
        self.sigma = sigma
        self.tol = tol
        self.max_iter = max_iter

    def _check_params(self):
        if not self.C > 0:
            raise ValueError("C must be positive")
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be non-negative")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")

    def fit(self, X, y):
        self._check_params()
        X_arr = np.asarray(X, dtype=float)
        y_arr = np.asarray(y, dtype=float)
        if not (np.all(np.isfinite(X_arr)) and np.all(np.isfinite(y_arr))):
            raise DataError("features and targets must be finite")
        X, y = check_X_y(X_arr, y_arr, dtype=np.float64, y_numeric=True)
        n = len(y)
        K = kernel_matrix(X, X, self.sigma)
        max_iter = 10 * n * n if self.max_iter is None else int(self.max_iter)
        a, G, n_iter, gap, ok = _smo(K, y, float(self.C), float(self.epsilon),
                                     float(self.tol), max_iter)
        if not ok:
            raise ConvergenceError(
                f"SMO stopped after {n_iter} updates with KKT violation {gap:.3g} > {self.tol}",
                violation=float(gap))
        beta = a[:n] - a[n:]
        self.support_ = np.flatnonzero(beta != 0)
        self.support_vectors_ = X[self.support_].copy()
        self.dual_coef_ = beta[self.support_].copy()
        self.intercept_ = _intercept(a, G, float(self.C))
        self.n_iter_ = int(n_iter)
        self.kkt_gap_ = float(gap)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "intercept_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        if not len(self.dual_coef_):
            return np.full(len(X), self.intercept_)
        return kernel_matrix(X, self.support_vectors_, self.sigma) @ self.dual_coef_ + self.intercept_

    def dual_objective(self, X, y) -> float:
        """Dual objective ``1/2 b'Kb + eps |b|_1 - y'b`` at the fitted coefficients,
        to be minimised; ``X, y`` must be the training data."""
        check_is_fitted(self, "intercept_")
        X = check_array(X, dtype=np.float64)
        y = np.asarray(y, dtype=float)
        beta = np.zeros(len(y))
        beta[self.support_] = self.dual_coef_
        K = kernel_matrix(X, X, self.sigma)
        return float(0.5 * beta @ K @ beta + self.epsilon * np.abs(beta).sum() - y @ beta)


@dataclass(frozen=True)
class SvrParams:
    C: float = 1.0
    epsilon: float = 0.1
    sigma: float = 1.0

    def __post_init__(self):
        if not (self.C > 0 and self.epsilon >= 0 and self.sigma > 0):
            raise ValueError(f"invalid SVR parameters {self}")


def train(X, y, params: SvrParams, tol: float = 1e-3, max_iter=None) -> EpsilonSVR:
    return EpsilonSVR(C=params.C, epsilon=params.epsilon, sigma=params.sigma,
                      tol=tol, max_iter=max_iter).fit(X, y)


def save_model(model: EpsilonSVR, path) -> None:
    """Write a fitted model as text; floats in hex so the round trip is exact."""
    check_is_fitted(model, "intercept_")
    h = float.hex
    lines = [
        MODEL_MAGIC,
        f"C {h(float(model.C))}",
        f"epsilon {h(float(model.epsilon))}",
        f"sigma {h(float(model.sigma))}",
        f"tol {h(float(model.tol))}",
        f"bias {h(model.intercept_)}",
        f"n_sv {len(model.dual_coef_)} dim {model.n_features_in_}",
    ]
    for idx, coef, sv in zip(model.support_, model.dual_coef_, model.support_vectors_):
        lines.append(" ".join([str(int(idx)), h(float(coef))] + [h(float(v)) for v in sv]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path) -> EpsilonSVR:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != MODEL_MAGIC:
        raise DataError(f"{path}: not a pivotsvr model file")
    try:
        fields = dict(line.split(" ", 1) for line in lines[1:6])
        f = float.fromhex
        model = EpsilonSVR(C=f(fields["C"]), epsilon=f(fields["epsilon"]),
                           sigma=f(fields["sigma"]), tol=f(fields["tol"]))
        _, n_sv, _, dim = lines[6].split()
        n_sv, dim = int(n_sv), int(dim)
        rows = [line.split() for line in lines[7:7 + n_sv]]
        if len(rows) != n_sv or any(len(r) != dim + 2 for r in rows):
            raise ValueError("support-vector rows malformed")
        model.support_ = np.array([int(r[0]) for r in rows], dtype=int)
        model.dual_coef_ = np.array([f(r[1]) for r in rows])
        model.support_vectors_ = np.array([[f(v) for v in r[2:]] for r in rows]).reshape(n_sv, dim)
        model.intercept_ = f(fields["bias"])
    except (KeyError, ValueError, IndexError) as exc:
        raise DataError(f"{path}: malformed model file ({exc})") from None
    model.n_features_in_ = dim
    model.n_iter_ = 0
    model.kkt_gap_ = float("nan")
    return model
