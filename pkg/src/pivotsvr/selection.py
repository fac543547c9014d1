"""TpRMSE, threshold optimisation and grid-search model selection."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import ConvergenceError, DataError, SelectionError
from .features import LabeledSet, build_dataset, feature_matrix
from .pivots import PivotSpec
from .series import as_prices
from .svr import EpsilonSVR

log = logging.getLogger(__name__)

DEFAULT_C = (0.1, 1.0, 100.0)
DEFAULT_SIGMA = (0.1, 1.0, 100.0)
DEFAULT_EPSILON = (0.01, 0.05, 0.1)


@dataclass(frozen=True)
class Thresholds:
    t_low: float
    t_high: float

    def __post_init__(self):
        if not (0.0 <= self.t_low <= self.t_high <= 1.0):
            raise ValueError(f"need 0 <= t_low <= t_high <= 1, got {self.t_low}, {self.t_high}")


def threshold_grid(step: float = 0.01) -> np.ndarray:
    """``0, step, 2*step, ..., 1`` with values rounded to kill float drift."""
    k = round(1.0 / step)
    if not math.isclose(k * step, 1.0, rel_tol=1e-9):
        raise ValueError(f"step {step} does not divide [0, 1]")
    return np.array([round(i * step, 12) for i in range(k + 1)])


def rmse(predicted, actual) -> float:
    p = np.asarray(predicted, dtype=float)
    a = np.asarray(actual, dtype=float)
    if p.shape != a.shape or p.ndim != 1:
        raise ValueError("rmse needs two 1-D sequences of equal length")
    if not len(p):
        raise ValueError("rmse of empty sequences")
    d = p - a
    total = math.fsum(d * d)
    if total == 0 and np.any(d):
        # every square underflowed; rescale so tiny errors stay non-zero
        scale = float(np.max(np.abs(d)))
        return scale * math.sqrt(math.fsum((d / scale) ** 2) / len(p))
    return math.sqrt(total / len(p))


def trim_reference(gamma, gamma_hat, th: Thresholds) -> np.ndarray:
    """Reference that only disagrees with the prediction on threshold mistakes.

    Per index, first matching case wins: missed peak or false peak -> t_high;
    missed trough or false trough -> t_low; otherwise the prediction itself.
    """
    g = np.asarray(gamma, dtype=float)
    gh = np.asarray(gamma_hat, dtype=float)
    lo, hi = th.t_low, th.t_high
    return np.select(
        [(g == 1) & (gh < hi), (g != 1) & (gh > hi), (g == 0) & (gh > lo), (g != 0) & (gh < lo)],
        [hi, hi, lo, lo],
        default=gh,
    )


def tprmse(gamma, gamma_hat, th: Thresholds) -> float:
    return rmse(trim_reference(gamma, gamma_hat, th), gamma_hat)


def optimize_thresholds(gamma, gamma_hat, grid=None) -> tuple[Thresholds, float]:
    """Exhaustive search over ``grid x grid`` restricted to ``t_low <= t_high``.

    Ties go to the smallest ``t_low``, then the smallest ``t_high``.
    """
    g = np.asarray(gamma, dtype=float)
    gh = np.asarray(gamma_hat, dtype=float)
    if g.shape != gh.shape or g.ndim != 1 or not len(g):
        raise ValueError("gamma and gamma_hat must be equal-length, non-empty 1-D sequences")
    values = threshold_grid() if grid is None else np.unique(np.asarray(grid, dtype=float))
    if not len(values):
        raise ValueError("empty threshold grid")
    L = values[:, None, None]
    H = values[None, :, None]
    high_case = ((g == 1) & (gh < H)) | ((g != 1) & (gh > H))
    low_case = ((g == 0) & (gh > L)) | ((g != 0) & (gh < L))
    ref = np.where(high_case, H, np.where(low_case, L, gh))
    approx = np.sqrt(((ref - gh) ** 2).sum(axis=2) / len(gh))
    feasible = values[:, None] <= values[None, :]
    approx[~feasible] = np.inf
    best = approx.min()
    if not np.isfinite(best):
        raise ValueError("no feasible threshold pair in grid")
    # re-score near-ties exactly so the choice does not hinge on summation order
    close = np.argwhere(approx <= best * (1 + 1e-9) + 1e-15)
    winner = None
    for i, j in close:
        th = Thresholds(float(values[i]), float(values[j]))
        key = (tprmse(g, gh, th), th.t_low, th.t_high)
        if winner is None or key < winner:
            winner = key
    score, lo, hi = winner
    return Thresholds(lo, hi), score


@dataclass(frozen=True)
class GridPoint:
    C: float
    sigma: float
    epsilon: float
    thresholds: Thresholds = None
    score: float = math.inf
    error: str = ""


@dataclass
class FittedPredictor:
    """A trained SVR with its decision thresholds and selection record."""

    model: EpsilonSVR
    thresholds: Thresholds
    spec: PivotSpec
    window: int
    score: float
    grid_points: list = field(default_factory=list)

    @property
    def params(self) -> dict:
        return {"C": float(self.model.C), "sigma": float(self.model.sigma),
                "epsilon": float(self.model.epsilon)}

    def predict(self, series, indices) -> np.ndarray:
        """Predicted oscillator at each index, from backward windows only."""
        X = feature_matrix(series, indices, self.window)
        return self.model.predict(X) if len(X) else np.empty(0)


def hyper_grid(C=DEFAULT_C, sigma=DEFAULT_SIGMA, epsilon=DEFAULT_EPSILON):
    """Grid points ordered by ascending C, then sigma, then epsilon."""
    return list(itertools.product(sorted(set(C)), sorted(set(sigma)), sorted(set(epsilon))))


def select_model(train_set: LabeledSet, valid_set: LabeledSet, spec: PivotSpec, window: int,
                 C=DEFAULT_C, sigma=DEFAULT_SIGMA, epsilon=DEFAULT_EPSILON,
                 thresholds=None, tol: float = 1e-3) -> FittedPredictor:
    """Train one SVR per grid point; keep the one whose optimised thresholds
    give the lowest validation TpRMSE (first in grid order on ties)."""
    if not len(train_set) or not len(valid_set):
        raise DataError("training and validation sets must be non-empty")
    best = None
    points = []
    for c, s, e in hyper_grid(C, sigma, epsilon):
        try:
            model = EpsilonSVR(C=c, epsilon=e, sigma=s, tol=tol).fit(train_set.X, train_set.y)
        except (ConvergenceError, DataError) as exc:
            log.warning("grid point C=%g sigma=%g epsilon=%g skipped: %s", c, s, e, exc)
            points.append(GridPoint(c, s, e, error=str(exc)))
            continue
        th, score = optimize_thresholds(valid_set.y, model.predict(valid_set.X), thresholds)
        points.append(GridPoint(c, s, e, th, score))
        if best is None or score < best[0]:
            best = (score, model, th)
    if best is None:
        raise SelectionError("every hyper-parameter grid point failed to train")
    score, model, th = best
    return FittedPredictor(model, th, spec, window, score, points)


def fit_predictor(series, train: range, validation: range, spec: PivotSpec, window: int = 8,
                  **kwargs) -> FittedPredictor:
    """Build both labelled sets from their own segments and run :func:`select_model`.

    Validation rows may use training prices in their backward windows; no
    price at or after ``validation.stop`` is read.
    """
    x = as_prices(series)[:validation.stop]
    train_set = build_dataset(x, train, spec, window)
    valid_set = build_dataset(x, validation, spec, window, history=True)
    return select_model(train_set, valid_set, spec, window, **kwargs)


class TurningPointSVR(BaseEstimator):
    """End-to-end turning-point regressor over a price sequence.

    ``fit(prices)`` treats the last ``n_valid`` prices as the validation
    segment and everything before as training data, runs the grid search,
    and stores the winning model and thresholds. ``predict(prices)`` returns
    the predicted oscillator for every index with a full backward window
    (NaN before that).
    """

    def __init__(self, criterion="impact", gamma=0.02, degree=None, lookahead=None, window=8,
                 C_grid=DEFAULT_C, sigma_grid=DEFAULT_SIGMA, epsilon_grid=DEFAULT_EPSILON,
                 threshold_step=0.01, n_valid=60, tol=1e-3):
        self.criterion = criterion
        self.gamma = gamma
        self.degree = degree
        self.lookahead = lookahead
        self.window = window
        self.C_grid = C_grid
        self.sigma_grid = sigma_grid
        self.epsilon_grid = epsilon_grid
        self.threshold_step = threshold_step
        self.n_valid = n_valid
        self.tol = tol

    def _spec(self) -> PivotSpec:
        return PivotSpec(self.criterion, gamma=self.gamma, degree=self.degree,
                         lookahead=self.lookahead)

    def fit(self, X, y=None):
        x = as_prices(X)
        n = len(x)
        if not 0 < self.n_valid < n:
            raise ValueError(f"n_valid={self.n_valid} must lie in (0, {n})")
        split = n - self.n_valid
        self.predictor_ = fit_predictor(
            x, range(0, split), range(split, n), self._spec(), self.window,
            C=self.C_grid, sigma=self.sigma_grid, epsilon=self.epsilon_grid,
            thresholds=threshold_grid(self.threshold_step), tol=self.tol)
        self.thresholds_ = self.predictor_.thresholds
        self.best_params_ = self.predictor_.params
        self.best_score_ = self.predictor_.score
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "predictor_")
        x = as_prices(X)
        out = np.full(len(x), np.nan)
        idx = np.arange(self.window, len(x))
        if len(idx):
            out[idx] = self.predictor_.predict(x, idx)
        return out
