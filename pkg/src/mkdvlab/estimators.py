"""scikit-learn style wrappers for the two fitted objects of the package.

Rows of ``X`` are snapshots sampled on the estimator's grid.  Only the
decomposition (fit α*, β*; transform to the real remainder) and the shift
fit (fit x1(t), x2(t) along a run) have a fit/transform shape; everything
else stays a plain function.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import backlund as bk
from . import modulation as md
from .grid import Field, Grid

__all__ = ["DoubleBacklundDecomposer", "BreatherModulationFitter"]


def _rows(X, n: int) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != n:
        raise ValueError(f"expected rows of {n} samples, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("input contains non-finite values")
    return X


class DoubleBacklundDecomposer(TransformerMixin, BaseEstimator):
    """Split real data near a breather into (α*, β*) and a real remainder y_a⁰.

    ``fit`` runs the two forward inversions on the first row; ``transform``
    returns y_a⁰ for each row (refitting rows other than the fitted one);
    ``inverse_transform`` rebuilds u from remainders evolved to ``t``.
    """

    def __init__(self, alpha=1.0, beta=1.0, x1=0.0, x2=0.0, half_length=40.0, n=2048, tolerance=1e-10):
        self.alpha = alpha
        self.beta = beta
        self.x1 = x1
        self.x2 = x2
        self.half_length = half_length
        self.n = n
        self.tolerance = tolerance

    def _grid(self) -> Grid:
        return Grid(self.half_length, self.n)

    def _decompose(self, row):
        g = self._grid()
        cfg = bk.InversionConfig(tolerance=self.tolerance)
        return bk.decompose_double(self.alpha, self.beta, Field(g, row, realness_hint=True), cfg, (self.x1, self.x2))

    def fit(self, X, y=None):
        X = _rows(X, self.n)
        self.record_ = self._decompose(X[0])
        self.alpha_star_ = self.record_.alpha_star
        self.beta_star_ = self.record_.beta_star
        self._fitted_row = X[0].copy()
        return self

    def transform(self, X):
        check_is_fitted(self, "record_")
        X = _rows(X, self.n)
        out = np.empty_like(X)
        for i, row in enumerate(X):
            rec = self.record_ if np.array_equal(row, self._fitted_row) else self._decompose(row)
            out[i] = rec.y_a0.real
        return out

    def inverse_transform(self, Y, t=0.0):
        check_is_fitted(self, "record_")
        Y = _rows(Y, self.n)
        g = self._grid()
        ts = np.broadcast_to(np.asarray(t, dtype=float), (len(Y),))
        out = np.empty_like(Y)
        for i, (row, ti) in enumerate(zip(Y, ts)):
            r = bk.reconstruct_double(self.record_, Field(g, row, realness_hint=True), float(ti))
            out[i] = r.u_a.real
        return out


class BreatherModulationFitter(TransformerMixin, BaseEstimator):
    """Fit the shifts x1(t), x2(t) of B(·; α*, β*) along snapshots.

    ``fit(X, times)`` tracks with warm starts; ``transform`` returns the
    residuals z = u − B at the fitted shifts.
    """

    def __init__(self, alpha_star=1.0, beta_star=1.0, half_length=40.0, n=2048, guess=(0.0, 0.0)):
        self.alpha_star = alpha_star
        self.beta_star = beta_star
        self.half_length = half_length
        self.n = n
        self.guess = guess

    def fit(self, X, y=None):
        """``y`` holds the sample times (default 0, 1, 2, ...)."""
        X = _rows(X, self.n)
        times = np.arange(len(X), dtype=float) if y is None else np.asarray(y, dtype=float)
        if times.shape != (len(X),):
            raise ValueError("one time per row required")
        g = Grid(self.half_length, self.n)
        shifts, dist, cur = [], [], tuple(self.guess)
        for row, t in zip(X, times):
            u = Field(g, row, realness_hint=True)
            a, b, _ = md.fit_shifts(u, self.alpha_star, self.beta_star, t, cur, tube_radius=np.inf)
            cur = (a, b)
            shifts.append(cur)
            dist.append(md.tube_distance(u, self.alpha_star, self.beta_star, t, cur))
        self.times_ = times
        self.shifts_ = np.array(shifts)
        self.tube_distance_ = np.array(dist)
        return self

    def transform(self, X):
        check_is_fitted(self, "shifts_")
        X = _rows(X, self.n)
        if len(X) != len(self.shifts_):
            raise ValueError("transform expects the rows used in fit")
        g = Grid(self.half_length, self.n)
        out = np.empty_like(X)
        for i, (row, t, (a, b)) in enumerate(zip(X, self.times_, self.shifts_)):
            p = md._params(self.alpha_star, self.beta_star, t, a, b)
            out[i] = row - md.pr._breather_values(g.nodes, p)
        return out
