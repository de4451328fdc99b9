"""Lasso by cyclic coordinate descent, with warm-started paths and K-fold tuning.

The objective is ``(1/2n) ||y - b0 - X b||^2 + lam * sum_j s_j |b_j|`` where
``s_j`` is the population standard deviation of column j. Equivalently the
solver works on standardized columns with an unpenalized intercept and maps
coefficients back to the original column scale. Constant columns are dropped
from the problem and get coefficient 0.

Convergence: a full sweep in which no standardized coefficient moves by more
than ``tol * sd(y)``. Measuring the change in units of the response spread
keeps the criterion meaningful when y is in the thousands.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numba
import numpy as np

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITER = 10_000


class ConvergenceWarning(UserWarning):
    pass


@dataclass
class LassoFit:
    intercept: float
    coefficients: np.ndarray
    lam: float
    x_mean: np.ndarray
    x_scale: np.ndarray
    n_iter: int = 0
    converged: bool = True
    objective_trace: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def selected(self) -> np.ndarray:
        return np.flatnonzero(self.coefficients)

    def predict(self, X) -> np.ndarray:
        return self.intercept + np.asarray(X, dtype=np.float64) @ self.coefficients


@dataclass
class CvResult:
    lambda_path: np.ndarray
    cv_mean: np.ndarray
    cv_se: np.ndarray
    chosen_lambda: float
    rule: str
    fit: LassoFit = field(repr=False)
    index_min: int = 0
    index_chosen: int = 0


@numba.njit(cache=True, nogil=True)
def _cd(G, c, yy, lam, b, tol, max_iter, trace):
    """Coordinate descent on the Gram form; ``b`` is updated in place.

    Sweeps alternate between the current active set and a full pass; the
    solve stops once a full pass moves no coefficient by ``tol`` or more.
    """
    M = c.shape[0]
    Gb = np.zeros(M)
    for k in range(M):
        if b[k] != 0.0:
            for j in range(M):
                Gb[j] += G[j, k] * b[k]
    active = np.empty(M, np.int64)
    n_sweeps = 0
    full = True
    while n_sweeps < max_iter:
        max_delta = 0.0
        n_act = 0
        for j in range(M):
            if full or b[j] != 0.0:
                active[n_act] = j
                n_act += 1
        for a in range(n_act):
            j = active[a]
            gjj = G[j, j]
            if gjj <= 0.0:
                continue
            z = c[j] - Gb[j] + gjj * b[j]
            if z > lam:
                new = (z - lam) / gjj
            elif z < -lam:
                new = (z + lam) / gjj
            else:
                new = 0.0
            d = new - b[j]
            if d != 0.0:
                for k in range(M):
                    Gb[k] += d * G[k, j]
                b[j] = new
                if abs(d) > max_delta:
                    max_delta = abs(d)
        l1 = 0.0
        quad = 0.0
        lin = 0.0
        for j in range(M):
            l1 += abs(b[j])
            quad += b[j] * Gb[j]
            lin += c[j] * b[j]
        trace[n_sweeps] = 0.5 * yy - lin + 0.5 * quad + lam * l1
        n_sweeps += 1
        if max_delta < tol:
            if full:
                return n_sweeps, True
            full = True
        else:
            full = False
    return n_sweeps, False


class _Problem:
    """Standardized sufficient statistics for one (design, y) pair."""

    def __init__(self, design, y):
        X = np.asarray(design, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64).ravel()
        if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[0] < 1:
            raise ValueError(f"bad lasso shapes design={X.shape}, y={y.shape}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("lasso inputs must be finite")
        n, M = X.shape
        self.n, self.M = n, M
        self.x_mean = X.mean(axis=0)
        self.y_mean = float(y.mean())
        varying = np.ptp(X, axis=0) > 0 if n > 0 else np.zeros(M, bool)
        Xc = X - self.x_mean
        scale = np.sqrt(np.mean(Xc ** 2, axis=0))
        scale[~varying] = 0.0
        self.x_scale = scale
        safe = np.where(varying, scale, 1.0)
        Xs = Xc / safe
        Xs[:, ~varying] = 0.0
        yc = y - self.y_mean
        self.G = np.ascontiguousarray(Xs.T @ Xs / n)
        self.c = Xs.T @ yc / n
        self.yy = float(yc @ yc / n)
        self.y_scale = float(np.sqrt(self.yy)) if self.yy > 0 else 1.0

    @property
    def lambda_max(self) -> float:
        return float(np.max(np.abs(self.c))) if self.M else 0.0

    def objective(self, b, lam) -> float:
        return 0.5 * self.yy - self.c @ b + 0.5 * b @ self.G @ b + lam * np.abs(b).sum()

    def _active_set_step(self, b, lam) -> bool:
        """Jump to the exact minimiser for the current support and signs, if valid.

        Coordinate descent crawls when tree columns are nearly collinear. With
        the support fixed the lasso is a linear system. If the solution flips a
        sign we stop on the segment where the first coefficient hits zero; the
        sign-restricted objective is a convex quadratic minimised at the end of
        the segment, so the step still descends. The next full sweep has to
        confirm convergence either way.
        """
        act = np.flatnonzero(b)
        if act.size == 0:
            return False
        s = np.sign(b[act])
        try:
            x = np.linalg.solve(self.G[np.ix_(act, act)], self.c[act] - lam * s)
        except np.linalg.LinAlgError:
            return False
        if not np.all(np.isfinite(x)):
            return False
        cur = b[act]
        flips = np.sign(x) != s
        zero_at = None
        if np.any(flips):
            ts = cur[flips] / (cur[flips] - x[flips])
            t = float(ts.min())
            zero_at = act[flips][int(np.argmin(ts))]
            x = cur + t * (x - cur)
        trial = np.zeros_like(b)
        trial[act] = x
        if zero_at is not None:
            trial[zero_at] = 0.0
            trial[act[np.sign(x) != s]] = 0.0
        if self.objective(trial, lam) > self.objective(b, lam):
            return False
        b[:] = trial
        return True

    def solve(self, lam, b, tol, max_iter, chunk=10):
        trace = np.empty(max_iter)
        done = 0
        ok = False
        while done < max_iter:
            step = min(chunk, max_iter - done)
            n, ok = _cd(self.G, self.c, self.yy, float(lam), b, float(tol) * self.y_scale, step,
                      trace[done:])
            done += n
            if ok:
                break
            self._active_set_step(b, lam)
        return done, ok, trace[:done].copy()

    def to_fit(self, b, lam, n_iter, ok, trace) -> LassoFit:
        safe = np.where(self.x_scale > 0, self.x_scale, 1.0)
        coef = np.where(self.x_scale > 0, b / safe, 0.0)
        intercept = self.y_mean - float(self.x_mean @ coef)
        return LassoFit(intercept, coef, float(lam), self.x_mean.copy(), self.x_scale.copy(),
                        n_iter, ok, trace)


def _warn_unconverged(lam, max_iter):
    warnings.warn(f"lasso did not converge at lambda={lam:.4g} within {max_iter} sweeps",
                  ConvergenceWarning, stacklevel=3)


def fit(design, y, lam: float, tol: float = DEFAULT_TOL,
        max_iter: int = DEFAULT_MAX_ITER) -> LassoFit:
    """Solve the lasso at a single ``lam`` from a zero start.

    An unconverged solve still returns a usable fit with ``converged=False``.
    """
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    prob = _Problem(design, y)
    b = np.zeros(prob.M)
    n_iter, ok, trace = prob.solve(lam, b, tol, max_iter)
    if not ok:
        _warn_unconverged(lam, max_iter)
    return prob.to_fit(b, lam, n_iter, ok, trace)


def lambda_grid(lam_max: float, n_lambdas: int, lambda_min_ratio: float) -> np.ndarray:
    if n_lambdas < 1:
        raise ValueError("n_lambdas must be >= 1")
    if n_lambdas == 1:
        return np.array([lam_max])
    return lam_max * np.geomspace(1.0, lambda_min_ratio, n_lambdas)


def _default_ratio(n, M):
    return 1e-4 if n > M else 1e-2


def _path(prob: _Problem, lambdas, tol, max_iter) -> List[LassoFit]:
    b = np.zeros(prob.M)
    fits = []
    for lam in lambdas:
        n_iter, ok, trace = prob.solve(lam, b, tol, max_iter)
        if not ok:
            _warn_unconverged(lam, max_iter)
        fits.append(prob.to_fit(b.copy(), lam, n_iter, ok, trace))
    return fits


def fit_path(design, y, n_lambdas: int = 100, lambda_min_ratio: Optional[float] = None,
             lambdas=None, tol: float = DEFAULT_TOL,
             max_iter: int = DEFAULT_MAX_ITER) -> List[LassoFit]:
    """Warm-started fits along a geometric grid from lambda_max downwards."""
    prob = _Problem(design, y)
    if lambdas is None:
        ratio = _default_ratio(prob.n, prob.M) if lambda_min_ratio is None else lambda_min_ratio
        lambdas = lambda_grid(prob.lambda_max, n_lambdas, ratio)
    return _path(prob, lambdas, tol, max_iter)


def fold_ids(n: int, n_folds: int, seed) -> np.ndarray:
    if not 2 <= n_folds <= n:
        raise ValueError(f"n_folds must lie in [2, n={n}], got {n_folds}")
    return np.random.default_rng(seed).permutation(np.arange(n) % n_folds)


def cv_tune(design, y, n_folds: int = 10, n_lambdas: int = 100, rule: str = "one_se",
            seed=0, lambda_min_ratio: Optional[float] = None, tol: float = DEFAULT_TOL,
            max_iter: int = DEFAULT_MAX_ITER) -> CvResult:
    """Choose lambda by K-fold cross-validated held-out MSE.

    ``rule="min"`` takes the minimiser; ``rule="one_se"`` takes the largest
    lambda whose mean error is within one standard error of the minimum. The
    returned ``fit`` is the full-data path solution at the chosen lambda.
    """
    if rule not in ("min", "one_se"):
        raise ValueError(f"unknown rule {rule!r}")
    X = np.asarray(design, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    full = _Problem(X, y)
    ratio = _default_ratio(full.n, full.M) if lambda_min_ratio is None else lambda_min_ratio
    lambdas = lambda_grid(full.lambda_max, n_lambdas, ratio)
    full_fits = _path(full, lambdas, tol, max_iter)

    folds = fold_ids(full.n, n_folds, seed)
    errs = np.empty((n_folds, len(lambdas)))
    for k in range(n_folds):
        test = folds == k
        fits = _path(_Problem(X[~test], y[~test]), lambdas, tol, max_iter)
        Xt, yt = X[test], y[test]
        for i, f in enumerate(fits):
            r = yt - f.predict(Xt)
            errs[k, i] = r @ r / len(r)
    cv_mean = errs.mean(axis=0)
    cv_se = errs.std(axis=0, ddof=1) / np.sqrt(n_folds)
    i_min = int(np.argmin(cv_mean))
    if rule == "min":
        i_pick = i_min
    else:
        # lambdas descend, so the first qualifying index is the largest lambda
        i_pick = int(np.flatnonzero(cv_mean <= cv_mean[i_min] + cv_se[i_min])[0])
    return CvResult(lambdas, cv_mean, cv_se, float(lambdas[i_pick]), rule,
                    full_fits[i_pick], i_min, i_pick)


def objective(fit: LassoFit, design, y) -> float:
    """Objective value of ``fit`` on the data, in the normalization used by the solver."""
    X = np.asarray(design, dtype=np.float64)
    r = np.asarray(y, dtype=np.float64) - fit.predict(X)
    return float(r @ r / (2 * len(r)) + fit.lam * np.sum(fit.x_scale * np.abs(fit.coefficients)))


def kkt_violation(fit: LassoFit, design, y) -> float:
    """Largest KKT violation in standardized coordinates (0 at an exact optimum)."""
    X = np.asarray(design, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = len(y)
    r = y - fit.predict(X)
    varying = fit.x_scale > 0
    Xs = (X[:, varying] - fit.x_mean[varying]) / fit.x_scale[varying]
    grad = -(Xs.T @ r) / n
    b = fit.coefficients[varying] * fit.x_scale[varying]
    active = b != 0
    v_act = np.abs(grad[active] + fit.lam * np.sign(b[active]))
    v_inact = np.abs(grad[~active]) - fit.lam
    worst = max(v_act.max(initial=0.0), v_inact.max(initial=0.0))
    # intercept stationarity
    return max(worst, abs(r.mean()))
