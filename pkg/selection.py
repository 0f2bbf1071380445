"""Choosing how far along a path to go: Cp, k-fold cross-validation and
holdout evaluation."""

from collections import namedtuple
from concurrent.futures import ThreadPoolExecutor
import logging
import warnings

import numpy as np
from scipy import linalg

import boost
import dataset
import lars

logger = logging.getLogger(__name__)

DEFAULT_GRID_SIZE = 51

CpStep = namedtuple("CpStep", ["step", "rss", "df", "cp"])
EvalReport = namedtuple("EvalReport", ["mse", "mad", "n_test"])
PathFit = namedtuple("PathFit", ["beta", "transform", "kept", "path", "report"])


class CpReport(namedtuple("CpReport", ["per_step", "sigma2_hat", "selected_step"])):
    __slots__ = ()

    @property
    def cp(self):
        return np.array([step.cp for step in self.per_step])

    def to_dict(self):
        return {
            "per_step": [step._asdict() for step in self.per_step],
            "sigma2_hat": self.sigma2_hat,
            "selected_step": self.selected_step,
        }


class CVReport(
    namedtuple("CVReport", ["grid", "per_fold_loss", "mean_loss", "se_loss", "selected_t"])
):
    """Cross-validation losses over a grid.

    For path engines the grid holds shrinkage fractions t; for boosting it
    holds tree counts.
    """

    __slots__ = ()

    def to_dict(self):
        return {
            "grid": np.asarray(self.grid).tolist(),
            "per_fold_loss": np.asarray(self.per_fold_loss).tolist(),
            "mean_loss": np.asarray(self.mean_loss).tolist(),
            "se_loss": np.asarray(self.se_loss).tolist(),
            "selected_t": float(self.selected_t),
        }


def cp_curve(path, d):
    """Cp statistic at every recorded step of a path.

    Cp_k = RSS_k / sigma2 - n + 2 df_k with df_k the active set size plus
    one for the intercept, and sigma2 = RSS / (n - rank - 1) of the full
    least squares fit.

    Args:
        path: SolutionPath computed on d.
        d: The standardized dataset the path was computed on.

    Raises:
        ValueError: path was not computed on d.
        SelectionError: n <= p + 1, so sigma2 cannot be estimated.
    """
    if path.fingerprint != d.fingerprint():
        raise ValueError("path was computed on a different dataset.")
    n, p = d.X.shape
    if n <= p + 1:
        raise SelectionError(
            f"Cp needs n > p + 1 (n={n}, p={p}); use cross-validation instead."
        )

    coef, _, rank, _ = linalg.lstsq(d.X, d.y)
    rss_full = float(np.sum((d.y - d.X @ coef) ** 2))
    sigma2 = rss_full / (n - rank - 1)
    floor = (np.finfo(float).eps * np.linalg.norm(d.y)) ** 2 + np.finfo(float).tiny
    if sigma2 < floor:
        warnings.warn(
            f"residual variance {sigma2:.3e} is at rounding level; floored at {floor:.3e}.",
            RuntimeWarning,
        )
        sigma2 = floor

    per_step = []
    for segment, size in zip(path.segments, path.df):
        rss = float(np.sum((d.y - d.X @ segment.beta) ** 2))
        df = int(size) + 1
        per_step.append(CpStep(segment.step_index, rss, df, rss / sigma2 - n + 2 * df))

    selected = int(np.argmin([step.cp for step in per_step]))
    return CpReport(per_step, sigma2, selected)


def evaluate_holdout(predictions, y_test):
    """Mean squared error and mean absolute deviation of predictions."""
    predictions = np.asarray(predictions, dtype=float)
    y_test = np.asarray(y_test, dtype=float)
    if predictions.shape != y_test.shape or predictions.ndim != 1:
        raise ValueError(
            f"predictions {predictions.shape} and responses {y_test.shape} differ."
        )
    if not len(y_test):
        raise ValueError("at least one test observation is required.")
    error = predictions - y_test
    return EvalReport(float(np.mean(error ** 2)), float(np.mean(np.abs(error))), len(y_test))


def _as_mode(engine):
    return engine if isinstance(engine, lars.PathMode) else lars.PathMode(engine)


def _fit_path(d_raw, mode, drop_collinear):
    """Standardize the usable columns of d_raw and compute the path."""
    trimmed, kept = dataset.drop_constant_columns(d_raw)
    standard = dataset.standardize(trimmed)
    return standard, kept, lars.lars_path(standard, mode, drop_collinear)


def predict_fit(fit, X_raw):
    """Raw-scale predictions of a PathFit."""
    X_raw = X_raw.X if isinstance(X_raw, dataset.Dataset) else np.asarray(X_raw, dtype=float)
    return lars.predict(X_raw[:, fit.kept], fit.beta, fit.transform)


def fit_cp(d, engine=lars.LARS, drop_collinear=False):
    """Fit a path on d and keep the Cp-selected breakpoint."""
    standard, kept, path = _fit_path(d.raw(), _as_mode(engine), drop_collinear)
    report = cp_curve(path, standard)
    beta = path.segments[report.selected_step].beta.copy()
    return PathFit(beta, standard.transform, kept, path, report)


def _fold_order(folds):
    """Fold ids ordered by their smallest member, so reports do not depend
    on how folds are labelled."""
    first = [np.flatnonzero(folds.fold_of == i).min() for i in range(folds.k)]
    return list(np.argsort(first))


def _resolve_folds(n, k, seed, folds):
    if folds is None:
        return dataset.kfold_assign(n, k, seed)
    if folds.k != k or len(folds.fold_of) != n:
        raise ValueError("fold assignment does not match the data.")
    return folds


def _map(function, items, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(function, items))
    return [function(item) for item in items]


def cv_select(d, k, engine=lars.LARS, grid=None, seed=0, folds=None, workers=None,
              drop_collinear=False):
    """Select a shrinkage fraction t by k-fold cross-validation.

    Each fold's complement is standardized on its own, the path is computed
    there and squared error on the fold is measured at every t of the grid.

    Args:
        d: Dataset. Standardized input is mapped back to the raw scale first.
        k: Number of folds.
        engine: Path method name or PathMode.
        grid: Fractions of the terminal L1 norm, 51 equispaced values by
            default. Sorted before use.
        seed: Seed for the fold assignment when folds is None.
        folds: FoldAssignment to reuse.
        workers: Thread count for fitting folds concurrently.
        drop_collinear: Passed on to lars_path.

    Returns:
        A CVReport. Ties in mean loss go to the smaller t.

    Raises:
        SelectionError: The path failed on a fold; the message names it.
    """
    d = d.raw()
    mode = _as_mode(engine)
    grid = np.linspace(0.0, 1.0, DEFAULT_GRID_SIZE) if grid is None else np.sort(np.asarray(grid, dtype=float))
    if not grid.size or grid.min() < 0 or grid.max() > 1:
        raise ValueError("grid must be a nonempty subset of [0, 1].")
    folds = _resolve_folds(d.n, k, seed, folds)

    def fold_loss(i):
        test = folds.fold_of == i
        try:
            standard, kept, path = _fit_path(d.subset(np.flatnonzero(~test)), mode, drop_collinear)
        except (lars.PathError, dataset.DataError, ValueError, np.linalg.LinAlgError) as err:
            raise SelectionError(f"fold {i}: {err}") from err
        X_test, y_test = d.X[test][:, kept], d.y[test]
        return [
            np.mean((lars.predict(X_test, lars.coefficients_at(path, t), standard.transform) - y_test) ** 2)
            for t in grid
        ]

    losses = np.array(_map(fold_loss, _fold_order(folds), workers))
    mean_loss = losses.mean(axis=0)
    se_loss = losses.std(axis=0, ddof=1) / np.sqrt(k)
    selected = float(grid[int(np.argmin(mean_loss))])
    logger.debug("%s: cv selected t=%.3f", mode.method, selected)
    return CVReport(grid, losses, mean_loss, se_loss, selected)


def fit_cv(d, k, engine=lars.LARS, grid=None, seed=0, folds=None, workers=None,
           drop_collinear=False):
    """Fit a path on all of d at the cross-validated shrinkage fraction."""
    report = cv_select(d, k, engine, grid, seed, folds, workers, drop_collinear)
    standard, kept, path = _fit_path(d.raw(), _as_mode(engine), drop_collinear)
    beta = lars.coefficients_at(path, report.selected_t)
    return PathFit(beta, standard.transform, kept, path, report)


def cv_select_trees(d, k, config, seed=0, folds=None, workers=None):
    """Choose the number of boosting rounds by k-fold cross-validation.

    Uses staged predictions, so one model per fold covers every tree count
    up to config.n_trees.

    Returns:
        A CVReport whose grid is 0..n_trees and whose selected_t is the
        chosen tree count.
    """
    folds = _resolve_folds(d.n, k, seed, folds)

    def fold_loss(i):
        test = folds.fold_of == i
        train = d.subset(np.flatnonzero(~test))
        model = boost.l2boost_fit(train, config, seed=[seed, int(i)])
        stages = boost.l2boost_staged_predict(model, d.X[test])
        return np.mean((stages - d.y[test]) ** 2, axis=1)

    losses = np.array(_map(fold_loss, _fold_order(folds), workers))
    grid = np.arange(config.n_trees + 1)
    mean_loss = losses.mean(axis=0)
    se_loss = losses.std(axis=0, ddof=1) / np.sqrt(k)
    return CVReport(grid, losses, mean_loss, se_loss, int(grid[int(np.argmin(mean_loss))]))


class SelectionError(Exception):
    pass
