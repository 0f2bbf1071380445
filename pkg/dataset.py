"""Data ingestion, standardization and split planning for path algorithms."""

from collections import namedtuple
import hashlib
import itertools
import math
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.special import expit

# Columns count as centered/scaled when within this distance of the target.
STANDARD_TOL = 1e-10

SplitPlan = namedtuple("SplitPlan", ["train_indices", "test_indices", "seed", "fraction"])
FoldAssignment = namedtuple("FoldAssignment", ["fold_of", "k", "seed"])
SyntheticSpec = namedtuple("SyntheticSpec", ["n", "p", "beta_sd", "seed"])


class Standardization(
    namedtuple("Standardization", ["column_means", "column_scales", "y_mean"])
):
    """Centering and scaling applied to the raw columns of a dataset.

    Standardized values are `(x - column_means) / column_scales`, and the
    standardized response is `y - y_mean`.
    """

    __slots__ = ()

    @classmethod
    def identity(cls, p):
        """A record that leaves p columns untouched."""
        return cls(np.zeros(p), np.ones(p), 0.0)

    def apply(self, X):
        """Map raw covariates into standardized space."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.column_means):
            raise ValueError(
                f"expected {len(self.column_means)} columns, got shape {X.shape}"
            )
        return (X - self.column_means) / self.column_scales

    def to_raw(self, beta, intercept=0.0):
        """Express standardized coefficients on the raw covariate scale.

        Args:
            beta: Coefficients fitted on standardized columns.
            intercept: Intercept in standardized space (0 for centered
                continuous responses).

        Returns:
            A pair (raw_intercept, raw_beta) such that
            raw_intercept + X_raw @ raw_beta equals the standardized-space
            prediction plus y_mean.
        """
        beta = np.asarray(beta, dtype=float)
        raw_beta = beta / self.column_scales
        raw_intercept = self.y_mean + intercept - self.column_means @ raw_beta
        return float(raw_intercept), raw_beta


class Dataset:
    """Design matrix and continuous response.

    Args:
        X: n by p array of finite covariates.
        y: Length-n array of finite responses.
        column_names: Labels for the columns, defaults to x1..xp.
        transform: Standardization record describing how X and y relate to
            the raw data. Identity when omitted.
        standardized: Boolean, whether X (and y, for continuous responses)
            are in standardized form.
    """

    binary = False
    MIN_COLUMNS = 1

    def __init__(self, X, y, column_names=None, transform=None, standardized=False):
        X = np.array(X, dtype=float)
        y = np.array(y, dtype=float)
        if X.ndim != 2:
            raise ValueError("X must be a two dimensional array.")
        if y.shape != (X.shape[0],):
            raise ValueError(f"y has shape {y.shape}, expected ({X.shape[0]},)")
        if X.shape[0] < 2:
            raise DataError("at least two observations are required.")
        if X.shape[1] < self.MIN_COLUMNS:
            raise DataError(f"at least {self.MIN_COLUMNS} column(s) required.")
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise DataError("data contains non-finite values.")

        if column_names is None:
            column_names = [f"x{j + 1}" for j in range(X.shape[1])]
        if len(column_names) != X.shape[1]:
            raise ValueError("column_names must have one label per column.")

        self.X = X
        self.y = y
        self.column_names = list(column_names)
        self.transform = transform or Standardization.identity(X.shape[1])
        self.standardized = standardized

    def __repr__(self):
        return (
            f"{self.__class__.__name__}(n={self.n}, p={self.p},"
            f" standardized={self.standardized})"
        )

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def column_means(self):
        return self.transform.column_means

    @property
    def column_scales(self):
        return self.transform.column_scales

    @property
    def y_mean(self):
        return self.transform.y_mean

    def raw(self):
        """Return the unstandardized version of this dataset."""
        if not self.standardized:
            return self
        X = self.X * self.column_scales + self.column_means
        y = self.y + self.y_mean
        return self._like(X, y, self.column_names)

    def subset(self, indices):
        """Rows selected by indices, keeping the transform record."""
        indices = np.asarray(indices, dtype=int)
        return self.__class__(
            self.X[indices],
            self.y[indices],
            self.column_names,
            self.transform,
            self.standardized,
        )

    def select_columns(self, columns):
        """Columns selected by index, keeping their transform entries."""
        columns = np.asarray(columns, dtype=int)
        transform = Standardization(
            self.column_means[columns], self.column_scales[columns], self.y_mean
        )
        return self.__class__(
            self.X[:, columns],
            self.y,
            [self.column_names[j] for j in columns],
            transform,
            self.standardized,
        )

    def fingerprint(self):
        """Hex digest identifying the numeric content of the dataset."""
        digest = hashlib.sha256()
        digest.update(np.ascontiguousarray(self.X).tobytes())
        digest.update(np.ascontiguousarray(self.y).tobytes())
        return digest.hexdigest()

    def to_dict(self):
        """JSON-ready summary of the dataset."""
        return {
            "columns": self.column_names,
            "n": self.n,
            "p": self.p,
            "standardized": self.standardized,
            "binary": self.binary,
            "column_means": self.column_means.tolist(),
            "column_scales": self.column_scales.tolist(),
        }

    def _like(self, X, y, names, transform=None, standardized=False):
        return self.__class__(X, y, names, transform, standardized)


class BinaryDataset(Dataset):
    """Dataset whose response takes values in {0, 1}.

    The response is never centered, so y_mean stays 0 under standardization.
    An empty design (p = 0) is allowed for intercept-only models.
    """

    binary = True
    MIN_COLUMNS = 0

    def __init__(self, X, y, column_names=None, transform=None, standardized=False):
        super().__init__(X, y, column_names, transform, standardized)
        if not np.isin(self.y, (0.0, 1.0)).all():
            raise DataError("binary response must contain only 0 and 1.")


def load_csv(path, response_column, header=True, categorical=()):
    """Read a comma separated file into a Dataset or BinaryDataset.

    Columns where no cell is numeric are treated as categorical and one-hot
    encoded with the first (sorted) level dropped; so are the columns named in
    `categorical`. A column mixing numeric and non-numeric cells is an error.

    Args:
        path: Path to the CSV file.
        response_column: Label of the response column. Without a header the
            columns are labelled x1, x2, ... and an integer position may be
            given instead.
        header: Boolean, whether the first row holds column labels.
        categorical: Labels of columns to one-hot encode regardless of content.

    Returns:
        An unstandardized Dataset, or BinaryDataset when every response value
        is 0 or 1.

    Raises:
        FileNotFoundError: path does not exist.
        DataError: unparseable cell, unknown response column or a constant
            response.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such data file: {path}")

    frame = pd.read_csv(
        path,
        header=0 if header else None,
        dtype=str,
        keep_default_na=False,
        skipinitialspace=True,
        encoding="utf-8",
    )
    if not header:
        frame.columns = [f"x{j + 1}" for j in range(frame.shape[1])]
        if isinstance(response_column, int):
            response_column = frame.columns[response_column]
    frame.columns = [str(name).strip() for name in frame.columns]

    if response_column not in frame.columns:
        raise DataError(f"response column {response_column!r} not found in {path}")

    y = _numeric_column(frame[response_column], response_column)
    if np.ptp(y) == 0:
        raise DataError(f"response column {response_column!r} is constant.")

    blocks, names = [], []
    for name in frame.columns:
        if name == response_column:
            continue
        column = frame[name]
        if name in categorical or _is_categorical(column):
            dummies = pd.get_dummies(
                column.str.strip(), prefix=name, prefix_sep="=", drop_first=True, dtype=float
            )
            blocks.extend(dummies[label].to_numpy() for label in dummies.columns)
            names.extend(dummies.columns)
        else:
            blocks.append(_numeric_column(column, name))
            names.append(name)

    X = np.column_stack(blocks) if blocks else np.empty((len(y), 0))
    kind = BinaryDataset if np.isin(y, (0.0, 1.0)).all() else Dataset
    return kind(X, y, names)


def _is_categorical(column):
    return pd.to_numeric(column, errors="coerce").isna().all()


def _numeric_column(column, name):
    values = pd.to_numeric(column, errors="coerce").to_numpy(dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise DataError(
            f"cannot parse {column.iloc[row]!r} as a number at row {row + 1},"
            f" column {name!r}"
        )
    return values


def standardize(d):
    """Center every column and scale it to unit L2 norm.

    Continuous responses are centered too. The returned transform always
    refers to the raw data, so standardizing twice composes the records.

    Raises:
        DataError: A column is constant.
    """
    X = d.X
    means = X.mean(axis=0)
    centered = X - means
    scales = np.sqrt((centered ** 2).sum(axis=0))

    reference = np.maximum(1.0, np.abs(X).max(axis=0)) if d.p else np.ones(0)
    constant = scales <= 1e-12 * reference
    if constant.any():
        name = d.column_names[int(np.flatnonzero(constant)[0])]
        raise DataError(f"column {name!r} is constant and cannot be scaled.")

    X_std = centered / scales
    if d.binary:
        y_shift = 0.0
    else:
        y_shift = float(d.y.mean())
    y_std = d.y - y_shift

    old = d.transform
    transform = Standardization(
        old.column_means + old.column_scales * means,
        old.column_scales * scales,
        old.y_mean + y_shift,
    )
    return d._like(X_std, y_std, d.column_names, transform, True)


def is_standardized(d, tol=STANDARD_TOL):
    """Check the standardization invariants numerically."""
    if not d.standardized:
        return False
    if d.p and np.abs(d.X.mean(axis=0)).max() >= tol:
        return False
    if d.p and np.abs(np.sqrt((d.X ** 2).sum(axis=0)) - 1).max() >= tol:
        return False
    return d.binary or abs(d.y.mean()) < tol * max(1.0, np.abs(d.y).max())


def expand_two_way(d, squares=False):
    """Append all pairwise products x_i * x_j (i < j) to the main effects.

    Products are formed on the raw scale; the result is unstandardized.

    Args:
        d: A Dataset, standardized or not.
        squares: Boolean, whether to also append x_i * x_i columns (after the
            distinct pairs).

    Returns:
        A dataset with p + p(p-1)/2 columns (plus p when squares is set),
        interaction columns named "xi:xj".
    """
    raw = d.raw()
    names = list(raw.column_names)
    blocks = [raw.X]
    pairs = list(itertools.combinations(range(raw.p), 2))
    if squares:
        pairs.extend((j, j) for j in range(raw.p))

    if pairs:
        left, right = (np.array(idx) for idx in zip(*pairs))
        blocks.append(raw.X[:, left] * raw.X[:, right])
        names.extend(f"{names[i]}:{names[j]}" for i, j in pairs)

    return raw._like(np.hstack(blocks), raw.y, names)


def drop_constant_columns(d):
    """Remove columns with zero spread.

    Returns:
        A pair (dataset, kept) where kept holds the surviving column indices.
    """
    kept = np.flatnonzero(np.ptp(d.X, axis=0) > 0)
    if len(kept) == d.p:
        return d, kept
    return d.select_columns(kept), kept


def simulate_logistic(spec):
    """Draw a logistic regression sample with random coefficients.

    Covariates are i.i.d. standard normal, coefficients i.i.d.
    N(0, beta_sd^2) and responses Bernoulli with success probability
    1 / (1 + exp(-x_i . beta)). All draws come from numpy's PCG64 generator
    seeded with spec.seed.

    Returns:
        A pair (BinaryDataset, beta_true).
    """
    n, p, beta_sd, seed = spec
    if n < 2 or p < 1:
        raise ValueError("simulation needs n >= 2 and p >= 1.")
    if beta_sd <= 0:
        raise ValueError("beta_sd must be positive.")

    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    beta = rng.normal(0.0, beta_sd, size=p)
    y = (rng.random(n) < expit(X @ beta)).astype(float)
    return BinaryDataset(X, y), beta


def holdout_split(n, fraction, seed):
    """Randomly hold out round(fraction * n) observations, halves rounded up.

    Raises:
        ValueError: fraction outside (0, 1), or fewer than one test or two
            training observations would result.
    """
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie strictly between 0 and 1.")
    n_test = math.floor(fraction * n + 0.5)
    if n_test < 1 or n - n_test < 2:
        raise ValueError(
            f"holdout of {fraction} on {n} observations leaves"
            f" {n - n_test} training and {n_test} test rows."
        )

    order = np.random.default_rng(seed).permutation(n)
    return SplitPlan(np.sort(order[n_test:]), np.sort(order[:n_test]), seed, fraction)


def kfold_assign(n, k, seed):
    """Assign n observations to k folds whose sizes differ by at most one."""
    if not 2 <= k <= n:
        raise ValueError(f"number of folds must lie in [2, {n}], got {k}.")
    fold_of = np.empty(n, dtype=int)
    fold_of[np.random.default_rng(seed).permutation(n)] = np.arange(n) % k
    return FoldAssignment(fold_of, k, seed)


def split_fingerprint(plan, folds=None):
    """Hex digest identifying a split plan and, optionally, its folds."""
    digest = hashlib.sha256()
    digest.update(np.asarray(plan.train_indices, dtype=np.int64).tobytes())
    digest.update(b"|")
    digest.update(np.asarray(plan.test_indices, dtype=np.int64).tobytes())
    if folds is not None:
        digest.update(b"|")
        digest.update(np.asarray(folds.fold_of, dtype=np.int64).tobytes())
    return digest.hexdigest()


class DataError(Exception):
    pass
