import os
from pathlib import Path

import numpy as np
import pytest

import dataset


def _regression(seed, n=40, p=6, noise=1.0, coef=None):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    beta = rng.standard_normal(p) if coef is None else np.asarray(coef, dtype=float)
    y = X @ beta + noise * rng.standard_normal(n)
    return dataset.Dataset(X, y)


@pytest.fixture
def regression_factory():
    """Returns a function building raw Gaussian regression datasets."""
    return _regression


@pytest.fixture
def standardized_regression():
    """A standardized 40 x 6 regression problem with unit noise."""
    return dataset.standardize(_regression(7))


@pytest.fixture
def orthonormal_dataset():
    """Centered orthonormal columns and a centered response."""
    rng = np.random.default_rng(3)
    raw = rng.standard_normal((30, 4))
    Q, _ = np.linalg.qr(raw - raw.mean(axis=0))
    y = Q @ np.array([5.0, -3.0, 2.0, 0.5]) + 0.1 * rng.standard_normal(30)
    d = dataset.Dataset(Q, y)
    return dataset.standardize(d)


@pytest.fixture
def logistic_data():
    """A standardized simulated logistic sample, n = 200, p = 4."""
    raw, _ = dataset.simulate_logistic(dataset.SyntheticSpec(200, 4, 1.0, 11))
    return dataset.standardize(raw)


@pytest.fixture
def csv_file(tmp_path):
    """Writes text to a CSV file in a temporary directory."""

    def write(text, name="data.csv"):
        target = tmp_path / name
        target.write_text(text, encoding="utf-8")
        return target

    return write


@pytest.fixture
def diabetes_csv():
    """Path to diabetes.csv under $LEASTANGLE_DATA_DIR, skipping when absent."""
    target = Path(os.environ.get("LEASTANGLE_DATA_DIR", ".")) / "diabetes.csv"
    if not target.is_file():
        pytest.skip("diabetes.csv not available; set LEASTANGLE_DATA_DIR")
    return target
