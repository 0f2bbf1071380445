"""Least squares gradient boosting with small regression trees.

Depth counts splits, as gbm's interaction depth does: depth 1 trees are
stumps and give an additive model, depth 2 trees split twice and can
capture two-way interactions.
"""

from collections import namedtuple
import logging

import numpy as np
from sklearn.tree import DecisionTreeRegressor

logger = logging.getLogger(__name__)

MIN_OBSERVATIONS = 10
LEAF = -1


class BoostConfig(
    namedtuple("BoostConfig", ["depth", "shrinkage", "n_trees", "subsample", "min_leaf"])
):
    """Boosting settings.

    Args:
        depth: Splits per tree, 1 or 2.
        shrinkage: Learning rate in (0, 1].
        n_trees: Number of boosting rounds.
        subsample: Fraction of rows drawn without replacement for each tree.
        min_leaf: Smallest number of rows a leaf may hold.
    """

    __slots__ = ()

    def __new__(cls, depth=1, shrinkage=0.05, n_trees=1000, subsample=0.5, min_leaf=1):
        if depth not in (1, 2):
            raise ValueError("depth must be 1 or 2.")
        if not 0 < shrinkage <= 1 or not 0 < subsample <= 1:
            raise ValueError("shrinkage and subsample must lie in (0, 1].")
        if n_trees < 0 or min_leaf < 1:
            raise ValueError("n_trees must be >= 0 and min_leaf >= 1.")
        return super().__new__(cls, depth, shrinkage, n_trees, subsample, min_leaf)


class Tree:
    """Regression tree fitted by scikit-learn, viewed as parallel node arrays.

    Node k is a leaf when feature[k] == LEAF; otherwise rows with
    x[feature[k]] <= threshold[k] go to left[k] and the rest to right[k].

    Args:
        estimator: Fitted sklearn.tree.DecisionTreeRegressor.
    """

    def __init__(self, estimator):
        self.estimator = estimator
        nodes = estimator.tree_
        self.left = nodes.children_left.astype(int)
        self.right = nodes.children_right.astype(int)
        self.feature = np.where(self.left == LEAF, LEAF, nodes.feature).astype(int)
        self.threshold = np.where(self.left == LEAF, 0.0, nodes.threshold)
        self.value = nodes.value[:, 0, 0].astype(float)

    @property
    def n_splits(self):
        return int((self.feature != LEAF).sum())

    def predict(self, X):
        return self.estimator.predict(X)

    def to_dict(self):
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }


class BoostModel:
    """Fitted boosting model.

    Args:
        init: Mean of the training response.
        trees: List of Tree.
        config: BoostConfig used for fitting.
        n_features: Number of training columns.
        fitted: Training-set predictions tracked during fitting.
    """

    def __init__(self, init, trees, config, n_features, fitted=None):
        self.init = init
        self.trees = trees
        self.config = config
        self.n_features = n_features
        self.fitted = fitted

    def to_dict(self):
        return {
            "init": self.init,
            "config": self.config._asdict(),
            "trees": [tree.to_dict() for tree in self.trees],
        }


def grow_tree(X, r, depth, min_leaf=1):
    """Grow a tree with up to depth splits, best split first.

    Thresholds are midpoints between consecutive distinct values, and a
    split is made only if it lowers the squared error of r.
    """
    estimator = DecisionTreeRegressor(
        max_leaf_nodes=depth + 1, min_samples_leaf=min_leaf, random_state=0
    )
    return Tree(estimator.fit(X, r))


def l2boost_fit(d, config=None, seed=0):
    """Gradient boosting for squared error loss.

    Every round draws a subsample, grows a tree on the current residuals and
    adds it with weight config.shrinkage.

    Args:
        d: Dataset; trees split on its columns as given.
        config: BoostConfig.
        seed: Seed for the subsampling generator.

    Returns:
        A BoostModel.
    """
    config = config or BoostConfig()
    X, y = d.X, d.y
    n = len(y)
    if n < MIN_OBSERVATIONS:
        raise ValueError(f"boosting needs at least {MIN_OBSERVATIONS} observations, got {n}.")

    rng = np.random.default_rng(seed)
    draw = max(2 * config.min_leaf, int(np.floor(config.subsample * n)))
    init = float(y.mean())
    fitted = np.full(n, init)
    trees = []
    for _ in range(config.n_trees):
        if config.subsample < 1:
            rows = np.sort(rng.choice(n, size=min(draw, n), replace=False))
        else:
            rows = np.arange(n)
        tree = grow_tree(X[rows], y[rows] - fitted[rows], config.depth, config.min_leaf)
        fitted += config.shrinkage * tree.predict(X)
        trees.append(tree)

    logger.debug("boosted %d trees of depth %d", len(trees), config.depth)
    return BoostModel(init, trees, config, X.shape[1], fitted)


def _check_columns(m, X):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != m.n_features:
        raise ValueError(f"expected {m.n_features} columns, got shape {X.shape}")
    return X


def l2boost_predict(m, X):
    """init + shrinkage * sum of tree outputs."""
    X = _check_columns(m, X)
    prediction = np.full(X.shape[0], m.init)
    for tree in m.trees:
        prediction += m.config.shrinkage * tree.predict(X)
    return prediction


def l2boost_staged_predict(m, X):
    """Predictions after 0, 1, ..., len(m.trees) trees, one row per stage."""
    X = _check_columns(m, X)
    stages = np.empty((len(m.trees) + 1, X.shape[0]))
    stages[0] = m.init
    for k, tree in enumerate(m.trees, start=1):
        stages[k] = stages[k - 1] + m.config.shrinkage * tree.predict(X)
    return stages
