"""MAP estimation for L1 penalized logistic regression.

The log-likelihood is replaced by its second order Taylor expansion in the
linear predictor, and the resulting penalized quadratic is maximized one
coordinate at a time with the shooting algorithm. Each coordinate update is
a closed form soft threshold.

The maximized target is the log-posterior under independent double
exponential priors with hyperparameter gamma:

    sum_i a_i eta_i^2 + b_i eta_i + c_i + d log(sqrt(gamma) / 2)
        - sqrt(gamma) sum_j |beta_j|

where eta_i = x_i . beta and d counts the penalized coefficients.
"""

from collections import namedtuple
import logging
import warnings

import numpy as np
from scipy import linalg
from scipy.special import expit

import lalr

logger = logging.getLogger(__name__)

ZERO = "zero"
LEAST_SQUARES = "least_squares"

QuadraticProblem = namedtuple(
    "QuadraticProblem", ["a", "b", "c", "X", "gamma", "expansion_point", "penalized"]
)


class ShootingConfig(
    namedtuple(
        "ShootingConfig",
        ["start", "max_sweeps", "tol", "outer_max", "outer_tol", "record_trace"],
    )
):
    """Settings for the shooting solver.

    Args:
        start: ZERO or LEAST_SQUARES, where the first sweep starts.
        max_sweeps: Cap on full coordinate sweeps.
        tol: Sweeps stop once no coordinate moves more than tol.
        outer_max: Number of Taylor expansions in penalized_logistic. 1 gives
            the single-approximation estimate.
        outer_tol: Re-expansion stops once the accepted move is below this.
        record_trace: Boolean, whether shoot records the objective after
            every coordinate update.
    """

    __slots__ = ()

    def __new__(
        cls,
        start=ZERO,
        max_sweeps=10_000,
        tol=1e-9,
        outer_max=50,
        outer_tol=1e-7,
        record_trace=False,
    ):
        if start not in (ZERO, LEAST_SQUARES):
            raise ValueError(f"start must be {ZERO!r} or {LEAST_SQUARES!r}")
        if not tol > 0 or not outer_tol > 0:
            raise ValueError("tolerances must be positive.")
        if max_sweeps < 1 or outer_max < 1:
            raise ValueError("max_sweeps and outer_max must be at least 1.")
        return super().__new__(cls, start, max_sweeps, tol, outer_max, outer_tol, record_trace)


class ShootingResult(
    namedtuple(
        "ShootingResult",
        ["beta", "gamma", "sweeps", "outer_iters", "converged", "objective", "trace"],
    )
):
    """Outcome of a shooting solve. trace is None unless requested."""

    __slots__ = ()

    def to_dict(self):
        return {
            "beta": self.beta.tolist(),
            "gamma": self.gamma,
            "sweeps": self.sweeps,
            "outer_iters": self.outer_iters,
            "converged": self.converged,
            "objective": self.objective,
        }


class PenalizedLogisticResult(
    namedtuple(
        "PenalizedLogisticResult",
        ["beta", "intercept", "gamma", "sweeps", "outer_iters", "converged", "objective"],
    )
):
    """Penalized logistic fit. objective is the exact log-posterior."""

    __slots__ = ()

    def to_dict(self):
        return {
            "beta": self.beta.tolist(),
            "intercept": self.intercept,
            "gamma": self.gamma,
            "sweeps": self.sweeps,
            "outer_iters": self.outer_iters,
            "converged": self.converged,
            "objective": self.objective,
        }


def soft_threshold(value, threshold):
    """sign(value) * max(|value| - threshold, 0)"""
    return np.sign(value) * np.maximum(np.abs(value) - threshold, 0.0)


def taylor_expand(X, y, beta0, gamma=0.0, penalized=None):
    """Quadratic expansion of each log-likelihood term around x_i . beta0.

    Args:
        X: n by d design.
        y: Binary response.
        beta0: Expansion point.
        gamma: Prior hyperparameter, at least 0.
        penalized: Boolean mask of penalized coefficients, all by default.

    Returns:
        A QuadraticProblem whose terms a_i eta^2 + b_i eta + c_i match
        y_i eta - log(1 + exp(eta)) in value, slope and curvature at the
        expansion point.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    beta0 = np.asarray(beta0, dtype=float)
    if X.ndim != 2 or X.shape != (len(y), len(beta0)):
        raise ValueError(f"X has shape {X.shape}, expected ({len(y)}, {len(beta0)})")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("response must contain only 0 and 1.")
    if gamma < 0:
        raise ValueError("gamma must be non-negative.")

    eta0 = X @ beta0
    a = -0.5 * expit(eta0) * expit(-eta0)
    b = (y - expit(eta0)) - 2 * a * eta0
    c = (y * eta0 - np.logaddexp(0.0, eta0)) - a * eta0 ** 2 - b * eta0
    if penalized is None:
        penalized = np.ones(X.shape[1], dtype=bool)
    return QuadraticProblem(a, b, c, X, float(gamma), eta0, np.asarray(penalized, dtype=bool))


def _smooth(q, eta):
    return float(np.sum(q.a * eta ** 2 + q.b * eta + q.c))


def _objective(q, beta, eta):
    """Penalized quadratic without the constant prior term."""
    return _smooth(q, eta) - np.sqrt(q.gamma) * np.abs(beta[q.penalized]).sum()


def _prior_constant(gamma, d):
    if gamma == 0:
        warnings.warn(
            "gamma = 0 leaves d log(sqrt(gamma) / 2) undefined; omitted from the objective.",
            RuntimeWarning,
        )
        return 0.0
    return d * np.log(np.sqrt(gamma) / 2)


def penalized_objective(q, beta):
    """Value of the penalized quadratic target at beta.

    With gamma = 0 the constant prior term is undefined; it is left out and
    a RuntimeWarning is issued.
    """
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (q.X.shape[1],):
        raise ValueError(f"beta has shape {beta.shape}, expected ({q.X.shape[1]},)")
    return _objective(q, beta, q.X @ beta) + _prior_constant(q.gamma, int(q.penalized.sum()))


def coordinate_gradient(q, beta):
    """Gradient of the smooth quadratic part with respect to beta."""
    eta = q.X @ np.asarray(beta, dtype=float)
    return q.X.T @ (2 * q.a * eta + q.b)


def quadratic_maximizer(q):
    """Unpenalized maximizer of the quadratic, a weighted least squares fit."""
    hessian = -2 * (q.X * q.a[:, None]).T @ q.X
    rhs = q.X.T @ q.b
    try:
        return linalg.solve(hessian, rhs, assume_a="pos")
    except linalg.LinAlgError:
        return linalg.lstsq(hessian, rhs)[0]


def shoot(q, config=None, beta_start=None):
    """Maximize the penalized quadratic by cyclic coordinate ascent.

    Each update sets beta_j to the exact maximizer in that coordinate,
    soft(B_j, sqrt(gamma)) / (-2 A_j) with A_j = sum_i a_i x_ij^2 and B_j the
    linear coefficient of beta_j once its own contribution is removed.

    Args:
        q: QuadraticProblem.
        config: ShootingConfig.
        beta_start: Explicit starting point, overriding config.start.

    Returns:
        A ShootingResult. When max_sweeps runs out the last iterate is
        returned with converged False.

    Raises:
        UnboundedCoordinateError: A coordinate has no curvature but a
            gradient larger than the penalty.
    """
    config = config or ShootingConfig()
    X = q.X
    d = X.shape[1]
    root = np.sqrt(q.gamma)
    thresholds = np.where(q.penalized, root, 0.0)
    curvature = (q.a[:, None] * X ** 2).sum(axis=0)

    if beta_start is not None:
        beta = np.array(beta_start, dtype=float)
    elif config.start == LEAST_SQUARES:
        beta = quadratic_maximizer(q)
    else:
        beta = np.zeros(d)
    eta = X @ beta

    trace = [_objective(q, beta, eta)] if config.record_trace else None
    converged = False
    sweeps = 0
    for sweeps in range(1, config.max_sweeps + 1):
        largest = 0.0
        for j in range(d):
            x = X[:, j]
            linear = x @ (2 * q.a * eta + q.b) - 2 * curvature[j] * beta[j]
            if curvature[j] < 0:
                new = soft_threshold(linear, thresholds[j]) / (-2 * curvature[j])
            elif abs(linear) > thresholds[j]:
                raise UnboundedCoordinateError(f"coordinate {j} has no curvature.")
            else:
                new = 0.0
            change = new - beta[j]
            if change:
                eta += change * x
                beta[j] = new
                largest = max(largest, abs(change))
            if trace is not None:
                trace.append(_objective(q, beta, eta))
        if largest < config.tol:
            converged = True
            break
    else:
        logger.warning("shoot did not converge in %d sweeps", config.max_sweeps)

    logger.debug("shoot finished after %d sweeps", sweeps)
    objective = _objective(q, beta, eta)
    if q.gamma > 0:
        objective += _prior_constant(q.gamma, int(q.penalized.sum()))
    return ShootingResult(beta, q.gamma, sweeps, 1, converged, objective, trace)


def _log_posterior(Z, y, theta, root, penalized):
    return lalr._loglik(Z @ theta, y) - root * np.abs(theta[penalized]).sum()


def penalized_logistic(d, gamma, config=None):
    """L1 penalized logistic regression with an unpenalized intercept.

    Expands the log-likelihood around the current estimate, maximizes the
    penalized quadratic with shoot, and repeats up to config.outer_max times.
    Each move is damped by step halving so the exact log-posterior never
    decreases.

    Args:
        d: BinaryDataset. The intercept is an extra all-ones column.
        gamma: Prior hyperparameter; the penalty slope is sqrt(gamma).
        config: ShootingConfig.

    Returns:
        A PenalizedLogisticResult.

    Raises:
        lalr.SeparationError: gamma = 0 and the likelihood has no finite
            maximizer.
    """
    if gamma < 0:
        raise ValueError("gamma must be non-negative.")
    if not d.binary:
        raise TypeError("penalized_logistic needs a BinaryDataset.")
    config = config or ShootingConfig()
    y = d.y
    Z = np.column_stack([np.ones(d.n), d.X])
    if gamma == 0 and lalr.is_separated(Z, y):
        raise lalr.SeparationError("the likelihood has no finite maximizer; the data are separated.")
    penalized = np.arange(d.p + 1) > 0
    root = np.sqrt(gamma)

    theta = np.zeros(d.p + 1)
    theta[0] = lalr.init_intercept(y)
    value = _log_posterior(Z, y, theta, root, penalized)
    sweeps, converged, outer = 0, False, 0

    for outer in range(1, config.outer_max + 1):
        q = taylor_expand(Z, y, theta, gamma, penalized)
        inner = shoot(q, config, beta_start=theta if outer > 1 else None)
        sweeps += inner.sweeps
        if config.outer_max == 1:
            theta = inner.beta
            value = _log_posterior(Z, y, theta, root, penalized)
            break

        step = inner.beta - theta
        t = 1.0
        while t > 1e-10:
            candidate = theta + t * step
            candidate_value = _log_posterior(Z, y, candidate, root, penalized)
            if candidate_value >= value - 1e-13 * (1 + abs(value)):
                break
            t *= 0.5
        else:
            converged = True
            break

        move = np.abs(t * step).max(initial=0.0)
        theta, value = candidate, candidate_value
        logger.debug("outer %d: log-posterior %.12g, move %.3e", outer, value, move)
        if move < config.outer_tol:
            converged = True
            break

    if config.outer_max == 1:
        converged = inner.converged
    elif not converged:
        logger.warning("penalized_logistic stopped after %d expansions", config.outer_max)
    objective = value + (_prior_constant(gamma, d.p) if gamma > 0 else 0.0)
    return PenalizedLogisticResult(
        theta[1:], float(theta[0]), float(gamma), sweeps, outer, converged, objective
    )


class UnboundedCoordinateError(Exception):
    pass
