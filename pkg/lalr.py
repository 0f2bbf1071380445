"""Least angle logistic regression.

The path starts from the intercept-only fit f = log(ybar / (1 - ybar)) and
brings covariates in by the size of their score x_j . (y - p(f)), the
directional derivative of the log-likelihood along x_j. Between entries the
active covariates keep equal absolute scores, and the step ends when the
strongest inactive score catches up. The path ends at the maximum
likelihood estimate.

Incremental forward stagewise and a Newton-Raphson fit are provided for
comparison.
"""

from collections import namedtuple
import logging

import numpy as np
from scipy import linalg
from scipy.optimize import brentq, linprog
from scipy.special import expit

import dataset
from lars import ADDED, STEP, TERMINAL, Event

logger = logging.getLogger(__name__)

# Scores below this magnitude are treated as zero by select_covariate.
SELECT_TOL = 1e-10
# The path is complete once every score is below SCORE_TOL_FACTOR * n.
SCORE_TOL_FACTOR = 1e-8
# Residual tolerance of the tie equation in refine_step.
STEP_TOL = 1e-10
# Newton solves stop once the gradient is below NEWTON_TOL_FACTOR * n.
NEWTON_TOL_FACTOR = 1e-12
# Relative size of the improving direction that is_separated accepts.
SEPARATION_TOL = 1e-7

# Why a logistic path stopped
CONVERGED = "converged"
EPSILON_LIMITED = "epsilon_limited"
SEPARATED = "separated"
STEP_CAP = "step_cap"
NOT_CONVERGED = "not_converged"

LogisticPathState = namedtuple(
    "LogisticPathState",
    [
        "step_count",
        "f",
        "intercept",
        "beta",
        "active_set",
        "signs",
        "log_lik",
        "max_score",
        "event",
    ],
)


class LogisticPathConfig(
    namedtuple(
        "LogisticPathConfig",
        ["max_steps", "score_tol", "points_per_segment", "record_every"],
    )
):
    """Settings for the logistic path algorithms.

    Args:
        max_steps: Cap on the number of covariate entries.
        score_tol: Scores below this count as zero. Defaults to 1e-8 * n.
        points_per_segment: Extra states sampled inside every least angle
            segment (0 records breakpoints only).
        record_every: Stagewise records a state at least every this many
            increments.
    """

    __slots__ = ()

    def __new__(cls, max_steps=1000, score_tol=None, points_per_segment=0, record_every=100):
        if max_steps < 0 or points_per_segment < 0:
            raise ValueError("invalid logistic path configuration.")
        return super().__new__(cls, max_steps, score_tol, points_per_segment, record_every)


class LogisticPath:
    """Recorded states of a logistic coefficient path.

    Args:
        states: Ordered list of LogisticPathState records.
        converged_to_mle: Boolean, whether the final scores passed the score
            tolerance, so the path ended at the maximum likelihood estimate.
        transform: Standardization record of the data, used to report
            coefficients on the raw scale.
        stop_reason: One of CONVERGED, EPSILON_LIMITED, SEPARATED, STEP_CAP
            or NOT_CONVERGED.
    """

    def __init__(self, states, converged_to_mle, transform=None, stop_reason=None):
        self.states = states
        self.converged_to_mle = converged_to_mle
        self.transform = transform
        self.stop_reason = stop_reason or (CONVERGED if converged_to_mle else NOT_CONVERGED)

    def __len__(self):
        return len(self.states)

    def __iter__(self):
        return iter(self.states)

    @property
    def betas(self):
        return np.array([state.beta for state in self.states])

    @property
    def final(self):
        return self.states[-1]

    def raw_coefficients(self):
        """Per-state (intercept, beta) on the raw covariate scale."""
        transform = self.transform or dataset.Standardization.identity(
            len(self.states[0].beta)
        )
        return [transform.to_raw(s.beta, s.intercept) for s in self.states]

    def to_dict(self):
        return {
            "states": [
                {
                    "step": state.step_count,
                    "event": state.event._asdict(),
                    "beta": state.beta.tolist(),
                    "intercept": state.intercept,
                    "log_lik": state.log_lik,
                    "active": [int(j) for j in state.active_set],
                }
                for state in self.states
            ],
            "converged_to_mle": self.converged_to_mle,
            "stop_reason": self.stop_reason,
        }


def _weights(f):
    # p(1 - p) without cancellation for large |f|
    return expit(f) * expit(-f)


def _loglik(f, y):
    return float(np.sum(y * f - np.logaddexp(0.0, f)))


def _check_binary(y):
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("response must contain only 0 and 1.")


def log_likelihood(X, y, beta, intercept=0.0):
    """Logistic log-likelihood sum_i y_i f_i - log(1 + exp(f_i)) with
    f = intercept + X @ beta.

    Raises:
        ValueError: y is not binary or the dimensions disagree.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if X.shape != (len(y), len(beta)):
        raise ValueError(f"X has shape {X.shape}, expected ({len(y)}, {len(beta)})")
    _check_binary(y)
    return _loglik(intercept + X @ beta, y)


def init_intercept(y):
    """Intercept-only maximum likelihood estimate log(ybar / (1 - ybar))."""
    ybar = float(np.mean(y))
    if not 0 < ybar < 1:
        raise ValueError(f"response mean {ybar} leaves no finite intercept.")
    return float(np.log(ybar / (1 - ybar)))


def score(X, y, f):
    """Directional derivatives x_j . (y - p(f)) of the log-likelihood."""
    return np.asarray(X, dtype=float).T @ (np.asarray(y, dtype=float) - expit(f))


def is_separated(Z, y, tol=SEPARATION_TOL):
    """Whether the log-likelihood on design Z has no finite maximizer.

    Solves a linear program for a direction v with (2 y_i - 1) z_i . v >= 0
    on every row and > 0 on some row. Along such a direction the
    log-likelihood rises without bound, which covers complete and
    quasi-complete separation.
    """
    Z = np.asarray(Z, dtype=float)
    if not Z.size:
        return False
    signed = (2 * np.asarray(y, dtype=float) - 1)[:, None] * Z
    result = linprog(
        -signed.sum(axis=0),
        A_ub=-signed,
        b_ub=np.zeros(len(signed)),
        bounds=[(-1.0, 1.0)] * Z.shape[1],
        method="highs",
    )
    if result.status != 0:
        logger.warning("separation check failed: %s", result.message)
        return False
    return -result.fun > tol * max(1.0, np.abs(signed).sum(axis=0).max())


def select_covariate(g, excluded=(), tol=SELECT_TOL):
    """Pick the covariate with the largest absolute score.

    Indices are 0-based and exact ties go to the lowest index.

    Returns:
        A pair (index, sign), or None when every eligible score is below tol.
    """
    magnitude = np.abs(np.asarray(g, dtype=float))
    magnitude[list(excluded)] = -np.inf
    if not magnitude.size or magnitude.max() < tol:
        return None
    j = int(np.argmax(magnitude))
    return j, 1 if g[j] > 0 else -1


def linearized_step(X, y, f, j_star, s_star, j2, s2, direction=None):
    """First order step at which the signed score of the runner-up j2 meets
    that of the leader j_star.

    The linear predictor moves along f + alpha * u, with u = x_j* unless a
    direction is given.

    Returns:
        The step (s* x_j* - s2 x_j2) . (y - p) / (s* x_j* - s2 x_j2) . (p(1-p) u).

    Raises:
        StepError: The denominator vanishes.
    """
    if j_star == j2:
        raise ValueError("leader and runner-up must differ.")
    X = np.asarray(X, dtype=float)
    u = X[:, j_star] if direction is None else np.asarray(direction, dtype=float)
    v = s_star * X[:, j_star] - s2 * X[:, j2]
    weighted = _weights(f) * u
    numerator = v @ (np.asarray(y, dtype=float) - expit(f))
    denominator = v @ weighted
    if abs(denominator) <= 1e-12 * np.linalg.norm(v) * np.linalg.norm(weighted):
        raise StepError("linearized step has a vanishing denominator.")
    return float(numerator / denominator)


def refine_step(X, y, f, j_star, s_star, j2=None, s2=None, alpha0=0.0, tol=STEP_TOL,
                max_iter=100, direction=None):
    """Exact step at which the runner-up ties the leader.

    Iterates the linearized step from alpha0, falling back to bisection
    whenever an iterate leaves the bracket between 0 and the optimum along
    the line.

    Args:
        X, y, f: Design, binary response and current linear predictor.
        j_star, s_star: Leading covariate and the sign of its score.
        j2, s2: Runner-up covariate and its sign. When j2 is None the
            optimum along the line is returned.
        alpha0: Starting step, usually from linearized_step.
        tol: Tolerance on the tie residual.
        direction: Move of the linear predictor per unit step, x_j* by
            default.

    Returns:
        The step alpha. If the runner-up never ties before the optimum
        along the line, that optimum is returned.

    Raises:
        SeparationError: The log-likelihood is unbounded along the line.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    f = np.asarray(f, dtype=float)
    u = X[:, j_star] if direction is None else np.asarray(direction, dtype=float)
    alpha_max = _line_optimum(u, y, f)
    if j2 is None:
        return alpha_max

    v = s_star * X[:, j_star] - s2 * X[:, j2]

    def tie(alpha):
        return v @ (y - expit(f + alpha * u))

    def tie_slope(alpha):
        return -(v @ (_weights(f + alpha * u) * u))

    if abs(tie(alpha0)) < tol:
        return float(alpha0)
    if tie(alpha_max) > 0:
        return alpha_max

    positive, negative = 0.0, alpha_max
    low, high = sorted((positive, negative))
    alpha = alpha0 if low < alpha0 < high else 0.5 * (low + high)
    for _ in range(max_iter):
        value = tie(alpha)
        if abs(value) < tol:
            return float(alpha)
        if value > 0:
            positive = alpha
        else:
            negative = alpha
        low, high = sorted((positive, negative))
        if high - low <= 4 * np.finfo(float).eps * max(1.0, abs(alpha)):
            return float(alpha)
        slope = tie_slope(alpha)
        candidate = alpha - value / slope if slope != 0 else np.nan
        alpha = candidate if low < candidate < high else 0.5 * (low + high)

    logger.warning("refine_step stopped after %d iterations", max_iter)
    return float(alpha)


def _line_optimum(u, y, f):
    """Maximizer of the log-likelihood along f + alpha * u."""

    def gradient(alpha):
        return u @ (y - expit(f + alpha * u))

    start = gradient(0.0)
    if start == 0:
        return 0.0
    direction = 1.0 if start > 0 else -1.0
    # Bounded along the ray only if some row pulls back against it.
    if np.all(direction * (2 * y - 1) * u >= 0):
        raise SeparationError("log-likelihood is unbounded along the line.")
    curvature = u @ (_weights(f) * u)
    reach = abs(start) / curvature if curvature > 0 else 1.0
    while direction * gradient(direction * reach) > 0:
        reach *= 2
    low, high = sorted((0.0, direction * reach))
    return float(brentq(gradient, low, high, xtol=1e-15, maxiter=500))


def _failure(Z, y, message):
    if is_separated(Z, y):
        return SeparationError(f"{message}; the data are separated.")
    return ConvergenceError(message)


def _newton(Z, y, theta, target=None, tol=1e-10, max_iter=200):
    """Solve Z.T (y - p(Z theta)) = target by Newton-Raphson.

    Maximizes the concave log-likelihood minus target . theta. A step is
    halved until the objective does not decrease, or, once objective
    differences are at rounding level, until the gradient shrinks.

    Raises:
        SeparationError: Newton failed and the data on Z are separated.
        ConvergenceError: Newton failed on data that are not separated.
    """
    if target is None:
        target = np.zeros(Z.shape[1])
    theta = np.array(theta, dtype=float)
    eta = Z @ theta
    value = _loglik(eta, y) - target @ theta
    gradient = Z.T @ (y - expit(eta)) - target

    for _ in range(max_iter):
        size = np.abs(gradient).max(initial=0.0)
        if size < tol:
            return theta
        hessian = (Z * _weights(eta)[:, None]).T @ Z
        try:
            step = linalg.solve(hessian, gradient, assume_a="pos")
        except linalg.LinAlgError:
            raise _failure(Z, y, "information matrix is singular") from None

        slack = 1e-13 * (1 + abs(value))
        t = 1.0
        while t > 1e-10:
            candidate = theta + t * step
            candidate_eta = Z @ candidate
            candidate_value = _loglik(candidate_eta, y) - target @ candidate
            candidate_gradient = Z.T @ (y - expit(candidate_eta)) - target
            if candidate_value > value + slack:
                break
            if candidate_value >= value - slack and np.abs(candidate_gradient).max() < size:
                break
            t *= 0.5
        else:
            raise _failure(Z, y, f"Newton-Raphson stalled at gradient {size:.3e}")
        theta, eta, value, gradient = candidate, candidate_eta, candidate_value, candidate_gradient

    raise _failure(Z, y, f"Newton-Raphson did not converge in {max_iter} iterations")


def mle_logistic(d, tol=1e-10, max_iter=200):
    """Maximum likelihood logistic fit with an unpenalized intercept.

    Returns:
        A pair (beta, intercept) in the coordinates of d, with every score
        below tol.

    Raises:
        SeparationError: The likelihood has no finite maximizer.
        ConvergenceError: Newton-Raphson failed on non-separated data.
    """
    _check_binary(d.y)
    Z = np.column_stack([np.ones(d.n), d.X])
    if is_separated(Z, d.y):
        raise SeparationError("the likelihood has no finite maximizer; the data are separated.")
    start = np.zeros(d.p + 1)
    start[0] = init_intercept(d.y)
    theta = _newton(Z, d.y, start, tol=tol, max_iter=max_iter)
    return theta[1:], float(theta[0])


def lalr_path(d, config=None):
    """Least angle logistic regression path.

    The active covariates move along the weighted equiangular direction
    (X_A' W X_A)^-1 s_A, W = diag(p(1-p)) re-evaluated at every point, which
    lowers their common absolute score at unit rate to first order. Each
    point is corrected by Newton's method so the active scores stay exactly
    equal, and the intercept stays at its conditional optimum. The step that
    ends a segment is seeded by linearized_step and refine_step along the
    direction, then solved exactly on the corrected path.

    Args:
        d: Standardized BinaryDataset.
        config: LogisticPathConfig.

    Returns:
        A LogisticPath. A path stopped by separation is marked as not
        converged rather than raising.
    """
    config = config or LogisticPathConfig()
    if not d.binary:
        raise TypeError("lalr_path needs a BinaryDataset.")
    if not dataset.is_standardized(d):
        raise ValueError("lalr_path requires standardized columns.")

    X, y = d.X, d.y
    n, p = X.shape
    score_tol = config.score_tol or SCORE_TOL_FACTOR * n
    newton_tol = NEWTON_TOL_FACTOR * n

    active, signs, states = [], [], []
    theta = np.array([init_intercept(y)])

    def design():
        return np.column_stack([np.ones(n), X[:, active]])

    def snapshot(event, level):
        beta = np.zeros(p)
        beta[active] = theta[1:]
        f = theta[0] + X @ beta
        states.append(
            LogisticPathState(
                len(states),
                f,
                float(theta[0]),
                beta,
                list(active),
                dict(zip(active, signs)),
                _loglik(f, y),
                float(level),
                event,
            )
        )

    g = score(X, y, np.full(n, theta[0]))
    level = np.abs(g).max(initial=0.0)
    pick = select_covariate(g, (), score_tol)
    if pick is None:
        snapshot(Event(TERMINAL), level)
        return LogisticPath(states, True, d.transform)

    active.append(pick[0])
    signs.append(pick[1])
    theta = np.append(theta, 0.0)
    snapshot(Event(ADDED, pick[0]), level)

    try:
        for _ in range(config.max_steps):
            inactive = [j for j in range(p) if j not in active]
            if not inactive:
                break
            Z = design()
            target_dir = np.concatenate(([0.0], signs))
            step = _entry_step(Z, X, y, theta, level, active, signs, inactive, newton_tol, score_tol)
            if step is None:
                break
            delta, point = step
            origin = theta
            if config.points_per_segment and delta > 0:
                direction = _direction(Z, y, origin, target_dir)
            for k in range(1, config.points_per_segment + 1 if delta > 0 else 1):
                shift = delta * k / (config.points_per_segment + 1)
                theta = _newton(Z, y, origin + shift * direction, (level - shift) * target_dir, newton_tol)
                snapshot(Event(STEP), level - shift)
            theta, level = point, level - delta
            if level < score_tol:
                break

            g_in = X[:, inactive].T @ (y - expit(Z @ theta))
            k = int(np.argmax(np.abs(g_in)))
            active.append(inactive[k])
            signs.append(1 if g_in[k] > 0 else -1)
            theta = np.append(theta, 0.0)
            snapshot(Event(ADDED, inactive[k]), level)
        else:
            logger.warning("lalr_path stopped at the %d step cap", config.max_steps)
            return LogisticPath(states, False, d.transform, STEP_CAP)

        Z = design()
        if is_separated(Z, y):
            raise SeparationError("the active covariates separate the data.")
        for k in range(1, config.points_per_segment + 1):
            frac = k / (config.points_per_segment + 1)
            target = (1 - frac) * level * np.concatenate(([0.0], signs))
            theta = _newton(Z, y, theta, target, newton_tol)
            snapshot(Event(STEP), (1 - frac) * level)
        theta = _newton(Z, y, theta, tol=newton_tol)
    except SeparationError as err:
        logger.warning("lalr_path stopped early: %s", err)
        return LogisticPath(states, False, d.transform, SEPARATED)
    except ConvergenceError as err:
        logger.warning("lalr_path stopped early: %s", err)
        return LogisticPath(states, False, d.transform, NOT_CONVERGED)

    residual = score(X, y, Z @ theta)
    snapshot(Event(TERMINAL), np.abs(residual).max(initial=0.0))
    return LogisticPath(states, bool(np.abs(residual).max(initial=0.0) < score_tol), d.transform)


def _direction(Z, y, theta, target_dir):
    """Change in (intercept, beta_A) per unit decrease of the active score."""
    w = _weights(Z @ theta)
    return linalg.solve((Z * w[:, None]).T @ Z, target_dir, assume_a="pos")


def _seed_step(X, y, f, u, leader, sign, inactive, level):
    """Estimate of the entry step along the line f + delta * u.

    The earliest linearized tie over inactive covariates and both signs is
    refined to the exact tie on that line.
    """
    best = None
    for j in inactive:
        for s2 in (1, -1):
            try:
                alpha = linearized_step(X, y, f, leader, sign, j, s2, direction=u)
            except StepError:
                continue
            if alpha > 0 and (best is None or alpha < best[0]):
                best = (alpha, j, s2)
    if best is None:
        return level

    alpha, j, s2 = best
    try:
        alpha = refine_step(X, y, f, leader, sign, j, s2, alpha0=alpha, direction=u)
    except SeparationError:
        pass
    return min(alpha, level) if alpha > 0 else level


def _entry_step(Z, X, y, theta, level, active, signs, inactive, newton_tol, score_tol):
    """Decrease of the common active score until an inactive score ties.

    Returns:
        A pair (delta, theta_at_tie), or None when no inactive score reaches
        the active level before the active-set maximum likelihood point.
    """
    target_dir = np.concatenate(([0.0], signs))
    direction = _direction(Z, y, theta, target_dir)
    X_in = X[:, inactive]

    def point(delta):
        start = theta + delta * direction
        return _newton(Z, y, start, (level - delta) * target_dir, newton_tol)

    def gap(delta):
        inactive_scores = X_in.T @ (y - expit(Z @ point(delta)))
        return np.abs(inactive_scores).max() - (level - delta)

    if gap(0.0) >= -1e-10 * level:
        return 0.0, theta

    guess = _seed_step(X, y, Z @ theta, Z @ direction, active[0], signs[0], inactive, level)
    low, high = 0.0, guess
    while gap(high) < 0:
        if high >= level:
            return None
        low, high = high, min(level, 2 * high)

    if high >= level and gap(level) < score_tol:
        return None
    delta = brentq(gap, low, high, xtol=1e-12 * max(1.0, level), maxiter=200)
    return delta, point(delta)


def stagewise_logistic(d, epsilon, max_iters=1_000_000, config=None):
    """Incremental forward stagewise logistic regression.

    Each iteration moves the covariate with the largest absolute score by
    epsilon in the direction of its score and shifts the intercept by one
    linearized Newton step. A move is taken when a quadratic lower bound on
    the log-likelihood gain is positive, otherwise only after an exact
    check.

    Args:
        d: Standardized BinaryDataset.
        epsilon: Increment size.
        max_iters: Iteration cap.
        config: LogisticPathConfig, for score_tol and record_every.

    Returns:
        A LogisticPath. converged_to_mle is True only when every score fell
        below the score tolerance; a stop because no epsilon increment
        improves the fit is reported as EPSILON_LIMITED.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive.")
    if not d.binary:
        raise TypeError("stagewise_logistic needs a BinaryDataset.")
    config = config or LogisticPathConfig()
    X, y = d.X, d.y
    n, p = X.shape
    score_tol = config.score_tol or SCORE_TOL_FACTOR * n
    col_sums = X.sum(axis=0)
    sq_norms = (X ** 2).sum(axis=0)

    counts = np.zeros(p, dtype=np.int64)
    intercept = init_intercept(y)
    f = np.full(n, intercept)
    prob = expit(f)
    ll = None
    states = []

    def snapshot(event, level):
        nonlocal ll
        if ll is None:
            ll = _loglik(f, y)
        support = [int(j) for j in np.flatnonzero(counts)]
        states.append(
            LogisticPathState(
                len(states),
                f.copy(),
                float(intercept),
                counts * epsilon,
                support,
                {j: int(np.sign(counts[j])) for j in support},
                ll,
                float(level),
                event,
            )
        )

    snapshot(Event(STEP), np.abs(X.T @ (y - prob)).max(initial=0.0))
    reason = STEP_CAP
    for iteration in range(1, max_iters + 1):
        residual = y - prob
        g = X.T @ residual
        j = int(np.argmax(np.abs(g)))
        top = abs(g[j])
        if top < score_tol:
            reason = CONVERGED
            break

        step = epsilon if g[j] > 0 else -epsilon
        w = prob * (1 - prob)
        g0 = residual.sum()
        shift = (g0 - step * (w @ X[:, j])) / w.sum()
        gain = epsilon * top + shift * g0
        spread = step ** 2 * sq_norms[j] + 2 * step * shift * col_sums[j] + n * shift ** 2

        moved = f + step * X[:, j]
        if gain - spread / 8 > 0:
            f, ll = moved + shift, None
        else:
            current = ll if ll is not None else _loglik(f, y)
            with_shift = _loglik(moved + shift, y)
            alone = _loglik(moved, y)
            if max(with_shift, alone) <= current:
                ll = current
                reason = EPSILON_LIMITED
                break
            if with_shift >= alone:
                f, ll = moved + shift, with_shift
            else:
                f, ll, shift = moved, alone, 0.0

        was_zero = counts[j] == 0
        counts[j] += 1 if step > 0 else -1
        intercept += shift
        prob = expit(f)

        if was_zero:
            snapshot(Event(ADDED, j), top)
        elif config.record_every and iteration % config.record_every == 0:
            snapshot(Event(STEP), top)
    else:
        logger.info("stagewise_logistic reached %d iterations", max_iters)

    snapshot(Event(TERMINAL), np.abs(score(X, y, f)).max(initial=0.0))
    return LogisticPath(states, reason == CONVERGED, d.transform, reason)


class SeparationError(Exception):
    pass


class ConvergenceError(Exception):
    pass


class StepError(Exception):
    pass
