"""Piecewise linear coefficient paths for squared error loss.

Three path algorithms share one representation: least angle regression,
its Lasso modification (variables leave the active set when their
coefficient crosses zero) and incremental forward stagewise regression.
All of them expect a standardized dataset: centered columns of unit L2 norm
and a centered response, so that correlations are plain inner products.
"""

from collections import namedtuple
import logging

import numpy as np

import dataset
from cholesky import CholeskyFactor, RankDeficiencyError

logger = logging.getLogger(__name__)

LARS = "lars"
LASSO = "lasso"
STAGEWISE = "stagewise"
METHODS = (LARS, LASSO, STAGEWISE)

# Correlations within this fraction of the maximum count as tied.
TIE_TOL = 1e-10
# The path ends once the maximal correlation drops below this (relative to |y|).
TERMINAL_TOL = 1e-12
# Stagewise step size as a fraction of max |x_j . y| when none is given.
DEFAULT_RELATIVE_EPSILON = 1e-3
DEFAULT_MAX_STAGEWISE_STEPS = 1_000_000
DEFAULT_RECORD_EVERY = 25

# Event kinds
ADDED = "added"
DROPPED = "dropped"
EXCLUDED = "excluded"
STEP = "step"
TERMINAL = "terminal"

Event = namedtuple("Event", ["kind", "variable"], defaults=(None,))

PathSegment = namedtuple(
    "PathSegment",
    ["step_index", "beta", "active_set", "signs", "max_correlation", "event"],
)


class PathMode(
    namedtuple("PathMode", ["method", "epsilon", "max_steps", "record_every"])
):
    """Which path algorithm to run.

    Args:
        method: One of "lars", "lasso" or "stagewise".
        epsilon: Stagewise increment. When None it is resolved to
            DEFAULT_RELATIVE_EPSILON * max_j |x_j . y| at run time.
        max_steps: Iteration cap. Defaults depend on the method.
        record_every: Stagewise only, also record a segment every this many
            increments (0 records active set changes only).
    """

    __slots__ = ()

    def __new__(cls, method, epsilon=None, max_steps=None, record_every=None):
        if method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {method!r}")
        if epsilon is not None and not epsilon > 0:
            raise ValueError("epsilon must be positive.")
        if max_steps is not None and max_steps < 0:
            raise ValueError("max_steps must be non-negative.")
        return super().__new__(cls, method, epsilon, max_steps, record_every)


class SolutionPath:
    """Breakpoints of a coefficient path.

    Args:
        mode: The PathMode that produced the path, with stagewise settings
            resolved.
        segments: Ordered list of PathSegment records. The first is the
            origin, the last carries a terminal event.
        df: Per-segment degrees of freedom, the number of variables in the
            model on arrival at the breakpoint.
        fingerprint: Digest of the dataset the path was computed on.
    """

    def __init__(self, mode, segments, df, fingerprint):
        self.mode = mode
        self.segments = segments
        self.df = df
        self.fingerprint = fingerprint

    def __len__(self):
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    def __repr__(self):
        return (
            f"{self.__class__.__name__}(method={self.mode.method!r},"
            f" segments={len(self.segments)})"
        )

    @property
    def betas(self):
        """Breakpoint coefficients as a (segments, p) array."""
        return np.array([seg.beta for seg in self.segments])

    @property
    def max_correlations(self):
        return np.array([seg.max_correlation for seg in self.segments])

    @property
    def terminal_beta(self):
        return self.segments[-1].beta.copy()

    def to_dict(self):
        """JSON-ready representation of the path."""
        mode = {"method": self.mode.method}
        if self.mode.method == STAGEWISE:
            mode["epsilon"] = self.mode.epsilon
        return {
            "mode": mode,
            "segments": [
                {
                    "step": seg.step_index,
                    "event": seg.event._asdict(),
                    "active": [int(j) for j in seg.active_set],
                    "signs": {int(j): int(s) for j, s in seg.signs.items()},
                    "beta": seg.beta.tolist(),
                    "max_corr": seg.max_correlation,
                }
                for seg in self.segments
            ],
            "df": [int(k) for k in self.df],
        }


def lars_path(d, mode=None, drop_collinear=False):
    """Compute a coefficient path on a standardized dataset.

    Args:
        d: Standardized Dataset.
        mode: PathMode or method name, LARS by default.
        drop_collinear: Boolean. When true a variable that would make the
            active Gram matrix singular is excluded from the rest of the
            path (recorded as an "excluded" event) instead of raising.

    Returns:
        A SolutionPath.

    Raises:
        ValueError: The dataset is not standardized, or the stagewise
            increment is too coarse.
        PathError: The active set became rank deficient, or the step cap was
            reached before the path ended.
    """
    if mode is None:
        mode = PathMode(LARS)
    elif isinstance(mode, str):
        mode = PathMode(mode)

    if not dataset.is_standardized(d):
        raise ValueError("lars_path requires a standardized dataset.")

    if mode.method == STAGEWISE:
        segments, df, mode = _stagewise(d.X, d.y, mode)
    else:
        segments, df = _least_angle(d.X, d.y, mode, drop_collinear)

    logger.debug("%s path: %d segments", mode.method, len(segments))
    return SolutionPath(mode, segments, df, d.fingerprint())


def _first_max(values, top):
    """Lowest index whose value ties the maximum."""
    return int(np.flatnonzero(values >= top * (1 - TIE_TOL))[0])


def _least_angle(X, y, mode, drop_collinear):
    n, p = X.shape
    lasso = mode.method == LASSO
    max_active = min(n - 1, p)
    max_steps = mode.max_steps if mode.max_steps is not None else 50 * p + 10
    tol = TERMINAL_TOL * max(1.0, np.linalg.norm(y))

    beta = np.zeros(p)
    signs = np.zeros(p)
    active = []
    excluded = np.zeros(p, dtype=bool)
    segments, df = [], []

    def record(event, size, max_corr):
        segments.append(
            PathSegment(
                len(segments),
                beta.copy(),
                list(active),
                {j: int(signs[j]) for j in active},
                float(max_corr),
                event,
            )
        )
        df.append(size)

    corr = X.T @ y
    C = np.abs(corr).max()
    if C < tol or max_active == 0:
        record(Event(TERMINAL), 0, C)
        return segments, df

    chol = CholeskyFactor()
    first = _first_max(np.abs(corr), C)
    chol.append(np.zeros(0), X[:, first] @ X[:, first])
    active.append(first)
    signs[first] = np.sign(corr[first])
    record(Event(ADDED, first), 0, C)

    just_dropped = None
    for _ in range(max_steps):
        corr = X.T @ (y - X @ beta)
        A = np.array(active)
        C = np.abs(corr[A]).max()
        if C < tol:
            record(Event(TERMINAL), len(active), C)
            return segments, df

        # Equiangular direction for the active set.
        s_A = signs[A]
        w = chol.solve(s_A)
        norm = 1.0 / np.sqrt(s_A @ w)
        w_A = norm * w
        a = X.T @ (X[:, A] @ w_A)
        gamma_cap = C / norm

        gamma_add, entrant = np.inf, None
        if len(active) < max_active:
            candidates = ~excluded
            candidates[A] = False
            if just_dropped is not None:
                candidates[just_dropped] = False
            idx = np.flatnonzero(candidates)
            if idx.size:
                gammas = _entry_steps(C, corr[idx], a[idx], norm)
                gamma_add = gammas.min()
                if np.isfinite(gamma_add):
                    ties = idx[gammas <= gamma_add + TIE_TOL * gamma_cap]
                    entrant = int(ties.min())

        gamma_drop, leaver = np.inf, None
        if lasso:
            with np.errstate(divide="ignore", invalid="ignore"):
                crossing = -beta[A] / w_A
            crossing[~(crossing > TIE_TOL * gamma_cap)] = np.inf
            if np.isfinite(crossing).any():
                k = int(np.argmin(crossing))
                gamma_drop, leaver = crossing[k], int(A[k])

        gamma = min(gamma_add, gamma_drop, gamma_cap)
        beta[A] += gamma * w_A
        C_next = max(C - gamma * norm, 0.0)
        size = len(active)

        if leaver is not None and gamma_drop <= min(gamma_add, gamma_cap):
            beta[leaver] = 0.0
            chol.remove(active.index(leaver))
            active.remove(leaver)
            signs[leaver] = 0
            just_dropped = leaver
            record(Event(DROPPED, leaver), size, C_next)
            if not active:
                record(Event(TERMINAL), 0, C_next)
                return segments, df
            continue
        just_dropped = None

        if entrant is not None and gamma_add < gamma_cap * (1 - TIE_TOL):
            column = X[:, entrant]
            try:
                chol.append(X[:, A].T @ column, column @ column)
            except RankDeficiencyError as err:
                if not drop_collinear:
                    raise PathError(
                        f"variable {entrant} is collinear with the active set"
                    ) from err
                logger.info("excluding collinear variable %d", entrant)
                excluded[entrant] = True
                record(Event(EXCLUDED, entrant), size, C_next)
                continue
            active.append(entrant)
            signs[entrant] = np.sign(corr[entrant] - gamma * a[entrant]) or 1.0
            record(Event(ADDED, entrant), size, C_next)
            continue

        # Reached the least squares fit on the active set.
        record(Event(TERMINAL), size, C_next)
        return segments, df

    raise PathError(f"path did not terminate within {max_steps} steps")


def _entry_steps(C, c, a, norm):
    """Step lengths at which inactive correlations reach the active one.

    Numerators within TIE_TOL * C of zero are treated as exact ties; only
    candidates whose correlation gains on the active level qualify.
    """
    floor = TIE_TOL * C
    steps = np.full(c.shape, np.inf)
    for num, den in ((C - c, norm - a), (C + c, norm + a)):
        num = np.where((num < 0) & (num > -floor), 0.0, num)
        ok = (den > 0) & (num >= 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            steps = np.minimum(steps, np.where(ok, num / den, np.inf))
    return steps


def _stagewise(X, y, mode):
    n, p = X.shape
    corr = X.T @ y
    C0 = np.abs(corr).max()
    tol = TERMINAL_TOL * max(1.0, np.linalg.norm(y))

    epsilon = mode.epsilon
    if epsilon is None:
        epsilon = DEFAULT_RELATIVE_EPSILON * C0
    max_steps = mode.max_steps
    if max_steps is None:
        max_steps = DEFAULT_MAX_STAGEWISE_STEPS
    record_every = mode.record_every
    if record_every is None:
        record_every = DEFAULT_RECORD_EVERY
    resolved = PathMode(STAGEWISE, epsilon or None, max_steps, record_every)

    counts = np.zeros(p, dtype=np.int64)
    segments, df = [], []

    def record(event, max_corr):
        beta = counts * epsilon
        support = list(np.flatnonzero(counts))
        segments.append(
            PathSegment(
                len(segments),
                beta,
                [int(j) for j in support],
                {int(j): int(np.sign(counts[j])) for j in support},
                float(max_corr),
                event,
            )
        )
        df.append(len(support))

    if C0 < tol:
        record(Event(TERMINAL), C0)
        return segments, df, resolved
    if epsilon > 0.1 * C0:
        raise ValueError(
            f"stagewise epsilon {epsilon:.4g} exceeds 0.1 * max|x'y| = {0.1 * C0:.4g}"
        )

    gram = X.T @ X
    record(Event(ADDED, int(np.argmax(np.abs(corr)))), C0)

    for step in range(1, max_steps + 1):
        j = int(np.argmax(np.abs(corr)))
        # An increment only lowers the residual sum of squares while
        # |x_j . r| exceeds epsilon * |x_j|^2 / 2.
        if np.abs(corr[j]) <= 0.5 * epsilon * gram[j, j]:
            break
        direction = 1 if corr[j] > 0 else -1
        was_zero = counts[j] == 0
        counts[j] += direction
        corr -= direction * epsilon * gram[:, j]

        if was_zero:
            record(Event(ADDED, j), np.abs(corr).max())
        elif counts[j] == 0:
            record(Event(DROPPED, j), np.abs(corr).max())
        elif record_every and step % record_every == 0:
            record(Event(STEP), np.abs(corr).max())
    else:
        logger.warning("stagewise stopped at the %d step cap", max_steps)

    record(Event(TERMINAL), np.abs(corr).max())
    return segments, df, resolved


def coefficients_at(path, t):
    """Coefficients at a fraction t of the terminal L1 norm.

    Interpolates affinely between the first pair of breakpoints whose L1
    norms bracket t * |beta_terminal|_1.

    Raises:
        ValueError: t outside [0, 1].
    """
    if not 0 <= t <= 1:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    betas = path.betas
    if t == 0:
        return np.zeros(betas.shape[1])
    if t == 1:
        return betas[-1].copy()

    norms = np.abs(betas).sum(axis=1)
    target = t * norms[-1]
    for k in range(len(betas) - 1):
        low, high = sorted((norms[k], norms[k + 1]))
        if low <= target <= high:
            return _interpolate_l1(betas[k], betas[k + 1], target)
    return betas[-1].copy()


def _interpolate_l1(start, end, target):
    """Point on the segment start -> end whose L1 norm equals target.

    The norm is piecewise linear in the segment parameter with kinks where
    a coordinate crosses zero.
    """
    delta = end - start
    with np.errstate(divide="ignore", invalid="ignore"):
        kinks = -start / delta
    kinks = kinks[np.isfinite(kinks) & (kinks > 0) & (kinks < 1)]
    knots = np.concatenate(([0.0], np.sort(kinks), [1.0]))
    values = np.array([np.abs(start + theta * delta).sum() for theta in knots])

    for k in range(len(knots) - 1):
        low, high = values[k], values[k + 1]
        if min(low, high) <= target <= max(low, high):
            if high == low:
                theta = knots[k]
            else:
                theta = knots[k] + (target - low) / (high - low) * (knots[k + 1] - knots[k])
            return start + theta * delta
    return end.copy()


def coefficients_at_penalty(path, lam):
    """Coefficients at Lasso penalty lam, where lam is the common absolute
    correlation of the active variables.

    Only meaningful for LARS and LASSO paths, whose max_correlation falls
    linearly between breakpoints.
    """
    if lam < 0:
        raise ValueError("penalty must be non-negative.")
    betas = path.betas
    levels = path.max_correlations
    if lam >= levels[0]:
        return np.zeros(betas.shape[1])
    for k in range(len(levels) - 1):
        if levels[k] >= lam >= levels[k + 1]:
            span = levels[k] - levels[k + 1]
            theta = 0.0 if span == 0 else (levels[k] - lam) / span
            return betas[k] + theta * (betas[k + 1] - betas[k])
    return betas[-1].copy()


def predict(d_raw, beta, transform):
    """Predict raw-scale responses from standardized coefficients.

    Args:
        d_raw: Dataset or array of raw covariates.
        beta: Coefficients in standardized space.
        transform: The Standardization record of the training data.

    Returns:
        Array of predictions, y_mean added back.
    """
    X = d_raw.X if isinstance(d_raw, dataset.Dataset) else np.asarray(d_raw, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if beta.ndim != 1 or beta.shape[0] != len(transform.column_means):
        raise ValueError(
            f"beta has shape {beta.shape}, expected ({len(transform.column_means)},)"
        )
    return transform.apply(X) @ beta + transform.y_mean


def raw_coefficients(beta, transform):
    """Intercept and slopes on the raw scale for standardized coefficients."""
    return transform.to_raw(beta)


class PathError(Exception):
    pass
