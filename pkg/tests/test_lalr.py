"""Tests for least angle logistic regression and its reference fits"""

import math
import time

import numpy as np
import pytest
from scipy.optimize import brentq
from scipy.special import expit

import dataset
import lalr


def _instance(seed, n=50, p=4, scale=0.3):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    f = scale * rng.standard_normal(n)
    y = (rng.random(n) < expit(f + X @ rng.standard_normal(p))).astype(float)
    return X, y, f


def _leaders(X, y, f):
    g = lalr.score(X, y, f)
    first, second = np.argsort(-np.abs(g), kind="stable")[:2]
    return int(first), int(np.sign(g[first])), int(second), int(np.sign(g[second]))


def newton_1d(x, y, f, tol=1e-14):
    """Step-halving Newton iteration for the best move along x."""
    def gradient(a):
        return x @ (y - expit(f + a * x))

    alpha = 0.0
    for _ in range(200):
        p = expit(f + alpha * x)
        step = gradient(alpha) / (x @ (p * (1 - p) * x))
        while abs(step) > 1e-6 and abs(gradient(alpha + step)) > abs(gradient(alpha)):
            step *= 0.5
        alpha += step
        if abs(step) < tol:
            break
    return alpha


def bisection(h, low, high, width=1e-12):
    low, high = sorted((low, high))
    h_low = h(low)
    while high - low > width:
        mid = 0.5 * (low + high)
        if np.sign(h(mid)) == np.sign(h_low):
            low, h_low = mid, h(mid)
        else:
            high = mid
    return 0.5 * (low + high)


def _raw(path_or_beta, d, intercept=0.0):
    return d.transform.to_raw(path_or_beta, intercept)[1]


@pytest.mark.lalr
def test_log_likelihood_simple_values():
    assert np.isclose(lalr.log_likelihood(np.zeros((1, 1)), [1.0], [0.0]), -math.log(2))
    assert np.isclose(lalr.log_likelihood(np.zeros((1, 1)), [0.0], [0.0]), -math.log(2))

    y = np.array([1.0, 0.0, 0.0, 1.0, 1.0])
    ybar = y.mean()
    value = lalr.log_likelihood(np.zeros((5, 1)), y, [0.0], lalr.init_intercept(y))
    assert np.isclose(value, 5 * (ybar * math.log(ybar) + (1 - ybar) * math.log(1 - ybar)))


@pytest.mark.lalr
def test_log_likelihood_against_exact_summation():
    X, y, _ = _instance(1, n=30, p=3)
    beta = np.array([0.5, -1.0, 2.0])
    f = 0.3 + X @ beta
    terms = [yi * fi - (math.log1p(math.exp(-fi)) + fi if fi > 0 else math.log1p(math.exp(fi))) for yi, fi in zip(y, f)]
    assert math.isclose(lalr.log_likelihood(X, y, beta, 0.3), math.fsum(terms), rel_tol=1e-12)


@pytest.mark.lalr
def test_log_likelihood_extreme_predictor():
    value = lalr.log_likelihood(np.array([[1.0], [-1.0]]), [1.0, 1.0], [700.0])
    assert np.isfinite(value)
    assert np.isclose(value, -700.0)
    with pytest.raises(ValueError):
        lalr.log_likelihood(np.zeros((2, 1)), [0.5, 1.0], [0.0])


@pytest.mark.lalr
def test_init_intercept():
    assert lalr.init_intercept(np.array([0.0, 1.0])) == 0.0
    assert np.isclose(lalr.init_intercept(np.array([math.e / (1 + math.e)])), 1.0)
    with pytest.raises(ValueError):
        lalr.init_intercept(np.ones(4))


@pytest.mark.lalr
def test_score_simple_values():
    assert np.allclose(lalr.score(np.array([[1.0]]), np.array([1.0]), np.array([0.0])), [0.5])
    X, _, f = _instance(2)
    assert np.allclose(lalr.score(X, expit(f), f), 0.0)


@pytest.mark.lalr
def test_score_is_directional_derivative():
    """
    Given 100 random logistic instances
    When scores are compared with central differences of the log-likelihood
    Then they agree to 1e-5 relative
    """
    alpha = 1e-6
    for seed in range(100):
        X, y, f = _instance(seed, n=10, p=3)
        g = lalr.score(X, y, f)
        for j in range(3):
            up = lalr._loglik(f + alpha * X[:, j], y)
            down = lalr._loglik(f - alpha * X[:, j], y)
            assert np.isclose(g[j], (up - down) / (2 * alpha), rtol=1e-5, atol=1e-7)


@pytest.mark.lalr
def test_select_covariate():
    assert lalr.select_covariate(np.array([0.3, -0.8, 0.1])) == (1, -1)
    assert lalr.select_covariate(np.array([0.5, -0.5, 0.1])) == (0, 1)
    assert lalr.select_covariate(np.array([1e-11, -1e-12])) is None
    assert lalr.select_covariate(np.array([0.3, -0.8, 0.1]), excluded=[1]) == (0, 1)


@pytest.mark.lalr
def test_linearized_step_already_tied():
    """
    Given a runner-up whose signed score equals the leader's
    When the linearized step is computed
    Then it is zero
    """
    rng = np.random.default_rng(5)
    y = np.array([1.0, 0.0, 1.0, 1.0, 0.0, 0.0])
    f = np.zeros(6)
    r = y - 0.5
    x1 = rng.standard_normal(6)
    v = rng.standard_normal(6)
    v -= (v @ r) / (r @ r) * r
    X = np.column_stack([x1, x1 + v])
    s = int(np.sign(x1 @ r))
    assert lalr.linearized_step(X, y, f, 0, s, 1, s) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.lalr
def test_linearized_step_orthonormal_half_probabilities():
    rng = np.random.default_rng(6)
    Q, _ = np.linalg.qr(rng.standard_normal((8, 2)))
    y = np.array([1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0])
    f = np.zeros(8)
    j_star, s_star, j2, s2 = _leaders(Q, y, f)
    v = s_star * Q[:, j_star] - s2 * Q[:, j2]
    expected = 4 * s_star * (v @ (y - 0.5))
    assert np.isclose(lalr.linearized_step(Q, y, f, j_star, s_star, j2, s2), expected)


@pytest.mark.lalr
def test_linearized_step_degenerate():
    X = np.ones((4, 2))
    with pytest.raises(lalr.StepError):
        lalr.linearized_step(X, [1.0, 0.0, 1.0, 0.0], np.zeros(4), 0, 1, 1, 1)
    with pytest.raises(ValueError):
        lalr.linearized_step(X, [1.0, 0.0, 1.0, 0.0], np.zeros(4), 0, 1, 0, 1)


@pytest.mark.lalr
def test_linearized_step_first_order_accuracy():
    """
    Given responses shrunk toward the fitted probabilities by t
    When t halves
    Then the linearized step error shrinks by about four
    """
    X, y, f = _instance(21)
    j_star, s_star, j2, s2 = _leaders(X, y, f)
    v = s_star * X[:, j_star] - s2 * X[:, j2]
    p = expit(f)
    assert v @ (p * (1 - p) * X[:, j_star]) > 0

    errors = []
    for t in (1e-3, 5e-4):
        y_t = p + t * (y - p)
        approx = lalr.linearized_step(X, y_t, f, j_star, s_star, j2, s2)
        root = brentq(
            lambda a: v @ (y_t - expit(f + a * X[:, j_star])),
            *sorted((0.0, 2 * approx)),
            xtol=1e-20,
            rtol=1e-15,
        )
        errors.append(abs(approx - root))
    assert errors[0] / errors[1] >= 3.9


@pytest.mark.lalr
def test_refine_step_matches_bisection():
    for seed in range(100):
        X, y, f = _instance(seed)
        j_star, s_star, j2, s2 = _leaders(X, y, f)
        x = X[:, j_star]
        v = s_star * x - s2 * X[:, j2]

        def h(a):
            return v @ (y - expit(f + a * x))

        alpha_max = newton_1d(x, y, f)
        oracle = alpha_max if h(alpha_max) > 0 else bisection(h, 0.0, alpha_max)
        try:
            start = lalr.linearized_step(X, y, f, j_star, s_star, j2, s2)
        except lalr.StepError:
            start = 0.0
        alpha = lalr.refine_step(X, y, f, j_star, s_star, j2, s2, alpha0=start)
        assert abs(alpha - oracle) < 1e-9
        assert np.sign(alpha) in (0, s_star)


@pytest.mark.lalr
def test_refine_step_fixed_point_and_single_covariate():
    X, y, f = _instance(3)
    j_star, s_star, j2, s2 = _leaders(X, y, f)
    v = s_star * X[:, j_star] - s2 * X[:, j2]
    alpha_max = newton_1d(X[:, j_star], y, f)

    assert abs(lalr.refine_step(X, y, f, j_star, s_star) - alpha_max) < 1e-10

    def h(a):
        return v @ (y - expit(f + a * X[:, j_star]))

    if h(alpha_max) <= 0:
        root = bisection(h, 0.0, alpha_max)
        assert lalr.refine_step(X, y, f, j_star, s_star, j2, s2, alpha0=root) == root


@pytest.mark.lalr
def test_mle_logistic_stationary(logistic_data):
    beta, intercept = lalr.mle_logistic(logistic_data)
    Z = np.column_stack([np.ones(logistic_data.n), logistic_data.X])
    theta = np.concatenate(([intercept], beta))
    gradient = Z.T @ (logistic_data.y - expit(Z @ theta))
    assert np.abs(gradient).max() < 1e-10


@pytest.mark.lalr
def test_mle_logistic_intercept_only():
    y = np.array([1.0, 0.0, 0.0, 1.0, 1.0, 1.0])
    beta, intercept = lalr.mle_logistic(dataset.BinaryDataset(np.empty((6, 0)), y))
    assert beta.shape == (0,)
    assert np.isclose(intercept, lalr.init_intercept(y))


@pytest.mark.lalr
def test_mle_logistic_separated():
    d = dataset.BinaryDataset(np.array([[-2.0], [-1.0], [1.0], [2.0]]), np.array([0.0, 0.0, 1.0, 1.0]))
    with pytest.raises(lalr.SeparationError):
        lalr.mle_logistic(d)


@pytest.mark.lalr
def test_lalr_path_invariants(logistic_data):
    """
    Given a simulated logistic sample
    When the least angle logistic path is computed with interior samples
    Then active scores stay tied, inactive ones stay below, and the
    log-likelihood never decreases
    """
    d = logistic_data
    path = lalr.lalr_path(d, lalr.LogisticPathConfig(points_per_segment=3))
    assert path.converged_to_mle
    log_liks = [state.log_lik for state in path.states]
    assert (np.diff(log_liks) >= -1e-10).all()

    for state in path.states[:-1]:
        assert np.isclose(state.log_lik, lalr._loglik(state.f, d.y), atol=1e-10)
        g = lalr.score(d.X, d.y, state.f)
        level = state.max_score
        for j in range(d.p):
            if j in state.active_set:
                assert abs(abs(g[j]) - level) <= 1e-6 * level
                assert np.sign(g[j]) == state.signs[j]
            else:
                assert abs(g[j]) <= level + 1e-6


@pytest.mark.lalr
def test_lalr_path_reaches_mle(logistic_data):
    beta, intercept = lalr.mle_logistic(logistic_data)
    path = lalr.lalr_path(logistic_data)
    assert np.abs(path.final.beta - beta).max() < 1e-6
    assert np.isclose(path.final.intercept, intercept, atol=1e-6)

    g0 = lalr.score(logistic_data.X, logistic_data.y, path.states[0].f)
    assert path.states[0].active_set == [int(np.argmax(np.abs(g0)))]
    added = [s.event.variable for s in path.states if s.event.kind == "added"]
    assert sorted(added) == list(range(logistic_data.p))


@pytest.mark.lalr
def test_lalr_single_covariate():
    raw, _ = dataset.simulate_logistic(dataset.SyntheticSpec(100, 1, 1.0, 4))
    d = dataset.standardize(raw)
    beta, _ = lalr.mle_logistic(d)
    assert np.abs(lalr.lalr_path(d).final.beta - beta).max() < 1e-6


@pytest.mark.lalr
def test_lalr_uncorrelated_gives_intercept_only():
    X = np.array([[1.0], [1.0], [-1.0], [-1.0]])
    d = dataset.standardize(dataset.BinaryDataset(X, np.array([1.0, 0.0, 1.0, 0.0])))
    path = lalr.lalr_path(d)
    assert len(path) == 1
    assert path.converged_to_mle
    assert not path.final.beta.any() and path.final.intercept == 0.0
    assert path.stop_reason == lalr.CONVERGED


@pytest.mark.lalr
def test_lalr_separated_data_marked_not_converged():
    X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    d = dataset.standardize(dataset.BinaryDataset(X, np.array([0.0, 0.0, 1.0, 1.0])))
    path = lalr.lalr_path(d)
    assert not path.converged_to_mle
    assert path.stop_reason == lalr.SEPARATED
    assert len(path) >= 1


@pytest.mark.lalr
def test_lalr_path_requires_standardized(logistic_data):
    with pytest.raises(ValueError):
        lalr.lalr_path(logistic_data.raw())


@pytest.mark.lalr
def test_stagewise_zero_iterations(logistic_data):
    path = lalr.stagewise_logistic(logistic_data, 1e-3, max_iters=0)
    assert path.stop_reason == lalr.STEP_CAP
    assert not path.final.beta.any()
    assert np.isclose(path.final.intercept, lalr.init_intercept(logistic_data.y))


@pytest.mark.lalr
def test_stagewise_first_selection_matches_lalr(logistic_data):
    stagewise = lalr.stagewise_logistic(logistic_data, 1e-2, max_iters=5)
    least_angle = lalr.lalr_path(logistic_data)
    first = next(s.event.variable for s in stagewise.states if s.event.kind == "added")
    assert first == least_angle.states[0].event.variable


@pytest.mark.lalr
def test_stagewise_reaches_mle():
    """
    Given a well conditioned 100 x 3 logistic problem
    When stagewise runs to convergence with epsilon 1e-3
    Then it ends within 10 * epsilon * p of the maximum likelihood estimate
    """
    epsilon = 1e-3
    raw, _ = dataset.simulate_logistic(dataset.SyntheticSpec(100, 3, 0.5, 9))
    d = dataset.standardize(raw)
    beta, _ = lalr.mle_logistic(d)
    path = lalr.stagewise_logistic(d, epsilon)
    assert path.stop_reason == lalr.EPSILON_LIMITED
    assert not path.converged_to_mle
    assert np.abs(path.final.beta - beta).max() < 10 * epsilon * 3
    log_liks = [state.log_lik for state in path.states]
    assert (np.diff(log_liks) >= -1e-10).all()


@pytest.mark.lalr
def test_logistic_path_dump(logistic_data):
    dump = lalr.lalr_path(logistic_data).to_dict()
    assert dump["converged_to_mle"] is True
    assert dump["stop_reason"] == lalr.CONVERGED
    assert set(dump["states"][0]) == {"step", "event", "beta", "intercept", "log_lik", "active"}


@pytest.mark.lalr
@pytest.mark.slow
@pytest.mark.parametrize("seed", range(5))
def test_both_paths_arrive_at_mle(seed):
    """
    Given the 1000 x 10 simulated logistic sample
    When both logistic paths run to completion
    Then their final raw-scale coefficients are within 1e-3 of the MLE
    """
    raw, _ = dataset.simulate_logistic(dataset.SyntheticSpec(1000, 10, 1.0, seed))
    d = dataset.standardize(raw)
    beta, intercept = lalr.mle_logistic(d)
    reference = _raw(beta, d, intercept)

    least_angle = lalr.lalr_path(d)
    stagewise = lalr.stagewise_logistic(d, 1e-3)
    for path in (least_angle, stagewise):
        assert np.abs(_raw(path.final.beta, d, path.final.intercept) - reference).max() < 1e-3


def _wide_range(seed=0):
    """Most rows far from the decision boundary and a few near it."""
    rng = np.random.default_rng(seed)
    x = np.concatenate([rng.uniform(-10, 10, 360), rng.uniform(-1, 1, 40)])
    y = (rng.random(400) < expit(4 * x)).astype(float)
    return dataset.BinaryDataset(x[:, None], y)


@pytest.mark.lalr
def test_is_separated():
    Z = np.column_stack([np.ones(4), [-2.0, -1.0, 1.0, 2.0]])
    assert lalr.is_separated(Z, np.array([0.0, 0.0, 1.0, 1.0]))
    assert lalr.is_separated(Z, np.array([1.0, 1.0, 0.0, 0.0]))
    assert not lalr.is_separated(Z, np.array([0.0, 1.0, 0.0, 1.0]))
    Z_tied = np.column_stack([np.ones(4), [-1.0, 0.0, 0.0, 1.0]])
    assert lalr.is_separated(Z_tied, np.array([0.0, 0.0, 1.0, 1.0]))


@pytest.mark.lalr
def test_mle_logistic_wide_range_predictor():
    """
    Given overlapping classes where most fitted predictors exceed 30 in size
    When the maximum likelihood fit is computed
    Then it converges to a finite stationary point instead of reporting separation
    """
    d = _wide_range()
    Z = np.column_stack([np.ones(d.n), d.X])
    assert not lalr.is_separated(Z, d.y)

    beta, intercept = lalr.mle_logistic(d)
    theta = np.concatenate(([intercept], beta))
    assert np.abs(Z.T @ (d.y - expit(Z @ theta))).max() < 1e-8
    assert 2 < beta[0] < 8
    assert np.abs(Z @ theta).max() > 30


@pytest.mark.lalr
def test_lalr_path_wide_range_predictor():
    d = _wide_range()
    beta, intercept = lalr.mle_logistic(d)
    s = dataset.standardize(d)
    path = lalr.lalr_path(s)
    assert path.converged_to_mle
    assert path.stop_reason == lalr.CONVERGED
    assert np.isclose(_raw(path.final.beta, s, path.final.intercept)[0], beta[0], rtol=1e-6)


@pytest.mark.lalr
def test_newton_failure_on_overlapping_classes_is_not_separation(logistic_data):
    """
    Given overlapping classes
    When Newton-Raphson runs out of iterations or cannot meet its tolerance
    Then it raises a convergence error rather than returning or blaming separation
    """
    with pytest.raises(lalr.ConvergenceError):
        lalr.mle_logistic(logistic_data, max_iter=1)

    Z = np.column_stack([np.ones(logistic_data.n), logistic_data.X])
    start = np.zeros(logistic_data.p + 1)
    with pytest.raises(lalr.ConvergenceError):
        lalr._newton(Z, logistic_data.y, start, tol=0.0, max_iter=500)


@pytest.mark.lalr
def test_lalr_entry_steps_seeded_by_line_search(logistic_data, monkeypatch):
    """
    Given the least angle logistic path on several covariates
    When it looks for the next entry
    Then it starts from the linearized step refined along the current direction
    """
    calls = {"linearized": 0, "refine": 0}
    linearized, refine = lalr.linearized_step, lalr.refine_step

    def counted_linearized(*args, **kwargs):
        calls["linearized"] += 1
        assert kwargs.get("direction") is not None
        return linearized(*args, **kwargs)

    def counted_refine(*args, **kwargs):
        calls["refine"] += 1
        return refine(*args, **kwargs)

    monkeypatch.setattr(lalr, "linearized_step", counted_linearized)
    monkeypatch.setattr(lalr, "refine_step", counted_refine)
    path = lalr.lalr_path(logistic_data)

    entries = sum(state.event.kind == "added" for state in path.states) - 1
    assert entries >= 1
    assert calls["linearized"] >= entries
    assert calls["refine"] >= 1
    assert path.converged_to_mle


@pytest.mark.lalr
def test_seed_step_close_to_exact_entry(logistic_data):
    """
    Given the path right after its first covariate enters
    When the entry of the second covariate is estimated along the current direction
    Then the estimate agrees with the exact entry to first order
    """
    d = logistic_data
    path = lalr.lalr_path(d)
    first, second = [s for s in path.states if s.event.kind == "added"][:2]
    j, sign = first.event.variable, first.signs[first.event.variable]
    Z = np.column_stack([np.ones(d.n), d.X[:, j]])
    theta = np.array([first.intercept, first.beta[j]])
    direction = lalr._direction(Z, d.y, theta, np.array([0.0, sign]))
    inactive = [k for k in range(d.p) if k != j]

    guess = lalr._seed_step(d.X, d.y, Z @ theta, Z @ direction, j, sign, inactive, first.max_score)
    exact = first.max_score - second.max_score
    assert guess > 0
    assert abs(guess - exact) < 0.5 * exact


@pytest.mark.lalr
def test_stagewise_stop_reasons(logistic_data):
    """
    Given a coarse increment
    When stagewise stops because no increment raises the log-likelihood
    Then it reports an epsilon-limited stop, not convergence to the MLE
    """
    path = lalr.stagewise_logistic(logistic_data, 0.5)
    assert path.stop_reason == lalr.EPSILON_LIMITED
    assert not path.converged_to_mle
    assert path.final.max_score > lalr.SCORE_TOL_FACTOR * logistic_data.n
    assert path.to_dict()["stop_reason"] == lalr.EPSILON_LIMITED

    X = np.array([[1.0], [1.0], [-1.0], [-1.0]])
    d = dataset.standardize(dataset.BinaryDataset(X, np.array([1.0, 0.0, 1.0, 0.0])))
    flat = lalr.stagewise_logistic(d, 1e-3)
    assert flat.stop_reason == lalr.CONVERGED
    assert flat.converged_to_mle


@pytest.mark.lalr
@pytest.mark.slow
def test_stagewise_runtime_on_large_sample():
    """
    Given the 1000 x 10 simulated logistic sample
    When stagewise runs with epsilon 1e-3
    Then it finishes within 30 seconds and ends near the MLE
    """
    raw, _ = dataset.simulate_logistic(dataset.SyntheticSpec(1000, 10, 1.0, 0))
    d = dataset.standardize(raw)
    beta, _ = lalr.mle_logistic(d)
    start = time.perf_counter()
    path = lalr.stagewise_logistic(d, 1e-3)
    assert time.perf_counter() - start < 30
    assert path.stop_reason == lalr.EPSILON_LIMITED
    assert np.abs(path.final.beta - beta).max() < 0.05
