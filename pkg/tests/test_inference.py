import warnings

import numpy as np
import pytest

import ppglm.inference as inf
from ppglm.chisq import chisq_upper_quantile
from ppglm.errors import InputError
from ppglm.families import Dataset, family_from_name, gradient
from ppglm.lla import HypothesisSpec, lla_reduced
from ppglm.penalties import scad
from ppglm.results import FitResult
from ppglm.inference import (RunResult, TestConfig, dispersion_estimate,
                             lrt_statistic, power_approx, run_test,
                             score_statistic, support_set, wald_statistic)


def _fit(beta):
    beta = np.asarray(beta, dtype=np.float64)
    return FitResult(beta=beta, support=np.flatnonzero(beta),
                     objective=0.0, n_iter=1, converged=True)


def _gaussian_data(rng, n, p, beta):
    X = rng.standard_normal((n, p))
    y = X @ beta + rng.standard_normal(n)
    return Dataset(X, y, has_intercept=False), family_from_name("gaussian")


def test_support_set_examples():
    assert support_set(np.zeros(5), [1]).size == 0
    # nonzeros confined to the tested block do not count as support
    assert support_set(np.array([2.0, -1.0, 0, 0]), [0, 1]).size == 0
    np.testing.assert_array_equal(
        support_set(np.array([0.0, 0.5, 0.0, -1.0]), [0]), [1, 3])
    np.testing.assert_array_equal(
        support_set(np.array([0.3, 0.0, 0.5, 0.0, -1.0]), [1],
                    has_intercept=True), [2, 4])


def test_wald_zero_when_constraint_holds():
    rng = np.random.default_rng(0)
    data, fam = _gaussian_data(rng, 60, 6, np.zeros(6))
    hyp = HypothesisSpec([0, 1], [[1.0, 1.0]], [0.0])
    fit = _fit([1.5, -1.5, 0, 0, 0, 0])
    assert wald_statistic(fam, data, fit, hyp, 1.0) == 0.0


def test_wald_hand_formula_single_coordinate():
    # r = 1, empty support: T = (beta_j - t)^2 x_j'x_j / phi
    rng = np.random.default_rng(1)
    data, fam = _gaussian_data(rng, 50, 4, np.zeros(4))
    hyp = HypothesisSpec([2], [[1.0]], [0.1])
    fit = _fit([0, 0, 0.7, 0])
    expected = (0.7 - 0.1) ** 2 * (data.X[:, 2] @ data.X[:, 2]) / 1.3
    got = wald_statistic(fam, data, fit, hyp, 1.3)
    assert got == pytest.approx(expected, rel=1e-10)


def test_wald_invariant_under_constraint_rescaling():
    rng = np.random.default_rng(2)
    data, fam = _gaussian_data(rng, 80, 8, np.zeros(8))
    fit = _fit([0.9, -0.4, 0, 0.3, 0, 0, 0, 0])
    h1 = HypothesisSpec([0, 1], [[1.0, 1.0]], [0.2])
    h2 = HypothesisSpec([0, 1], [[2.0, 2.0]], [0.4])
    a = wald_statistic(fam, data, fit, h1, 1.0)
    b = wald_statistic(fam, data, fit, h2, 1.0)
    assert a == pytest.approx(b, rel=1e-8)


def test_statistics_invariant_under_row_mixing():
    # premultiplying (C, t) by an invertible Q leaves the constraint
    # set, hence every statistic, unchanged
    rng = np.random.default_rng(3)
    beta = np.zeros(10)
    beta[:2] = [2.0, -2.0]
    data, fam = _gaussian_data(rng, 90, 10, beta)
    C = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, -1.0]])
    t = np.array([2.0, 0.0])
    Q = np.array([[3.0, 1.0], [-1.0, 2.0]])
    h1 = HypothesisSpec([0, 1, 2], C, t)
    h2 = HypothesisSpec([0, 1, 2], Q @ C, Q @ t)

    fit = _fit([1.8, -1.9, 0.05, 0, 0.4, 0, 0, 0, 0, 0])
    assert wald_statistic(fam, data, fit, h1, 1.0) == pytest.approx(
        wald_statistic(fam, data, fit, h2, 1.0), rel=1e-8)

    pen = scad(0.35)
    init = np.zeros(10)
    red1 = lla_reduced(fam, data, h1, pen, init)
    red2 = lla_reduced(fam, data, h2, pen, init)
    np.testing.assert_allclose(red1.beta, red2.beta, atol=1e-6)
    s1 = score_statistic(fam, data, red1, h1, 1.0)
    s2 = score_statistic(fam, data, red2, h2, 1.0)
    assert s1 == pytest.approx(s2, abs=1e-5)
    full = _fit(beta)
    l1v, _ = lrt_statistic(fam, data, full, red1, 1.0)
    l2v, _ = lrt_statistic(fam, data, full, red2, 1.0)
    assert l1v == pytest.approx(l2v, abs=1e-5)


def test_score_zero_at_unrestricted_minimum():
    rng = np.random.default_rng(4)
    data, fam = _gaussian_data(rng, 70, 5, np.array([1.0, -1, 0.5, 0, 0]))
    beta_ols, *_ = np.linalg.lstsq(data.X, data.y, rcond=None)
    hyp = HypothesisSpec([0], [[1.0]], [1.0])
    assert score_statistic(fam, data, _fit(beta_ols), hyp, 1.0) < 1e-12


def test_score_hand_formula_and_nonnegative():
    rng = np.random.default_rng(5)
    data, fam = _gaussian_data(rng, 60, 7, np.zeros(7))
    hyp = HypothesisSpec([1], [[1.0]], [0.0])
    beta = np.array([0.0, 0.2, 0.0, -0.6, 0.0, 0.1, 0.0])
    act = np.array([1, 3, 5])
    g = gradient(fam, data, beta)[act]
    K = data.X[:, act].T @ data.X[:, act] / data.n
    expected = data.n * g @ np.linalg.solve(K, g) / 0.8
    got = score_statistic(fam, data, _fit(beta), hyp, 0.8)
    assert got == pytest.approx(expected, rel=1e-10)
    assert got >= 0.0


def test_lrt_zero_for_equal_fits_and_rss_identity():
    rng = np.random.default_rng(6)
    data, fam = _gaussian_data(rng, 50, 5, np.array([1.0, 0, 0, 0, 0]))
    fit = _fit([0.9, 0, 0, 0.1, 0])
    value, neg = lrt_statistic(fam, data, fit, fit, 1.0)
    assert value == 0.0 and not neg

    # gaussian loss is RSS/(2n), so the statistic is the RSS gap / phi
    full = _fit([1.0, 0.05, 0, 0, 0])
    red = _fit([0.7, 0, 0, 0, 0])
    rss = lambda b: float(np.sum((data.y - data.X @ b) ** 2))
    value, neg = lrt_statistic(fam, data, full, red, 2.0)
    assert value == pytest.approx((rss(red.beta) - rss(full.beta)) / 2.0,
                                  rel=1e-8)
    assert not neg


def test_lrt_negative_flag():
    rng = np.random.default_rng(7)
    data, fam = _gaussian_data(rng, 50, 5, np.array([1.0, 0, 0, 0, 0]))
    better = _fit(np.linalg.lstsq(data.X, data.y, rcond=None)[0])
    worse = _fit(np.zeros(5))
    # handing the better fit as "reduced" crosses the losses
    value, neg = lrt_statistic(fam, data, worse, better, 1.0)
    assert value < 0.0 and neg


def test_dispersion_known_family_is_one():
    rng = np.random.default_rng(8)
    X = rng.standard_normal((40, 4))
    y = (rng.uniform(size=40) < 0.5).astype(np.float64)
    data = Dataset(X, y, has_intercept=False)
    phi, flag = dispersion_estimate(family_from_name("logistic"), data,
                                    _fit(np.zeros(4)), [0])
    assert phi == 1.0 and not flag


def test_dispersion_gaussian_denominator():
    # n = 100, two support coordinates outside M, |M| = 1:
    # denominator is 100 - 2 - 1 - 1 = 96
    rng = np.random.default_rng(9)
    data, fam = _gaussian_data(rng, 100, 10, np.zeros(10))
    beta = np.zeros(10)
    beta[[1, 5, 7]] = [0.3, -0.2, 0.9]
    phi, flag = dispersion_estimate(fam, data, _fit(beta), [1])
    rss = float(np.sum((data.y - data.X @ beta) ** 2))
    assert phi == pytest.approx(rss / 96, rel=1e-12)
    assert not flag


def test_dispersion_degenerate_denominator_clamped():
    rng = np.random.default_rng(10)
    data, fam = _gaussian_data(rng, 4, 6, np.zeros(6))
    beta = np.zeros(6)
    beta[[1, 2, 3]] = 1.0
    with pytest.warns(UserWarning, match="denominator"):
        phi, flag = dispersion_estimate(fam, data, _fit(beta), [0])
    assert flag and phi > 0


def test_run_test_null_instance_structure():
    rng = np.random.default_rng(11)
    beta = np.zeros(12)
    beta[:2] = [2.0, -2.0]
    data, fam = _gaussian_data(rng, 100, 12, beta)
    hyp = HypothesisSpec([0, 1], [[1.0, 1.0]], [0.0])
    res = run_test(fam, data, hyp, TestConfig(alpha=0.05))

    assert set(res.reports) == {"wald", "score", "lrt"}
    crit = chisq_upper_quantile(0.05, 1)
    for rep in res.reports.values():
        assert rep.dof == 1
        assert 0.0 <= rep.p_value <= 1.0
        assert rep.reject == (rep.value > crit)
    # one tuning value drives both fits
    assert res.fit_full.extras["lambda"] == res.lambda_hat
    assert res.fit_reduced.extras["lambda"] == res.lambda_hat
    assert res.phi_full > 0 and res.phi_reduced > 0
    # reduced fit satisfies the constraint it was built under
    assert abs(res.fit_reduced.beta[:2].sum()) < 1e-10


def test_run_test_fixed_lambda_bypasses_selection():
    rng = np.random.default_rng(12)
    beta = np.zeros(10)
    beta[:2] = [2.0, -2.0]
    data, fam = _gaussian_data(rng, 80, 10, beta)
    hyp = HypothesisSpec([1], [[1.0]], [-2.0])
    res = run_test(fam, data, hyp, TestConfig(lambda_hat=0.4))
    assert res.lambda_hat == 0.4


def test_run_test_negative_lrt_reported_as_p_one(monkeypatch):
    rng = np.random.default_rng(13)
    beta = np.zeros(8)
    beta[0] = 2.0
    data, fam = _gaussian_data(rng, 60, 8, beta)
    hyp = HypothesisSpec([0], [[1.0]], [2.0])
    monkeypatch.setattr(inf, "lrt_statistic", lambda *a: (-0.75, True))
    with pytest.warns(UserWarning, match="negative likelihood ratio"):
        res = run_test(fam, data, hyp, TestConfig())
    assert res.lrt.value == -0.75          # reported as computed
    assert res.lrt.p_value == 1.0
    assert not res.lrt.reject
    assert res.lrt.negative_statistic


def test_run_test_input_validation():
    rng = np.random.default_rng(14)
    data, fam = _gaussian_data(rng, 30, 5, np.zeros(5))
    with pytest.raises(InputError, match="past the design"):
        run_test(fam, data, HypothesisSpec([7], [[1.0]], [0.0]))
    Xi = np.column_stack([np.ones(30), data.X])
    di = Dataset(Xi, data.y, has_intercept=True)
    with pytest.raises(InputError, match="intercept"):
        run_test(fam, di, HypothesisSpec([0], [[1.0]], [0.0]))
    with pytest.raises(InputError):
        TestConfig(alpha=1.5)
    with pytest.raises(InputError):
        TestConfig(penalty_kind="ridge")
    with pytest.raises(InputError):
        TestConfig(lambda_hat=-1.0)


def test_power_is_alpha_under_the_null():
    rng = np.random.default_rng(15)
    beta = np.zeros(10)
    beta[:2] = [2.0, -2.0]
    data, fam = _gaussian_data(rng, 100, 10, beta)
    hyp = HypothesisSpec([0, 1], [[1.0, 1.0]], [0.0])
    power, nu = power_approx(fam, data, beta, hyp, alpha=0.05)
    assert nu == 0.0
    assert power == pytest.approx(0.05, abs=1e-10)


def test_power_monotone_along_alternative_ray():
    rng = np.random.default_rng(16)
    beta = np.zeros(10)
    beta[:2] = [2.0, -2.0]
    data, fam = _gaussian_data(rng, 100, 10, beta)
    powers, nus = [], []
    for h in (0.0, 0.1, 0.2, 0.4, 0.8):
        hyp = HypothesisSpec([0, 1], [[1.0, 1.0]], [-h])
        power, nu = power_approx(fam, data, beta, hyp)
        powers.append(power)
        nus.append(nu)
    assert np.all(np.diff(powers) > 0)
    assert np.all(np.diff(nus) > 0)
    assert powers[-1] > 0.9
