import numpy as np
import pytest

from ppglm.errors import InputError
from ppglm.families import Dataset, gaussian, gradient, logistic, loss
from ppglm.lla import HypothesisSpec
from ppglm.oracle import (OracleProblem, check_lla_events, fit_oracle_full,
                          fit_oracle_reduced)
from ppglm.penalties import scad
from ppglm.sim import gen_beta, gen_design


def _gaussian_instance(seed, n=100, p=50):
    rng = np.random.default_rng(seed)
    X = gen_design(rng, n, p, 0.5)
    beta = gen_beta("three_signal", p, 0.0)
    y = X @ beta + rng.standard_normal(n)
    return Dataset(X, y), beta


def test_full_oracle_is_restricted_ols():
    data, beta_star = _gaussian_instance(0)
    prob = OracleProblem(gaussian(), data, M=[2], A=np.flatnonzero(beta_star))
    fit = fit_oracle_full(prob)
    act = prob.active
    ols = np.linalg.solve(data.X[:, act].T @ data.X[:, act],
                          data.X[:, act].T @ data.y)
    assert np.max(np.abs(fit.beta[act] - ols)) < 1e-8
    off = np.setdiff1d(np.arange(50), act)
    assert np.all(fit.beta[off] == 0.0)


def test_full_oracle_empty_signal_logistic():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((80, 5))
    y = (rng.random(80) < 0.4).astype(float)
    data = Dataset(X, y)
    prob = OracleProblem(logistic(), data, M=[0], A=[])
    fit = fit_oracle_full(prob)
    g = gradient(logistic(), data, fit.beta)
    assert abs(g[0]) < 1e-8
    assert np.all(fit.beta[1:] == 0.0)
    assert prob.S.size == 0


def test_full_oracle_error_shrinks_with_sample_size():
    errs = []
    for n in (100, 400, 1600):
        rng = np.random.default_rng(42)
        X = gen_design(rng, n, 50, 0.5)
        beta_star = gen_beta("three_signal", 50, 0.0)
        y = X @ beta_star + rng.standard_normal(n)
        prob = OracleProblem(gaussian(), Dataset(X, y), M=[2],
                             A=np.flatnonzero(beta_star))
        fit = fit_oracle_full(prob)
        errs.append(np.linalg.norm(fit.beta - beta_star))
    assert errs[0] > errs[1] > errs[2]


def test_reduced_oracle_matches_direct_kkt_gaussian():
    data, beta_star = _gaussian_instance(2)
    hyp = HypothesisSpec(M=[2], C=[[1.0]], t=[0.0])
    prob = OracleProblem(gaussian(), data, M=[2],
                         A=np.flatnonzero(beta_star), hyp=hyp)
    fit = fit_oracle_reduced(prob)
    act = prob.active
    H = data.X[:, act].T @ data.X[:, act] / data.n
    g = data.X[:, act].T @ data.y / data.n
    Cb = np.zeros((1, act.size))
    Cb[0, np.searchsorted(act, 2)] = 1.0
    K = np.block([[H, Cb.T], [Cb, np.zeros((1, 1))]])
    sol = np.linalg.solve(K, np.concatenate([g, [0.0]]))
    assert np.max(np.abs(fit.beta[act] - sol[:act.size])) < 1e-8


def test_reduced_oracle_identity_constraint_pins_and_profiles():
    data, beta_star = _gaussian_instance(3)
    t = np.array([0.5, -0.25])
    hyp = HypothesisSpec(M=[0, 1], C=np.eye(2), t=t)
    prob = OracleProblem(gaussian(), data, M=[0, 1],
                         A=np.flatnonzero(beta_star), hyp=hyp)
    fit = fit_oracle_reduced(prob)
    assert np.max(np.abs(fit.beta[[0, 1]] - t)) < 1e-10
    # remaining coordinates solve the problem with X_M t as an offset
    S = prob.S
    resid = data.y - data.X[:, [0, 1]] @ t
    prof = np.linalg.solve(data.X[:, S].T @ data.X[:, S],
                           data.X[:, S].T @ resid)
    assert np.max(np.abs(fit.beta[S] - prof)) < 1e-8


def test_reduced_oracle_stationarity_with_multiplier():
    # at the optimum the active gradient equals -C'nu on M, zero on S
    data, beta_star = _gaussian_instance(4)
    hyp = HypothesisSpec(M=[0, 1], C=[[1.0, 1.0]], t=[0.0])
    prob = OracleProblem(gaussian(), data, M=[0, 1],
                         A=np.flatnonzero(beta_star), hyp=hyp)
    fit = fit_oracle_reduced(prob)
    nu = fit.extras["multiplier"]
    g = gradient(gaussian(), data, fit.beta)
    assert np.max(np.abs(g[hyp.M] + hyp.C.T @ nu)) < 1e-9
    assert np.max(np.abs(g[prob.S])) < 1e-9
    assert fit.extras["feasibility"] < 1e-10


def test_reduced_loss_at_least_full_loss():
    for seed in range(5):
        data, beta_star = _gaussian_instance(10 + seed)
        hyp = HypothesisSpec(M=[2], C=[[1.0]], t=[0.0])
        prob = OracleProblem(gaussian(), data, M=[2],
                             A=np.flatnonzero(beta_star), hyp=hyp)
        lf = loss(gaussian(), data, fit_oracle_full(prob).beta)
        lr = loss(gaussian(), data, fit_oracle_reduced(prob).beta)
        assert lr >= lf - 1e-9


def test_problem_validation():
    data, beta_star = _gaussian_instance(5)
    with pytest.raises(InputError):
        OracleProblem(gaussian(), data, M=[], A=[0, 1])
    with pytest.raises(InputError):
        OracleProblem(gaussian(), data, M=[99], A=[0])
    with pytest.raises(InputError):
        OracleProblem(gaussian(), data, M=[0], A=np.arange(200))
    with pytest.raises(InputError):
        fit_oracle_reduced(OracleProblem(gaussian(), data, M=[0], A=[1]))
    Xint = np.column_stack([np.ones(20), np.arange(20.0)])
    dint = Dataset(Xint, np.arange(20.0), has_intercept=True)
    with pytest.raises(InputError):
        OracleProblem(gaussian(), dint, M=[0], A=[1])


def test_events_hold_on_strong_signal_fit():
    data, beta_star = _gaussian_instance(2)
    prob = OracleProblem(gaussian(), data, M=[2], A=np.flatnonzero(beta_star))
    fit = fit_oracle_full(prob)
    # lambda must clear the noise-gradient level (about 0.19 on this
    # draw) while staying under min-signal/(a+1) = 1.5/4.7
    pen = scad(0.3)
    init = beta_star + 0.1  # inside the a0*lambda ball
    rep = check_lla_events(prob, fit, pen, beta_init=init, beta_star=beta_star)
    assert rep.all_hold, rep.margins
    assert rep.init_close and rep.separation is True


def test_events_fail_when_lambda_inflated():
    data, beta_star = _gaussian_instance(7)
    prob = OracleProblem(gaussian(), data, M=[2], A=np.flatnonzero(beta_star))
    fit = fit_oracle_full(prob)
    rep = check_lla_events(prob, fit, scad(25.0), beta_star=beta_star)
    assert not rep.signal_above_threshold
    assert rep.separation is False
    achieved, bound = rep.margins["signal_above_threshold"]
    assert achieved < bound


def test_events_vacuous_on_empty_signal_set():
    rng = np.random.default_rng(8)
    X = rng.standard_normal((60, 6))
    y = rng.standard_normal(60)
    data = Dataset(X, y)
    prob = OracleProblem(gaussian(), data, M=[0], A=[])
    fit = fit_oracle_full(prob)
    rep = check_lla_events(prob, fit, scad(0.5), beta_star=np.zeros(6))
    assert rep.signal_above_threshold and rep.separation
    assert rep.margins["signal_above_threshold"][0] == np.inf
    # the gradient event then ranges over every untested coordinate
    assert rep.margins["gradient_interior"][1] == pytest.approx(0.5)


def test_events_none_without_truth():
    data, beta_star = _gaussian_instance(9)
    prob = OracleProblem(gaussian(), data, M=[2], A=np.flatnonzero(beta_star))
    fit = fit_oracle_full(prob)
    rep = check_lla_events(prob, fit, scad(0.25))
    assert rep.init_close is None and rep.separation is None
    assert rep.all_hold == (rep.gradient_interior and rep.signal_above_threshold)
