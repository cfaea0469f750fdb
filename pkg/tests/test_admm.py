import numpy as np
import pytest

from ppglm._backend import available_backends
from ppglm.admm import (AdmmConfig, AdmmState, ConstrainedWLassoProblem,
                        beta_update, eta_update, penalized_indices, solve)
from ppglm.errors import ConvergenceError, InputError
from ppglm.families import Dataset, gaussian, gradient, logistic, poisson

FAMILIES = {"gaussian": gaussian(), "logistic": logistic(), "poisson": poisson()}


def _make_data(rng, fam, n, p, signal=(1.5, -1.2)):
    X = 0.8 * rng.standard_normal((n, p))
    beta = np.zeros(p)
    beta[: len(signal)] = signal
    theta = X @ beta
    if fam.kind == "gaussian":
        y = theta + rng.standard_normal(n)
    elif fam.kind == "logistic":
        y = (rng.random(n) < 1 / (1 + np.exp(-theta))).astype(float)
    else:
        y = rng.poisson(np.exp(np.clip(theta, -5, 5))).astype(float)
    return Dataset(X, y)


def _problem(data, fam, M, C, t, weights):
    return ConstrainedWLassoProblem(family=fam, data=data,
                                    M=np.asarray(M, dtype=np.intp),
                                    C=C, t=t, weights=weights)


def test_zero_weights_no_constraint_equals_mle():
    rng = np.random.default_rng(0)
    data = _make_data(rng, gaussian(), 100, 8)
    prob = _problem(data, gaussian(), [], None, None, np.zeros(8))
    fit, _, _ = solve(prob)
    ols = np.linalg.solve(data.X.T @ data.X, data.X.T @ data.y)
    assert np.linalg.norm(fit.beta - ols) < 1e-6


def test_identity_constraint_pins_tested_block():
    rng = np.random.default_rng(1)
    data = _make_data(rng, gaussian(), 60, 6)
    t = np.array([0.7, -0.3])
    prob = _problem(data, gaussian(), [0, 1], np.eye(2), t,
                    0.2 * np.ones(4))
    fit, _, _ = solve(prob)
    assert np.linalg.norm(fit.beta[[0, 1]] - t) < 1e-8


def test_matches_lasso_solver_in_objective():
    from ppglm.lasso import fit_lasso
    from ppglm.families import loss
    rng = np.random.default_rng(2)
    data = _make_data(rng, gaussian(), 70, 9)
    lam = 0.15
    prob = _problem(data, gaussian(), [], None, None, lam * np.ones(9))
    fit, _, _ = solve(prob)
    ref = fit_lasso(gaussian(), data, lam)
    obj = lambda b: loss(gaussian(), data, b) + lam * np.abs(b).sum()
    assert abs(obj(fit.beta) - obj(ref.beta)) < 1e-5


def _kkt_residuals(prob, fit, nu1):
    """Max stationarity violations of the constrained weighted lasso.

    The certificate multiplier is -nu1: the augmented Lagrangian adds
    nu1'(C beta_M - t), so stationarity reads grad_M + C' nu1 = 0.
    """
    g = gradient(prob.family, prob.data, fit.beta)
    stat_m = 0.0
    if prob.C is not None:
        stat_m = np.max(np.abs(g[prob.M] + prob.C.T @ nu1))
    elif prob.M.size:
        stat_m = np.max(np.abs(g[prob.M]))
    worst_zero, worst_nonzero = 0.0, 0.0
    for w, j in zip(prob.weights, prob.penalized):
        if fit.beta[j] == 0.0:
            worst_zero = max(worst_zero, abs(g[j]) - w)
        else:
            worst_nonzero = max(worst_nonzero, abs(g[j] + w * np.sign(fit.beta[j])))
    return stat_m, worst_zero, worst_nonzero


def test_kkt_residuals_on_random_problems():
    rng = np.random.default_rng(3)
    tol = 1e-7
    for trial in range(8):
        fam = list(FAMILIES.values())[trial % 3]
        data = _make_data(rng, fam, 80, 7)
        weights = rng.uniform(0.05, 0.3, 5)
        prob = _problem(data, fam, [0, 1], np.array([[1.0, 1.0]]),
                        np.array([0.3]), weights)
        fit, state, _ = solve(prob, AdmmConfig(tol_primal=tol, tol_dual=tol))
        stat_m, wz, wnz = _kkt_residuals(prob, fit, state.nu1)
        scale = 10 * tol * max(1.0, np.abs(state.nu1).max() if state.nu1.size else 1.0)
        assert stat_m < 1e-5  # nu is the running dual, residual-scale accurate
        assert wz < scale and wnz < 1e-5


def test_gaussian_constrained_matches_direct_kkt():
    # zero weights turn the problem into an equality-constrained
    # quadratic solvable in closed form
    rng = np.random.default_rng(4)
    for _ in range(5):
        data = _make_data(rng, gaussian(), 50, 6)
        M = [0, 2]
        C = np.array([[1.0, -1.0]])
        t = np.array([0.4])
        prob = _problem(data, gaussian(), M, C, t, np.zeros(4))
        fit, _, _ = solve(prob)
        n, p = data.n, data.p
        H = data.X.T @ data.X / n
        g = data.X.T @ data.y / n
        Cfull = np.zeros((1, p))
        Cfull[:, M] = C
        K = np.block([[H, Cfull.T], [Cfull, np.zeros((1, 1))]])
        sol = np.linalg.solve(K, np.concatenate([g, t]))
        assert np.max(np.abs(fit.beta - sol[:p])) < 1e-6


def test_returned_tested_block_exactly_feasible():
    rng = np.random.default_rng(5)
    data = _make_data(rng, logistic(), 90, 6)
    C = np.array([[1.0, 2.0]])
    t = np.array([0.25])
    prob = _problem(data, logistic(), [0, 1], C, t, 0.1 * np.ones(4))
    fit, _, _ = solve(prob)
    assert abs(C @ fit.beta[[0, 1]] - t)[0] < 1e-14


def test_support_zeros_are_exact():
    rng = np.random.default_rng(6)
    data = _make_data(rng, gaussian(), 60, 10)
    prob = _problem(data, gaussian(), [0], None, None, 0.5 * np.ones(9))
    fit, _, _ = solve(prob)
    off = np.setdiff1d(np.arange(10), np.concatenate([[0], fit.support]))
    assert np.all(fit.beta[off] == 0.0)


def test_scaled_dual_identity_single_iteration():
    from ppglm._backend import kernels
    rng = np.random.default_rng(7)
    data = _make_data(rng, gaussian(), 40, 5)
    M = np.array([0], dtype=np.intp)
    pen = penalized_indices(5, M, False)
    C = np.ascontiguousarray([[1.0]])
    t = np.array([0.2])
    w = 0.1 * np.ones(4)
    nu1_in = np.array([0.05])
    rho = 1.3
    out = kernels.admm_wlasso(
        data.X, data.y, 0, C, t, M, pen, w,
        np.zeros(5), np.zeros(4), nu1_in.copy(), np.zeros(4),
        rho, 1e-7, 1e-7, 1, 1e-10, 50, False)
    beta1, nu1_out = out[0], out[2]
    expected = nu1_in + rho * (C @ beta1[M] - t)
    np.testing.assert_array_equal(nu1_out, expected)


def test_beta_update_gaussian_stationarity():
    rng = np.random.default_rng(8)
    data = _make_data(rng, gaussian(), 50, 6)
    M = np.array([0, 1], dtype=np.intp)
    C = np.array([[1.0, 1.0]])
    t = np.array([0.0])
    prob = _problem(data, gaussian(), M, C, t, 0.2 * np.ones(4))
    config = AdmmConfig()
    pen = prob.penalized
    state = AdmmState(beta=np.zeros(6), eta=0.1 * np.ones(4),
                      nu1=np.array([0.3]), nu2=0.05 * np.ones(4))
    beta = beta_update(state, prob, config)
    rho = config.rho
    # gradient of the augmented objective at the returned point
    g = gradient(gaussian(), data, beta)
    g[M] += rho * C.T @ (C @ beta[M] - t + state.nu1 / rho)
    g[pen] += rho * (beta[pen] - state.eta + state.nu2 / rho)
    assert np.max(np.abs(g)) < 1e-7


def test_beta_update_penalty_dominates_at_huge_rho():
    rng = np.random.default_rng(9)
    data = _make_data(rng, logistic(), 80, 5)
    M = np.array([0, 1], dtype=np.intp)
    C = np.array([[1.0, -1.0]])
    t = np.array([0.1])
    prob = _problem(data, logistic(), M, C, t, 0.1 * np.ones(3))
    config = AdmmConfig(rho=1e8)
    state = AdmmState(beta=np.zeros(5), eta=np.zeros(3),
                      nu1=np.array([2.0]), nu2=np.zeros(3))
    beta = beta_update(state, prob, config)
    target = t - state.nu1 / config.rho
    assert np.linalg.norm(C @ beta[M] - target) < 1e-3


def test_eta_update_soft_threshold_values():
    rng = np.random.default_rng(10)
    data = _make_data(rng, gaussian(), 30, 4)
    prob = _problem(data, gaussian(), [0], None, None,
                    np.array([0.3, 0.5, 0.3]))
    config = AdmmConfig(rho=1.0)
    beta = np.zeros(4)
    beta[[1, 2, 3]] = [1.0, -0.2, 0.0]
    state = AdmmState(beta=beta, eta=np.zeros(3), nu1=np.zeros(0),
                      nu2=np.zeros(3))
    eta = eta_update(state, prob, config)
    np.testing.assert_allclose(eta, [0.7, 0.0, 0.0], atol=1e-15)


def test_backend_equivalence():
    backends = available_backends()
    if len(backends) < 2:
        pytest.skip("compiled backend unavailable")
    rng = np.random.default_rng(11)
    data = _make_data(rng, poisson(), 60, 6)
    M = np.array([0], dtype=np.intp)
    pen = penalized_indices(6, M, False)
    C = np.ascontiguousarray([[1.0]])
    t = np.array([0.1])
    w = 0.15 * np.ones(5)
    outs = {}
    for name, mod in backends.items():
        outs[name] = mod.admm_wlasso(
            data.X, data.y, 2, C, t, M, pen, w,
            np.zeros(6), np.zeros(5), np.zeros(1), np.zeros(5),
            1.0, 1e-7, 1e-7, 10000, 1e-8, 50, True)
    b1, b2 = outs["python"][0], outs["compiled"][0]
    assert np.max(np.abs(b1 - b2)) < 1e-6


def test_nonconvergence_error_carries_state():
    rng = np.random.default_rng(12)
    data = _make_data(rng, gaussian(), 50, 6)
    prob = _problem(data, gaussian(), [0], np.array([[1.0]]),
                    np.array([0.0]), 0.2 * np.ones(5))
    with pytest.raises(ConvergenceError) as err:
        solve(prob, AdmmConfig(max_iter=2))
    assert err.value.state.beta.shape == (6,)
    assert err.value.trace.shape[1] == 3


def test_problem_validation():
    rng = np.random.default_rng(13)
    data = _make_data(rng, gaussian(), 20, 4)
    with pytest.raises(InputError, match="rank deficient"):
        _problem(data, gaussian(), [0, 1],
                 np.array([[1.0, 1.0], [2.0, 2.0]]), np.zeros(2),
                 0.1 * np.ones(2))
    with pytest.raises(InputError):
        _problem(data, gaussian(), [9], np.array([[1.0]]), np.zeros(1),
                 0.1 * np.ones(3))
    with pytest.raises(InputError):
        _problem(data, gaussian(), [0], np.array([[1.0]]), np.zeros(1),
                 -0.1 * np.ones(3))
    with pytest.raises(InputError):
        _problem(data, gaussian(), [0], np.array([[1.0]]), np.zeros(2),
                 0.1 * np.ones(3))


def test_weights_as_dict_keyed_by_penalized_indices():
    rng = np.random.default_rng(14)
    data = _make_data(rng, gaussian(), 40, 4)
    prob = _problem(data, gaussian(), [1], None, None,
                    {0: 0.1, 2: 0.2, 3: 0.3})
    np.testing.assert_array_equal(prob.weights, [0.1, 0.2, 0.3])
    with pytest.raises(InputError):
        _problem(data, gaussian(), [1], None, None, {0: 0.1, 1: 0.2, 3: 0.3})


def test_penalized_indices_excludes_intercept():
    out = penalized_indices(5, [2], True)
    np.testing.assert_array_equal(out, [1, 3, 4])
