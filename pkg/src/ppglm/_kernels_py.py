"""Pure-NumPy solver kernels.

Reference implementations of the hot loops; the compiled module
``ppglm._kernels`` exports the same functions with the same contracts.
Which one the package uses is decided at import time in
``ppglm._backend``.

Family codes: 0 gaussian, 1 logistic, 2 poisson.  Status codes:
0 converged, 1 iteration budget exhausted, 2 inner failure
(non-finite step, singular system beyond ridge repair).
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

BACKEND_NAME = "python"

_THETA_MAX = 30.0  # poisson linear-predictor clamp, same constant as families
_L_MAX = 1e16
_RIDGE = 1e-8


def soft_threshold(x, thresh):
    """Componentwise sign(x) * max(|x| - thresh, 0)."""
    return np.sign(x) * np.maximum(np.abs(x) - thresh, 0.0)


def _smooth_value(code, theta, y, n):
    if code == 0:
        b = 0.5 * theta * theta
    elif code == 1:
        b = np.where(theta > 0, theta, 0.0) + np.log1p(np.exp(-np.abs(theta)))
    else:
        b = np.exp(np.clip(theta, -_THETA_MAX, _THETA_MAX))
    return (b.sum() - y @ theta) / n


def _mean(code, theta):
    if code == 0:
        return theta
    if code == 1:
        q = np.exp(-np.abs(theta))
        return np.where(theta >= 0, 1.0 / (1.0 + q), q / (1.0 + q))
    return np.exp(np.clip(theta, -_THETA_MAX, _THETA_MAX))


def _variance(code, theta):
    if code == 0:
        return np.ones_like(theta)
    if code == 1:
        q = np.exp(-np.abs(theta))
        return q / (1.0 + q) ** 2
    return np.exp(np.clip(theta, -_THETA_MAX, _THETA_MAX))


def prox_grad_wlasso(X, y, code, pen, beta0, max_iter, tol, track_obj):
    """Proximal gradient with backtracking for smooth loss + sum pen_j |beta_j|.

    Returns (beta, n_iter, status, objective, obj_trace).
    """
    n = X.shape[0]
    beta = beta0.copy()
    theta = X @ beta
    f = _smooth_value(code, theta, y, n)
    obj = f + pen @ np.abs(beta)
    trace = [obj] if track_obj else None
    L = 1.0
    status = 1
    it = 0
    for it in range(1, max_iter + 1):
        grad = X.T @ (_mean(code, theta) - y) / n
        while True:
            cand = soft_threshold(beta - grad / L, pen / L)
            step = cand - beta
            dtheta = X @ step
            f_new = _smooth_value(code, theta + dtheta, y, n)
            quad = f + grad @ step + 0.5 * L * (step @ step)
            # strict test: any slack here lets sub-tol non-descent steps
            # random-walk the iterate and defeat the stopping rule
            if f_new <= quad:
                break
            L *= 2.0
            if L > _L_MAX:
                return beta, it, 2, obj, _as_trace(trace)
        new_obj = f_new + pen @ np.abs(cand)
        delta_obj = obj - new_obj
        max_move = np.max(np.abs(step)) if step.size else 0.0
        beta, theta, f, obj = cand, theta + dtheta, f_new, new_obj
        if track_obj:
            trace.append(obj)
        if delta_obj < tol and max_move < tol:
            status = 0
            break
        L = max(L * 0.9, 1e-12)
    return beta, it, status, obj, _as_trace(trace)


def _as_trace(trace):
    return np.asarray(trace) if trace is not None else np.empty(0)


def _factor(H):
    """Cholesky with a single ridge retry; returns factor or None."""
    try:
        return scipy.linalg.cho_factor(H, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError:
        try:
            return scipy.linalg.cho_factor(
                H + _RIDGE * np.eye(H.shape[0]), lower=True, check_finite=False)
        except scipy.linalg.LinAlgError:
            return None


def admm_wlasso(X, y, code, C, t, m_idx, pen_idx, weights,
                beta0, eta0, nu10, nu20, rho0,
                tol_primal, tol_dual, max_iter, newton_tol, newton_max,
                adapt_rho):
    """ADMM for  min loss(beta) + sum_j w_j |beta_j| (j penalized)
    subject to  C beta_M = t.

    The penalized block carries a split variable eta with soft-threshold
    updates; the linear constraint is absorbed into the augmented
    Lagrangian with dual nu1, the split constraint with dual nu2.

    Returns (beta, eta, nu1, nu2, n_iter, status, rho, residuals,
    newton_steps, n_factor, res_history) where residuals is the final
    [||C beta_M - t||, ||beta_pen - eta||, rho*||eta - eta_prev||] and
    res_history holds that triple every 10 iterations plus the last.
    """
    n, p = X.shape
    r = C.shape[0]
    q = pen_idx.size
    beta = beta0.copy()
    eta = eta0.copy()
    nu1 = nu10.copy()
    nu2 = nu20.copy()
    rho = rho0

    Cpad = np.zeros((r, p))
    if r:
        Cpad[:, m_idx] = C
    Bmat = Cpad.T @ Cpad
    Bmat[pen_idx, pen_idx] += 1.0

    theta = X @ beta
    chol = None
    hess_at = None
    newton_steps = 0
    n_factor = 0
    res = np.zeros(3)
    status = 1
    k = 0
    hist = np.empty((max_iter // 10 + 2, 3))
    hist_n = 0

    def penalty_quad(bvec):
        tot = 0.0
        if r:
            u = C @ bvec[m_idx] - t + nu1 / rho
            tot += 0.5 * rho * (u @ u)
        v = bvec[pen_idx] - eta + nu2 / rho
        tot += 0.5 * rho * (v @ v)
        return tot

    def grad_aug(bvec, th):
        g = X.T @ (_mean(code, th) - y) / n
        if r:
            g[m_idx] += rho * (C.T @ (C @ bvec[m_idx] - t + nu1 / rho))
        g[pen_idx] += rho * (bvec[pen_idx] - eta + nu2 / rho)
        return g

    need_factor = True
    for k in range(1, max_iter + 1):
        # beta update: damped Newton, Hessian refreshed lazily
        g_val = _smooth_value(code, theta, y, n) + penalty_quad(beta)
        for _ in range(newton_max):
            g = grad_aug(beta, theta)
            if np.max(np.abs(g)) <= newton_tol:
                break
            if code != 0 and hess_at is not None and \
                    np.max(np.abs(beta - hess_at)) > 0.05 * (1.0 + np.max(np.abs(beta))):
                need_factor = True
            if need_factor or chol is None:
                Hs = (X.T * _variance(code, theta)) @ X / n
                chol = _factor(Hs + rho * Bmat)
                n_factor += 1
                if chol is None:
                    hist[hist_n] = res
                    return (beta, eta, nu1, nu2, k, 2, rho, res,
                            newton_steps, n_factor, hist[:hist_n + 1])
                hess_at = beta.copy()
                need_factor = False
            delta = -scipy.linalg.cho_solve(chol, g, check_finite=False)
            dtheta = X @ delta
            slope = g @ delta
            alpha = 1.0
            while alpha > 1e-10:
                cand = beta + alpha * delta
                cand_val = _smooth_value(code, theta + alpha * dtheta, y, n) + penalty_quad(cand)
                if cand_val <= g_val + 1e-4 * alpha * slope:
                    break
                alpha *= 0.5
            else:
                if slope > -1e-13 * (1.0 + abs(g_val)):
                    break  # no descent possible at machine precision: stationary
                if hess_at is not None and np.any(hess_at != beta):
                    need_factor = True  # stale curvature: rebuild and retry
                    continue
                hist[hist_n] = res
                return (beta, eta, nu1, nu2, k, 2, rho, res,
                        newton_steps, n_factor, hist[:hist_n + 1])
            beta = beta + alpha * delta
            theta = theta + alpha * dtheta
            g_val = cand_val
            newton_steps += 1

        # eta update (proximal step; exact zeros live here)
        eta_prev = eta
        if q:
            eta = soft_threshold(beta[pen_idx] + nu2 / rho, weights / rho)

        # dual updates
        r1 = (C @ beta[m_idx] - t) if r else np.empty(0)
        r2 = beta[pen_idx] - eta
        nu1 = nu1 + rho * r1
        nu2 = nu2 + rho * r2

        res[0] = np.linalg.norm(r1)
        res[1] = np.linalg.norm(r2)
        res[2] = rho * np.linalg.norm(eta - eta_prev)
        if k % 10 == 0:
            hist[hist_n] = res
            hist_n += 1

        eps1 = tol_primal * (np.sqrt(r) + max(np.linalg.norm(C @ beta[m_idx]) if r else 0.0,
                                              np.linalg.norm(t) if r else 0.0))
        eps2 = tol_primal * (np.sqrt(q) + max(np.linalg.norm(beta[pen_idx]),
                                              np.linalg.norm(eta)))
        epsd = tol_dual * (np.sqrt(q) + np.linalg.norm(nu2))
        if res[0] <= eps1 and res[1] <= eps2 and res[2] <= epsd:
            status = 0
            break

        if adapt_rho and k % 10 == 0:
            prim = np.hypot(res[0], res[1])
            if prim > 10.0 * res[2] and rho < 1e6:
                rho *= 2.0
                need_factor = True
            elif res[2] > 10.0 * prim and rho > 1e-6:
                rho *= 0.5
                need_factor = True

    hist[hist_n] = res
    return (beta, eta, nu1, nu2, k, status, rho, res, newton_steps, n_factor,
            hist[:hist_n + 1])
