# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled solver kernels.

Same contracts as ppglm._kernels_py; see that module for the reference
semantics.  Family codes: 0 gaussian, 1 logistic, 2 poisson.  Status
codes: 0 converged, 1 iteration budget exhausted, 2 inner failure.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, log1p, sqrt
from scipy.linalg.cython_lapack cimport dpotrf, dpotrs

cnp.import_array()

BACKEND_NAME = "compiled"

cdef double _THETA_MAX = 30.0
cdef double _L_MAX = 1e16
cdef double _RIDGE = 1e-8


cdef inline double _b_value(int code, double th) noexcept:
    if code == 0:
        return 0.5 * th * th
    if code == 1:
        if th > 0:
            return th + log1p(exp(-th))
        return log1p(exp(th))
    if th > _THETA_MAX:
        th = _THETA_MAX
    elif th < -_THETA_MAX:
        th = -_THETA_MAX
    return exp(th)


cdef inline double _b_mean(int code, double th) noexcept:
    cdef double q
    if code == 0:
        return th
    if code == 1:
        if th >= 0:
            q = exp(-th)
            return 1.0 / (1.0 + q)
        q = exp(th)
        return q / (1.0 + q)
    if th > _THETA_MAX:
        th = _THETA_MAX
    elif th < -_THETA_MAX:
        th = -_THETA_MAX
    return exp(th)


cdef inline double _b_var(int code, double th) noexcept:
    cdef double q
    if code == 0:
        return 1.0
    if code == 1:
        q = exp(-fabs(th))
        return q / ((1.0 + q) * (1.0 + q))
    if th > _THETA_MAX:
        th = _THETA_MAX
    elif th < -_THETA_MAX:
        th = -_THETA_MAX
    return exp(th)


cdef double _smooth_value(int code, double[::1] theta, double[::1] y,
                          Py_ssize_t n) noexcept:
    cdef Py_ssize_t i
    cdef double acc = 0.0
    for i in range(n):
        acc += _b_value(code, theta[i]) - y[i] * theta[i]
    return acc / n


cdef void _smooth_grad(double[:, ::1] X, double[::1] y, int code,
                       double[::1] theta, double[::1] out) noexcept:
    # out = X'(mu(theta) - y)/n
    cdef Py_ssize_t n = X.shape[0], p = X.shape[1], i, j
    cdef double resid
    for j in range(p):
        out[j] = 0.0
    for i in range(n):
        resid = _b_mean(code, theta[i]) - y[i]
        for j in range(p):
            out[j] += X[i, j] * resid
    for j in range(p):
        out[j] /= n


cdef void _matvec(double[:, ::1] X, double[::1] v, double[::1] out) noexcept:
    cdef Py_ssize_t n = X.shape[0], p = X.shape[1], i, j
    cdef double acc
    for i in range(n):
        acc = 0.0
        for j in range(p):
            acc += X[i, j] * v[j]
        out[i] = acc


def soft_threshold(x, thresh):
    """Componentwise sign(x) * max(|x| - thresh, 0)."""
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] tv = np.ascontiguousarray(thresh, dtype=np.float64)
    out = np.empty(xv.shape[0])
    cdef double[::1] ov = out
    cdef Py_ssize_t i
    cdef double z
    for i in range(xv.shape[0]):
        z = fabs(xv[i]) - tv[i]
        ov[i] = 0.0 if z <= 0.0 else (z if xv[i] > 0.0 else -z)
    return out


def prox_grad_wlasso(double[:, ::1] X, double[::1] y, int code,
                     double[::1] pen, double[::1] beta0,
                     int max_iter, double tol, bint track_obj):
    """Proximal gradient with backtracking; see the python twin."""
    cdef Py_ssize_t n = X.shape[0], p = X.shape[1], i, j
    beta_arr = np.array(beta0, dtype=np.float64)
    cdef double[::1] beta = beta_arr
    theta_arr = np.empty(n)
    cdef double[::1] theta = theta_arr
    cand_arr = np.empty(p)
    cdef double[::1] cand = cand_arr
    dtheta_arr = np.empty(n)
    cdef double[::1] dtheta = dtheta_arr
    grad_arr = np.empty(p)
    cdef double[::1] grad = grad_arr

    _matvec(X, beta, theta)
    cdef double f = _smooth_value(code, theta, y, n)
    cdef double obj = f, L = 1.0
    for j in range(p):
        obj += pen[j] * fabs(beta[j])

    trace_arr = np.empty(max_iter + 1) if track_obj else np.empty(0)
    cdef double[::1] trace = trace_arr
    if track_obj:
        trace[0] = obj

    cdef int it = 0, status = 1
    cdef double z, step_j, quad, f_new, new_obj, delta_obj, max_move, sq
    for it in range(1, max_iter + 1):
        _smooth_grad(X, y, code, theta, grad)
        while True:
            quad = 0.0
            sq = 0.0
            for j in range(p):
                z = beta[j] - grad[j] / L
                step_j = fabs(z) - pen[j] / L
                cand[j] = 0.0 if step_j <= 0.0 else (step_j if z > 0.0 else -step_j)
                step_j = cand[j] - beta[j]
                quad += grad[j] * step_j
                sq += step_j * step_j
            _matvec_diff(X, cand, beta, dtheta)
            f_new = 0.0
            for i in range(n):
                f_new += _b_value(code, theta[i] + dtheta[i]) - y[i] * (theta[i] + dtheta[i])
            f_new /= n
            # strict test: any slack here lets sub-tol non-descent steps
            # random-walk the iterate and defeat the stopping rule
            if f_new <= f + quad + 0.5 * L * sq:
                break
            L *= 2.0
            if L > _L_MAX:
                return beta_arr, it, 2, obj, (trace_arr[:it] if track_obj else trace_arr)
        new_obj = f_new
        max_move = 0.0
        for j in range(p):
            new_obj += pen[j] * fabs(cand[j])
            step_j = fabs(cand[j] - beta[j])
            if step_j > max_move:
                max_move = step_j
            beta[j] = cand[j]
        for i in range(n):
            theta[i] += dtheta[i]
        delta_obj = obj - new_obj
        f = f_new
        obj = new_obj
        if track_obj:
            trace[it] = obj
        if delta_obj < tol and max_move < tol:
            status = 0
            break
        L *= 0.9
        if L < 1e-12:
            L = 1e-12
    return beta_arr, it, status, obj, (trace_arr[:it + 1] if track_obj else trace_arr)


cdef void _matvec_diff(double[:, ::1] X, double[::1] a, double[::1] b,
                       double[::1] out) noexcept:
    # out = X (a - b)
    cdef Py_ssize_t n = X.shape[0], p = X.shape[1], i, j
    cdef double acc
    for i in range(n):
        acc = 0.0
        for j in range(p):
            acc += X[i, j] * (a[j] - b[j])
        out[i] = acc


cdef int _build_and_factor(double[:, ::1] X, int code, double[::1] theta,
                           double rho, double[:, ::1] Bmat,
                           double[:, ::1] F, double[::1] wvar) noexcept:
    """F <- chol(X' diag(b'') X / n + rho * Bmat), ridge retry; 0 on success."""
    cdef Py_ssize_t n = X.shape[0], p = X.shape[1], i, a, b
    cdef double xa
    cdef int info = 0, pi = <int> p
    for i in range(n):
        wvar[i] = _b_var(code, theta[i])
    for a in range(p):
        for b in range(p):
            F[a, b] = 0.0
    for i in range(n):
        for a in range(p):
            xa = X[i, a] * wvar[i]
            for b in range(a, p):
                F[a, b] += xa * X[i, b]
    for a in range(p):
        for b in range(a, p):
            F[a, b] = F[a, b] / n + rho * Bmat[a, b]
            F[b, a] = F[a, b]
    dpotrf('L', &pi, &F[0, 0], &pi, &info)
    if info == 0:
        return 0
    # rebuild with a small ridge (dpotrf destroyed part of F)
    for a in range(p):
        for b in range(p):
            F[a, b] = 0.0
    for i in range(n):
        for a in range(p):
            xa = X[i, a] * wvar[i]
            for b in range(a, p):
                F[a, b] += xa * X[i, b]
    for a in range(p):
        for b in range(a, p):
            F[a, b] = F[a, b] / n + rho * Bmat[a, b]
            F[b, a] = F[a, b]
        F[a, a] += _RIDGE
    dpotrf('L', &pi, &F[0, 0], &pi, &info)
    return info


def admm_wlasso(double[:, ::1] X, double[::1] y, int code,
                double[:, ::1] C, double[::1] t,
                Py_ssize_t[::1] m_idx, Py_ssize_t[::1] pen_idx,
                double[::1] weights,
                double[::1] beta0, double[::1] eta0,
                double[::1] nu10, double[::1] nu20, double rho0,
                double tol_primal, double tol_dual, int max_iter,
                double newton_tol, int newton_max, bint adapt_rho):
    """Constrained weighted-lasso ADMM; see the python twin for the contract."""
    cdef Py_ssize_t n = X.shape[0], p = X.shape[1]
    cdef Py_ssize_t r = C.shape[0], q = pen_idx.shape[0]
    cdef Py_ssize_t i, j, a, b, it
    cdef int k = 0

    beta_arr = np.array(beta0, dtype=np.float64)
    eta_arr = np.array(eta0, dtype=np.float64)
    nu1_arr = np.array(nu10, dtype=np.float64)
    nu2_arr = np.array(nu20, dtype=np.float64)
    cdef double[::1] beta = beta_arr
    cdef double[::1] eta = eta_arr
    cdef double[::1] nu1 = nu1_arr
    cdef double[::1] nu2 = nu2_arr
    cdef double rho = rho0

    # Bmat = Cpad' Cpad + diag(penalized indicator)
    Bmat_arr = np.zeros((p, p))
    cdef double[:, ::1] Bmat = Bmat_arr
    for a in range(r):
        for i in range(m_idx.shape[0]):
            for j in range(m_idx.shape[0]):
                Bmat[m_idx[i], m_idx[j]] += C[a, i] * C[a, j]
    for j in range(q):
        Bmat[pen_idx[j], pen_idx[j]] += 1.0

    theta_arr = np.empty(n)
    cdef double[::1] theta = theta_arr
    _matvec(X, beta, theta)

    F_arr = np.empty((p, p))
    cdef double[:, ::1] F = F_arr
    wvar_arr = np.empty(n)
    cdef double[::1] wvar = wvar_arr
    grad_arr = np.empty(p)
    cdef double[::1] grad = grad_arr
    delta_arr = np.empty(p)
    cdef double[::1] delta = delta_arr
    dtheta_arr = np.empty(n)
    cdef double[::1] dtheta = dtheta_arr
    hess_at_arr = np.empty(p)
    cdef double[::1] hess_at = hess_at_arr
    eta_prev_arr = np.empty(q)
    cdef double[::1] eta_prev = eta_prev_arr
    cm_arr = np.empty(r)
    cdef double[::1] cm = cm_arr  # C beta_M - t workspace
    res_arr = np.zeros(3)
    cdef double[::1] res = res_arr
    hist_arr = np.empty((max_iter // 10 + 2, 3))
    cdef double[:, ::1] hist = hist_arr
    cdef Py_ssize_t hist_n = 0

    cdef bint need_factor = True, have_factor = False, stale
    cdef int status = 1, info, nrhs = 1, pi = <int> p
    cdef long newton_steps = 0, n_factor = 0
    cdef double g_val, gmax, slope, alpha, cand_val, u, z
    cdef double r1n, r2n, sn, eps1, eps2, epsd, nb, ne, nt, ncm, nnu2, prim

    for k in range(1, max_iter + 1):
        # ---- beta update: damped Newton with lazy Hessian refresh
        g_val = _smooth_value(code, theta, y, n) + _aug_quad(C, t, m_idx, pen_idx,
                                                             beta, eta, nu1, nu2, rho, cm)
        for it in range(newton_max):
            _smooth_grad(X, y, code, theta, grad)
            _aug_grad(C, t, m_idx, pen_idx, beta, eta, nu1, nu2, rho, grad, cm)
            gmax = 0.0
            for j in range(p):
                if fabs(grad[j]) > gmax:
                    gmax = fabs(grad[j])
            if gmax <= newton_tol:
                break
            if code != 0 and have_factor:
                u = 0.0
                z = 0.0
                for j in range(p):
                    if fabs(beta[j] - hess_at[j]) > u:
                        u = fabs(beta[j] - hess_at[j])
                    if fabs(beta[j]) > z:
                        z = fabs(beta[j])
                if u > 0.05 * (1.0 + z):
                    need_factor = True
            if need_factor or not have_factor:
                info = _build_and_factor(X, code, theta, rho, Bmat, F, wvar)
                n_factor += 1
                if info != 0:
                    hist[hist_n, 0] = res[0]
                    hist[hist_n, 1] = res[1]
                    hist[hist_n, 2] = res[2]
                    return (beta_arr, eta_arr, nu1_arr, nu2_arr, k, 2, rho,
                            res_arr, newton_steps, n_factor,
                            hist_arr[:hist_n + 1])
                for j in range(p):
                    hess_at[j] = beta[j]
                have_factor = True
                need_factor = False
            for j in range(p):
                delta[j] = -grad[j]
            dpotrs('L', &pi, &nrhs, &F[0, 0], &pi, &delta[0], &pi, &info)
            _matvec(X, delta, dtheta)
            slope = 0.0
            for j in range(p):
                slope += grad[j] * delta[j]
            alpha = 1.0
            while alpha > 1e-10:
                cand_val = 0.0
                for i in range(n):
                    u = theta[i] + alpha * dtheta[i]
                    cand_val += _b_value(code, u) - y[i] * u
                cand_val /= n
                cand_val += _aug_quad_shift(C, t, m_idx, pen_idx, beta, delta, alpha,
                                            eta, nu1, nu2, rho, cm)
                if cand_val <= g_val + 1e-4 * alpha * slope:
                    break
                alpha *= 0.5
            else:
                if slope > -1e-13 * (1.0 + fabs(g_val)):
                    break  # no descent possible at machine precision: stationary
                stale = False
                for j in range(p):
                    if hess_at[j] != beta[j]:
                        stale = True
                        break
                if stale:
                    need_factor = True
                    continue
                hist[hist_n, 0] = res[0]
                hist[hist_n, 1] = res[1]
                hist[hist_n, 2] = res[2]
                return (beta_arr, eta_arr, nu1_arr, nu2_arr, k, 2, rho,
                        res_arr, newton_steps, n_factor,
                        hist_arr[:hist_n + 1])
            for j in range(p):
                beta[j] += alpha * delta[j]
            for i in range(n):
                theta[i] += alpha * dtheta[i]
            g_val = cand_val
            newton_steps += 1

        # ---- eta update
        sn = 0.0
        for j in range(q):
            eta_prev[j] = eta[j]
            z = beta[pen_idx[j]] + nu2[j] / rho
            u = fabs(z) - weights[j] / rho
            eta[j] = 0.0 if u <= 0.0 else (u if z > 0.0 else -u)
            sn += (eta[j] - eta_prev[j]) * (eta[j] - eta_prev[j])
        sn = rho * sqrt(sn)

        # ---- dual updates and residual norms
        r1n = 0.0
        ncm = 0.0
        for a in range(r):
            u = -t[a]
            for i in range(m_idx.shape[0]):
                u += C[a, i] * beta[m_idx[i]]
            nu1[a] += rho * u
            r1n += u * u
            z = u + t[a]
            ncm += z * z
        r1n = sqrt(r1n)
        ncm = sqrt(ncm)
        r2n = 0.0
        nb = 0.0
        ne = 0.0
        nnu2 = 0.0
        for j in range(q):
            u = beta[pen_idx[j]] - eta[j]
            nu2[j] += rho * u
            r2n += u * u
            nb += beta[pen_idx[j]] * beta[pen_idx[j]]
            ne += eta[j] * eta[j]
            nnu2 += nu2[j] * nu2[j]
        r2n = sqrt(r2n)
        res[0] = r1n
        res[1] = r2n
        res[2] = sn
        if k % 10 == 0:
            hist[hist_n, 0] = r1n
            hist[hist_n, 1] = r2n
            hist[hist_n, 2] = sn
            hist_n += 1

        nt = 0.0
        for a in range(r):
            nt += t[a] * t[a]
        nt = sqrt(nt)
        eps1 = tol_primal * (sqrt(<double> r) + (ncm if ncm > nt else nt))
        u = sqrt(nb)
        z = sqrt(ne)
        eps2 = tol_primal * (sqrt(<double> q) + (u if u > z else z))
        epsd = tol_dual * (sqrt(<double> q) + sqrt(nnu2))
        if r1n <= eps1 and r2n <= eps2 and sn <= epsd:
            status = 0
            break

        if adapt_rho and k % 10 == 0:
            prim = sqrt(r1n * r1n + r2n * r2n)
            if prim > 10.0 * sn and rho < 1e6:
                rho *= 2.0
                need_factor = True
            elif sn > 10.0 * prim and rho > 1e-6:
                rho *= 0.5
                need_factor = True

    hist[hist_n, 0] = res[0]
    hist[hist_n, 1] = res[1]
    hist[hist_n, 2] = res[2]
    return (beta_arr, eta_arr, nu1_arr, nu2_arr, k, status, rho, res_arr,
            newton_steps, n_factor, hist_arr[:hist_n + 1])


cdef double _aug_quad(double[:, ::1] C, double[::1] t,
                      Py_ssize_t[::1] m_idx, Py_ssize_t[::1] pen_idx,
                      double[::1] beta, double[::1] eta,
                      double[::1] nu1, double[::1] nu2, double rho,
                      double[::1] cm) noexcept:
    cdef Py_ssize_t r = C.shape[0], q = pen_idx.shape[0], a, i, j
    cdef double tot = 0.0, u
    for a in range(r):
        u = -t[a] + nu1[a] / rho
        for i in range(m_idx.shape[0]):
            u += C[a, i] * beta[m_idx[i]]
        tot += u * u
    for j in range(q):
        u = beta[pen_idx[j]] - eta[j] + nu2[j] / rho
        tot += u * u
    return 0.5 * rho * tot


cdef double _aug_quad_shift(double[:, ::1] C, double[::1] t,
                            Py_ssize_t[::1] m_idx, Py_ssize_t[::1] pen_idx,
                            double[::1] beta, double[::1] delta, double alpha,
                            double[::1] eta, double[::1] nu1, double[::1] nu2,
                            double rho, double[::1] cm) noexcept:
    cdef Py_ssize_t r = C.shape[0], q = pen_idx.shape[0], a, i, j
    cdef double tot = 0.0, u
    for a in range(r):
        u = -t[a] + nu1[a] / rho
        for i in range(m_idx.shape[0]):
            u += C[a, i] * (beta[m_idx[i]] + alpha * delta[m_idx[i]])
        tot += u * u
    for j in range(q):
        u = beta[pen_idx[j]] + alpha * delta[pen_idx[j]] - eta[j] + nu2[j] / rho
        tot += u * u
    return 0.5 * rho * tot


cdef void _aug_grad(double[:, ::1] C, double[::1] t,
                    Py_ssize_t[::1] m_idx, Py_ssize_t[::1] pen_idx,
                    double[::1] beta, double[::1] eta,
                    double[::1] nu1, double[::1] nu2, double rho,
                    double[::1] grad, double[::1] cm) noexcept:
    # grad += rho * Cpad'(C beta_M - t + nu1/rho) + rho * (beta_pen - eta + nu2/rho)
    cdef Py_ssize_t r = C.shape[0], q = pen_idx.shape[0], a, i, j
    cdef double u
    for a in range(r):
        u = -t[a] + nu1[a] / rho
        for i in range(m_idx.shape[0]):
            u += C[a, i] * beta[m_idx[i]]
        cm[a] = u
    for a in range(r):
        for i in range(m_idx.shape[0]):
            grad[m_idx[i]] += rho * C[a, i] * cm[a]
    for j in range(q):
        grad[pen_idx[j]] += rho * (beta[pen_idx[j]] - eta[j] + nu2[j] / rho)
