"""Compare the compiled solver kernels against the pure-Python fallback.

Times the weighted-lasso proximal solver and the constrained ADMM
kernel on matched problems and verifies the two backends agree.
Run as a script:

    python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from ppglm._backend import available_backends


def _problem(seed, n, p):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    beta = np.zeros(p)
    beta[:4] = [2.0, -2.0, 1.5, -1.0]
    y = X @ beta + rng.standard_normal(n)
    return X, y


def _time(fn, repeats=5):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_prox(mod, X, y, pen):
    beta0 = np.zeros(X.shape[1])
    beta, n_iter, status, obj, _ = mod.prox_grad_wlasso(
        X, y, 0, pen, beta0, 20000, 1e-10, False)
    assert status == 0, f"prox solver status {status}"
    return beta, n_iter


def bench_admm(mod, X, y, weights):
    p = X.shape[1]
    M = np.array([0, 1], dtype=np.intp)
    pen_idx = np.setdiff1d(np.arange(p, dtype=np.intp), M)
    C = np.ascontiguousarray([[1.0, 1.0]])
    t = np.zeros(1)
    out = mod.admm_wlasso(
        X, y, 0, C, t, M, pen_idx, weights[pen_idx],
        np.zeros(p), np.zeros(pen_idx.size), np.zeros(1),
        np.zeros(pen_idx.size), 1.0, 1e-7, 1e-7, 10000, 1e-8, 50, True)
    beta, eta, status, k = out[0], out[1], out[5], out[4]
    assert status == 0, f"admm status {status}"
    full = beta.copy()
    full[pen_idx] = eta
    return full, k


def main():
    backends = available_backends()
    if len(backends) < 2:
        print(f"only {list(backends)} available; install the compiled "
              "extension to benchmark both")
        return
    # small size matches the Monte Carlo hot path, where per-iteration
    # overhead dominates; the large size is BLAS-bound for both backends
    for n, p in [(100, 51), (400, 120)]:
        X, y = _problem(0, n=n, p=p)
        pen = 0.3 * np.ones(p)
        pen[:4] = 0.0
        weights = 0.3 * np.ones(p)

        rows = {}
        for name, mod in backends.items():
            t_prox, (b_prox, it_prox) = _time(
                lambda m=mod: bench_prox(m, X, y, pen))
            t_admm, (b_admm, it_admm) = _time(
                lambda m=mod: bench_admm(m, X, y, weights))
            rows[name] = (t_prox, b_prox, t_admm, b_admm)
            print(f"n={n:<4d} p={p:<4d} {name:>8s}"
                  f"  prox {t_prox * 1e3:8.2f} ms ({it_prox} it)"
                  f"   admm {t_admm * 1e3:8.2f} ms ({it_admm} it)")

        (tp1, bp1, ta1, ba1), (tp2, bp2, ta2, ba2) = (
            rows["python"], rows["compiled"])
        print(f"{'':>24s}speedup   prox {tp1 / tp2:5.1f}x"
              f"   admm {ta1 / ta2:5.1f}x")
        print(f"{'':>24s}max|diff| prox {np.max(np.abs(bp1 - bp2)):.2e}"
              f"   admm {np.max(np.abs(ba1 - ba2)):.2e}")


if __name__ == "__main__":
    main()
