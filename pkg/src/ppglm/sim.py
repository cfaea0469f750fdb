"""Monte Carlo engine for the testing and estimation experiments.

Scenarios are declarative: a family, an AR(1) design, a coefficient
builder, a hypothesis, and replication counts.  Each replication draws
its own counter-based generator keyed by (seed, replication index), so
results are bitwise reproducible and independent of worker scheduling.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import InputError, SimulationError, SolverError
from .families import Dataset, family_from_name
from .inference import (TestConfig, dispersion_estimate, lrt_statistic,
                        run_test, score_statistic, wald_statistic)
from .chisq import chisq_upper_quantile
from .lasso import LassoConfig
from .lla import HypothesisSpec
from .oracle import OracleProblem, fit_oracle_full, fit_oracle_reduced

__all__ = ["SimScenario", "RejectionTable", "EstimationTable",
           "run_replications", "estimator_comparison", "gen_design",
           "gen_beta", "gen_response", "build_hypothesis"]

_BUILDERS = ("pair_shift", "three_signal")
_HYPOTHESES = {
    # 0-based column indices
    "H1": lambda: HypothesisSpec(M=[0, 1], C=[[1.0, 1.0]], t=[0.0]),
    "H2": lambda: HypothesisSpec(M=[1], C=[[1.0]], t=[-2.0]),
    "H3": lambda: HypothesisSpec(M=[0, 1, 2, 3], C=[[1.0, 1.0, 1.0, 1.0]], t=[0.0]),
}
_COLUMNS = ("lla_lrt", "lla_wald", "lla_score",
            "oracle_lrt", "oracle_wald", "oracle_score")
_MODELS = ("lla_full", "lla_reduced", "oracle_full", "oracle_reduced")


@dataclass(frozen=True)
class SimScenario:
    """Complete description of one experiment."""

    name: str
    family: str
    n: int
    p: int
    hypothesis: object          # "H1" | "H2" | "H3" | {"M": ..., "C": ..., "t": ...}
    reps: int
    seed: int
    metric: str = "rejection"   # or "estimation"
    beta_builder: str = "pair_shift"
    h1_values: tuple = (0.0,)
    rho: float = 0.5
    sigma: float = 1.0
    alpha: float = 0.05
    penalty_kind: str = "scad"
    penalty_a: float | None = None
    lambda_grid: tuple | None = None
    gic_grid_size: int = 20
    gic_min_ratio: float = 0.05

    def __post_init__(self):
        if self.metric not in ("rejection", "estimation"):
            raise InputError(f"unknown metric: {self.metric!r}")
        if self.beta_builder not in _BUILDERS:
            raise InputError(f"unknown beta builder: {self.beta_builder!r}")
        if self.reps < 1 or self.n < 1 or self.p < 1:
            raise InputError("reps, n, and p must be positive")
        family_from_name(self.family)
        object.__setattr__(self, "h1_values", tuple(float(h) for h in self.h1_values))
        if self.lambda_grid is not None:
            object.__setattr__(self, "lambda_grid",
                               tuple(float(l) for l in self.lambda_grid))
        build_hypothesis(self.hypothesis)

    def to_dict(self):
        out = asdict(self)
        out["h1_values"] = list(self.h1_values)
        if self.lambda_grid is not None:
            out["lambda_grid"] = list(self.lambda_grid)
        return out

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if isinstance(d.get("h1_values"), list):
            d["h1_values"] = tuple(d["h1_values"])
        if isinstance(d.get("lambda_grid"), list):
            d["lambda_grid"] = tuple(d["lambda_grid"])
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def build_hypothesis(spec):
    """Resolve a named or explicit hypothesis to a HypothesisSpec."""
    if isinstance(spec, HypothesisSpec):
        return spec
    if isinstance(spec, str):
        try:
            return _HYPOTHESES[spec]()
        except KeyError:
            raise InputError(f"unknown hypothesis: {spec!r}") from None
    if isinstance(spec, dict):
        return HypothesisSpec(M=spec["M"], C=spec["C"], t=spec["t"])
    raise InputError("hypothesis must be a name or an {M, C, t} mapping")


def gen_beta(builder, p, h1):
    """Data-generating coefficients for the named builder."""
    beta = np.zeros(p)
    if builder == "pair_shift":
        if p < 2:
            raise InputError("pair_shift needs p >= 2")
        beta[0], beta[1] = 2.0, -2.0 - h1
    elif builder == "three_signal":
        if p < 5:
            raise InputError("three_signal needs p >= 5")
        beta[[0, 1, 4]] = [3.0, 1.5, 2.0]
    else:
        raise InputError(f"unknown beta builder: {builder!r}")
    return beta


def gen_design(rng, n, p, rho):
    """Rows drawn from N(0, Sigma) with Sigma_jk = rho^|j-k|, built by
    the stationary AR(1) recursion along coordinates."""
    Z = rng.standard_normal((n, p))
    X = np.empty((n, p))
    X[:, 0] = Z[:, 0]
    scale = np.sqrt(1.0 - rho * rho)
    for j in range(1, p):
        X[:, j] = rho * X[:, j - 1] + scale * Z[:, j]
    return X


def gen_response(rng, family, X, beta, sigma):
    theta = X @ beta
    if family.kind == "gaussian":
        return theta + sigma * rng.standard_normal(X.shape[0])
    if family.kind == "logistic":
        return (rng.random(X.shape[0]) < 1.0 / (1.0 + np.exp(-theta))).astype(np.float64)
    return rng.poisson(np.exp(np.minimum(theta, 30.0))).astype(np.float64)


def _rep_rng(seed, index):
    return np.random.Generator(np.random.Philox(key=np.array(
        [seed, index], dtype=np.uint64)))


def _test_config(scn, fold_seed):
    return TestConfig(
        penalty_kind=scn.penalty_kind, penalty_a=scn.penalty_a,
        alpha=scn.alpha, lambda_grid=scn.lambda_grid,
        gic_grid_size=scn.gic_grid_size, gic_min_ratio=scn.gic_min_ratio,
        lasso=LassoConfig(seed=fold_seed))


def _oracle_decisions(family, data, hyp, beta_star, alpha):
    prob = OracleProblem(family, data, hyp.M, np.flatnonzero(beta_star), hyp)
    full = fit_oracle_full(prob)
    red = fit_oracle_reduced(prob)
    phi_f, _ = dispersion_estimate(family, data, full, hyp.M)
    phi_r, _ = dispersion_estimate(family, data, red, hyp.M)
    crit = chisq_upper_quantile(alpha, hyp.r)
    t_w = wald_statistic(family, data, full, hyp, phi_f)
    t_s = score_statistic(family, data, red, hyp, phi_r)
    t_l, _ = lrt_statistic(family, data, full, red, phi_f)
    return {"oracle_lrt": t_l > crit, "oracle_wald": t_w > crit,
            "oracle_score": t_s > crit}, full, red


def _rejection_rep(scn, h1, index):
    rng = _rep_rng(scn.seed, index)
    family = family_from_name(scn.family)
    hyp = build_hypothesis(scn.hypothesis)
    beta_star = gen_beta(scn.beta_builder, scn.p, h1)
    X = gen_design(rng, scn.n, scn.p, scn.rho)
    y = gen_response(rng, family, X, beta_star, scn.sigma)
    data = Dataset(X, y, has_intercept=False)
    fold_seed = int(rng.integers(2 ** 31))
    res = run_test(family, data, hyp, _test_config(scn, fold_seed))
    out = {"lla_lrt": res.lrt.reject, "lla_wald": res.wald.reject,
           "lla_score": res.score.reject}
    odec, _, _ = _oracle_decisions(family, data, hyp, beta_star, scn.alpha)
    out.update(odec)
    return out


def _losses(beta_hat, beta_star):
    diff = beta_hat - beta_star
    return {
        "l1": float(np.sum(np.abs(diff))),
        "l2": float(np.sqrt(diff @ diff)),
        "fp": int(np.sum((beta_hat != 0.0) & (beta_star == 0.0))),
        "fn": int(np.sum((beta_hat == 0.0) & (beta_star != 0.0))),
    }


def _estimation_rep(scn, index):
    rng = _rep_rng(scn.seed, index)
    family = family_from_name(scn.family)
    hyp = build_hypothesis(scn.hypothesis)
    beta_star = gen_beta(scn.beta_builder, scn.p, scn.h1_values[0])
    X = gen_design(rng, scn.n, scn.p, scn.rho)
    y = gen_response(rng, family, X, beta_star, scn.sigma)
    data = Dataset(X, y, has_intercept=False)
    fold_seed = int(rng.integers(2 ** 31))
    res = run_test(family, data, hyp, _test_config(scn, fold_seed))
    prob = OracleProblem(family, data, hyp.M, np.flatnonzero(beta_star), hyp)
    ofull = fit_oracle_full(prob)
    ored = fit_oracle_reduced(prob)
    return {
        "lla_full": _losses(res.fit_full.beta, beta_star),
        "lla_reduced": _losses(res.fit_reduced.beta, beta_star),
        "oracle_full": _losses(ofull.beta, beta_star),
        "oracle_reduced": _losses(ored.beta, beta_star),
    }


@dataclass
class RejectionTable:
    """Rejection percentages by h1 and method, with binomial standard
    errors (percent scale)."""

    scenario: str
    family: str
    alpha: float
    columns: tuple
    h1_values: tuple
    percent: dict
    se: dict
    reps: int
    failures: int

    def to_dict(self):
        return {"scenario": self.scenario, "family": self.family,
                "alpha": self.alpha, "columns": list(self.columns),
                "h1_values": list(self.h1_values),
                "percent": self.percent, "se": self.se,
                "reps": self.reps, "failures": self.failures}

    def format_text(self):
        lines = [f"scenario {self.scenario}: rejection rates (%) over "
                 f"{self.reps} replications, alpha={self.alpha}"]
        header = "   h1 " + "".join(f"{c:>16s}" for c in self.columns)
        lines.append(header)
        for h1 in self.h1_values:
            key = _h1_key(h1)
            cells = "".join(
                f"  {self.percent[key][c]:6.2f} ({self.se[key][c]:4.2f})"
                for c in self.columns)
            lines.append(f"{h1:5.2f} " + cells)
        if self.failures:
            lines.append(f"failed replications: {self.failures}")
        return "\n".join(lines)


@dataclass
class EstimationTable:
    """Mean estimation losses and selection errors with standard
    errors of the mean."""

    scenario: str
    family: str
    models: tuple
    mean: dict
    se: dict
    reps: int
    failures: int

    def to_dict(self):
        return {"scenario": self.scenario, "family": self.family,
                "models": list(self.models), "mean": self.mean,
                "se": self.se, "reps": self.reps, "failures": self.failures}

    def format_text(self):
        lines = [f"scenario {self.scenario}: estimation metrics over "
                 f"{self.reps} replications"]
        lines.append(f"{'model':>15s} {'l1':>14s} {'l2':>14s} "
                     f"{'fp':>14s} {'fn':>14s}")
        for m in self.models:
            cells = "".join(
                f"  {self.mean[m][k]:6.3f} ({self.se[m][k]:5.3f})"
                for k in ("l1", "l2", "fp", "fn"))
            lines.append(f"{m:>15s}" + cells)
        if self.failures:
            lines.append(f"failed replications: {self.failures}")
        return "\n".join(lines)


def _h1_key(h1):
    return f"{h1:g}"


# workers must be module-level so process pools can pickle them
def _rejection_worker(task):
    scn, h1, index = task
    try:
        return h1, _rejection_rep(scn, h1, index)
    except SolverError:
        return h1, None


def _estimation_worker(task):
    scn, index = task
    try:
        return _estimation_rep(scn, index)
    except SolverError:
        return None


def _map_reps(fn, args, jobs):
    if jobs <= 1:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, args, chunksize=8))


def _check_failures(n_failed, total):
    if total and n_failed > 0.05 * total:
        raise SimulationError(
            f"{n_failed} of {total} replications failed; results would "
            "not be trustworthy")


def run_replications(scenario, jobs=1):
    """Run the scenario and return its table.

    Solver failures in individual replications are tolerated up to 5%
    of the total and excluded from the denominators; beyond that the
    whole run fails.
    """
    if scenario.metric == "estimation":
        return estimator_comparison(scenario, jobs)
    total = len(scenario.h1_values) * scenario.reps
    args = []
    for hi, h1 in enumerate(scenario.h1_values):
        for rep in range(scenario.reps):
            args.append((scenario, h1, hi * scenario.reps + rep))

    results = _map_reps(_rejection_worker, args, jobs)
    percent, se = {}, {}
    n_failed = 0
    for h1 in scenario.h1_values:
        key = _h1_key(h1)
        rows = [r for h, r in results if h == h1]
        good = [r for r in rows if r is not None]
        n_failed += len(rows) - len(good)
        percent[key], se[key] = {}, {}
        for c in _COLUMNS:
            k = len(good)
            phat = (sum(r[c] for r in good) / k) if k else float("nan")
            percent[key][c] = 100.0 * phat
            se[key][c] = 100.0 * float(np.sqrt(phat * (1 - phat) / k)) if k else float("nan")
    _check_failures(n_failed, total)
    return RejectionTable(scenario=scenario.name, family=scenario.family,
                          alpha=scenario.alpha, columns=_COLUMNS,
                          h1_values=scenario.h1_values, percent=percent,
                          se=se, reps=scenario.reps, failures=n_failed)


def estimator_comparison(scenario, jobs=1):
    """Estimation-loss table over the scenario's replications."""
    args = [(scenario, rep) for rep in range(scenario.reps)]
    results = _map_reps(_estimation_worker, args, jobs)
    good = [r for r in results if r is not None]
    n_failed = len(results) - len(good)
    _check_failures(n_failed, scenario.reps)
    mean, se = {}, {}
    for m in _MODELS:
        mean[m], se[m] = {}, {}
        for k in ("l1", "l2", "fp", "fn"):
            vals = np.array([r[m][k] for r in good], dtype=np.float64)
            mean[m][k] = float(vals.mean()) if vals.size else float("nan")
            se[m][k] = (float(vals.std(ddof=1) / np.sqrt(vals.size))
                        if vals.size > 1 else float("nan"))
    return EstimationTable(scenario=scenario.name, family=scenario.family,
                           models=_MODELS, mean=mean, se=se,
                           reps=scenario.reps, failures=n_failed)
