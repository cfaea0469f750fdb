"""Command-line interface: fit, test, and simulate.

All numeric output flows through one formatter, so the stdout tables
and the JSON reports always carry identical values.
"""

from __future__ import annotations

import csv
import json
import os
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import click
import numpy as np

from .errors import InputError, PpglmError, SolverError
from .families import Dataset, family_from_name
from .inference import TestConfig, run_test
from .lasso import LassoConfig, cv_select, default_lambda_grid, fit_lasso
from .lla import HypothesisSpec, gic_select, lla_full
from .penalties import l1, mcp, scad
from .sim import SimScenario, run_replications

BUNDLED_SCENARIOS = ("table1_p50", "table1_p200", "table2_p50",
                     "table2_p200", "table3_p50", "table3_p200")


def _fmt(v):
    """Canonical number rendering shared by stdout and JSON output."""
    if isinstance(v, bool) or not isinstance(v, float):
        return str(v)
    return f"{v:.10g}"


def _round_tree(obj):
    """Pass every float through the canonical formatter so the JSON
    report holds exactly the numbers the tables print."""
    if isinstance(obj, float):
        return float(_fmt(obj))
    if isinstance(obj, dict):
        return {k: _round_tree(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_tree(v) for v in obj]
    return obj


def _resolve_seed(seed):
    if seed is None:
        seed = int.from_bytes(os.urandom(4), "little") % (2 ** 31)
        click.echo(f"seed: {seed}")
    return int(seed)


def _load_csv(path, response, with_intercept):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as err:
        raise InputError(f"cannot read {path}: {err}") from err
    rows = [r for r in rows if r]
    if len(rows) < 2:
        raise InputError(f"{path}: need a header row and at least one data row")
    header = [h.strip() for h in rows[0]]
    if response not in header:
        raise InputError(f"response column {response!r} not in {path}")
    try:
        body = np.array([[float(v) for v in r] for r in rows[1:]])
    except ValueError as err:
        raise InputError(f"{path}: non-numeric value ({err})") from err
    if body.shape[1] != len(header):
        raise InputError(f"{path}: ragged rows")
    yi = header.index(response)
    y = body[:, yi]
    X = np.delete(body, yi, axis=1)
    names = [h for i, h in enumerate(header) if i != yi]
    if with_intercept:
        X = np.column_stack([np.ones(X.shape[0]), X])
        names = ["(intercept)"] + names
    return Dataset(X, y, has_intercept=with_intercept), names


def _load_hypothesis(path, n_predictors, with_intercept):
    """Hypothesis JSON uses 1-based indices over the predictor columns
    (intercept excluded).  Returns (spec, family or None, alpha or None)."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as err:
        raise InputError(f"cannot parse {path}: {err}") from err
    try:
        M1 = [int(m) for m in doc["M"]]
    except (KeyError, TypeError, ValueError):
        raise InputError(f"{path}: field 'M' must be a list of integers") from None
    if any(m < 1 or m > n_predictors for m in M1):
        raise InputError(f"{path}: M indices must be in 1..{n_predictors}")
    offset = 0 if with_intercept else -1
    M = [m + offset for m in M1]
    if "C" not in doc or "t" not in doc:
        raise InputError(f"{path}: fields 'C' and 't' are required")
    spec = HypothesisSpec(M=M, C=doc["C"], t=doc["t"])
    return spec, doc.get("family"), doc.get("alpha")


def _write_report(output_dir, name, report):
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    return path


def _run_guarded(body):
    try:
        body()
    except InputError as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(2)
    except SolverError as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(3)
    except PpglmError as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(2)


@click.group()
def main():
    """Partial penalized likelihood tests for high-dimensional GLMs."""


@main.command("test")
@click.option("--data", "data_path", required=True, type=click.Path())
@click.option("--hypothesis", "hyp_path", required=True, type=click.Path())
@click.option("--response", required=True)
@click.option("--family", type=click.Choice(["gaussian", "logistic", "poisson"]),
              default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--lambda", "lam", type=float, default=None,
              help="Skip GIC selection and use this tuning value.")
@click.option("--no-intercept", is_flag=True)
@click.option("--seed", type=int, default=None)
@click.option("--output-dir", default=".", type=click.Path())
def cmd_test(data_path, hyp_path, response, family, alpha, lam,
             no_intercept, seed, output_dir):
    """Test a linear hypothesis about named predictors."""

    def body():
        nonlocal family, alpha
        the_seed = _resolve_seed(seed)
        data, names = _load_csv(data_path, response, not no_intercept)
        n_pred = data.p - (1 if data.has_intercept else 0)
        hyp, file_family, file_alpha = _load_hypothesis(
            hyp_path, n_pred, data.has_intercept)
        family = family or file_family or "gaussian"
        alpha = alpha if alpha is not None else (
            file_alpha if file_alpha is not None else 0.05)
        fam = family_from_name(family)
        data.check_family(fam)
        config = TestConfig(alpha=alpha, lambda_hat=lam,
                            lasso=LassoConfig(seed=the_seed))
        res = run_test(fam, data, hyp, config)
        report = _round_tree({
            "family": family, "alpha": alpha, "seed": the_seed,
            "response": response,
            "lambda_hat": res.lambda_hat, "lambda_lasso": res.lambda_lasso,
            "tests": {k: {"statistic": r.value, "dof": r.dof,
                          "p_value": r.p_value, "reject": r.reject,
                          "phi_hat": r.phi_hat}
                      for k, r in res.reports.items()},
            "support_full": [names[j] for j in res.fit_full.support],
            "support_reduced": [names[j] for j in res.fit_reduced.support],
        })
        path = _write_report(output_dir, "report.json", report)
        click.echo(_render_test(report))
        click.echo(f"report written to {path}")

    _run_guarded(body)


def _render_test(report):
    lines = [f"family={report['family']} alpha={_fmt(report['alpha'])} "
             f"lambda_hat={_fmt(report['lambda_hat'])}"]
    lines.append(f"{'test':>6s} {'statistic':>14s} {'dof':>4s} "
                 f"{'p_value':>12s} {'reject':>7s}")
    for k in ("wald", "score", "lrt"):
        r = report["tests"][k]
        lines.append(f"{k:>6s} {_fmt(r['statistic']):>14s} {r['dof']:>4d} "
                     f"{_fmt(r['p_value']):>12s} {str(r['reject']):>7s}")
    return "\n".join(lines)


@main.command("simulate")
@click.option("--scenario", required=True,
              help="Bundled scenario name or path to a scenario JSON.")
@click.option("--reps", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--jobs", type=int, default=1)
@click.option("--output-dir", default=".", type=click.Path())
def cmd_simulate(scenario, reps, seed, jobs, output_dir):
    """Run a Monte Carlo scenario and write its table."""

    def body():
        scn = _load_scenario(scenario)
        if reps is not None:
            if reps < 1:
                raise InputError("--reps must be at least 1")
            scn = replace(scn, reps=reps)
        if seed is not None:
            scn = replace(scn, seed=seed)
        table = run_replications(scn, jobs=jobs)
        report = _round_tree(table.to_dict())
        path = _write_report(output_dir, "report.json", report)
        if "percent" in report:
            click.echo(_render_rejection(report))
        else:
            click.echo(_render_estimation(report))
        click.echo(f"report written to {path}")

    _run_guarded(body)


def _load_scenario(ref):
    p = Path(ref)
    if p.exists():
        try:
            return SimScenario.from_json(p.read_text())
        except (json.JSONDecodeError, TypeError, KeyError) as err:
            raise InputError(f"invalid scenario file {ref}: {err}") from err
    if ref in BUNDLED_SCENARIOS:
        text = (resources.files("ppglm") / "scenarios" / f"{ref}.json").read_text()
        return SimScenario.from_json(text)
    raise InputError(
        f"scenario {ref!r} is neither a file nor one of {BUNDLED_SCENARIOS}")


def _render_rejection(rep):
    lines = [f"scenario {rep['scenario']}: rejection rates (%) over "
             f"{rep['reps']} replications, alpha={_fmt(rep['alpha'])}"]
    cols = rep["columns"]
    lines.append("   h1 " + "".join(f"{c:>26s}" for c in cols))
    for h1 in rep["h1_values"]:
        key = f"{h1:g}"
        cells = "".join(
            f"  {_fmt(rep['percent'][key][c]):>9s} ({_fmt(rep['se'][key][c]):>12s})"
            for c in cols)
        lines.append(f"{_fmt(float(h1)):>5s} " + cells)
    if rep["failures"]:
        lines.append(f"failed replications: {rep['failures']}")
    return "\n".join(lines)


def _render_estimation(rep):
    lines = [f"scenario {rep['scenario']}: estimation metrics over "
             f"{rep['reps']} replications"]
    lines.append(f"{'model':>15s}" + "".join(f"{k:>26s}" for k in
                                             ("l1", "l2", "fp", "fn")))
    for m in rep["models"]:
        cells = "".join(
            f"  {_fmt(rep['mean'][m][k]):>9s} ({_fmt(rep['se'][m][k]):>12s})"
            for k in ("l1", "l2", "fp", "fn"))
        lines.append(f"{m:>15s}" + cells)
    if rep["failures"]:
        lines.append(f"failed replications: {rep['failures']}")
    return "\n".join(lines)


@main.command("fit")
@click.option("--data", "data_path", required=True, type=click.Path())
@click.option("--response", required=True)
@click.option("--family", type=click.Choice(["gaussian", "logistic", "poisson"]),
              default="gaussian")
@click.option("--lambda", "lam", type=float, default=None,
              help="Skip GIC selection and fit at this tuning value.")
@click.option("--penalty", type=click.Choice(["scad", "mcp", "l1"]),
              default="scad")
@click.option("--no-intercept", is_flag=True)
@click.option("--seed", type=int, default=None)
@click.option("--output-dir", default=".", type=click.Path())
def cmd_fit(data_path, response, family, lam, penalty, no_intercept,
            seed, output_dir):
    """Folded-concave penalized fit of the whole model."""

    def body():
        the_seed = _resolve_seed(seed)
        data, names = _load_csv(data_path, response, not no_intercept)
        fam = family_from_name(family)
        data.check_family(fam)
        maker = {"scad": scad, "mcp": mcp, "l1": l1}[penalty]
        lasso_cfg = LassoConfig(seed=the_seed)
        lam_lasso, _ = cv_select(fam, data, lasso_cfg)
        init = fit_lasso(fam, data, lam_lasso, lasso_cfg)
        if lam is not None:
            lam_hat = float(lam)
            fit = lla_full(fam, data, [], maker(lam_hat), init.beta)
        else:
            grid = default_lambda_grid(fam, data, n_points=20, min_ratio=0.05)
            fits = [lla_full(fam, data, [], maker(l), init.beta) for l in grid]
            lam_hat, idx, _ = gic_select(fam, data, fits)
            fit = fits[idx]
        report = _round_tree({
            "family": family, "penalty": penalty, "seed": the_seed,
            "lambda_hat": lam_hat, "lambda_lasso": lam_lasso,
            "lambda_fixed": lam is not None,
            "coefficients": {names[j]: float(fit.beta[j])
                             for j in range(data.p)},
            "support": [names[j] for j in fit.support],
        })
        path = _write_report(output_dir, "fit.json", report)
        click.echo(f"lambda_hat={_fmt(report['lambda_hat'])} "
                   f"support={report['support']}")
        click.echo(f"fit written to {path}")

    _run_guarded(body)


if __name__ == "__main__":
    main()
