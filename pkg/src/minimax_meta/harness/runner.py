"""Execution of experiment specs and CSV output."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ..constants import constrained_rate_bounds, unconstrained_rate_bounds
from ..diagnostics import phi, stationarity_certificate
from ..solver import RunConfig, RunOutput, run_da_maml, run_maml_baseline
from ..tasks import suite_constants
from .config import ExperimentSpec

__all__ = [
    "TRACE_COLUMNS",
    "SUMMARY_COLUMNS",
    "RATES_COLUMNS",
    "Job",
    "format_float",
    "plan_runs",
    "plan_sweep",
    "execute",
    "trace_rows",
    "summary_row",
    "fit_slope",
    "rate_metrics",
    "write_csv",
    "run_experiment",
    "rate_sweep",
]

TRACE_COLUMNS = ("run_id", "method", "seed", "t", "worst_task_loss", "avg_loss",
                 "grad_norm_exact", "proj_grad_norm", "duality_gap", "eta_w", "eta_p")
SUMMARY_COLUMNS = ("run_id", "method", "seed", "T", "C", "tau", "worst_task_loss", "avg_loss",
                   "grad_norm_exact", "proj_grad_norm", "duality_gap", "p_gap", "eta_w", "eta_p",
                   "cert_eps", "cert_delta", "cert_holds")
RATES_COLUMNS = ("metric", "estimator", "fitted_slope", "theoretical_slope", "T_min", "T_max",
                 "n_points", "n_seeds")


@dataclass(frozen=True)
class Job:
    run_id: int
    method: str
    seed: int
    config: RunConfig


def format_float(x) -> str:
    """Shortest round-trip text of a float; integral values drop the ``.0``."""
    if x is None:
        return ""
    x = float(x)
    if not math.isfinite(x):
        return ""
    s = repr(x)
    return s[:-2] if s.endswith(".0") else s


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    return str(v)


def plan_runs(spec: ExperimentSpec):
    """Jobs of ``run``: every seed, DA-MAML first then the baseline when enabled."""
    methods = ("da-maml", "maml") if spec.baseline else ("da-maml",)
    jobs = []
    for seed in spec.seeds:
        for method in methods:
            jobs.append(Job(len(jobs), method, seed, replace(spec.run, seed=seed)))
    return jobs


def plan_sweep(spec: ExperimentSpec):
    """Jobs of ``rate-sweep``: every ``T`` of the sweep times every seed, DA-MAML only."""
    jobs = []
    for T in spec.sweep_T:
        for seed in spec.sweep_seeds:
            jobs.append(Job(len(jobs), "da-maml", seed, replace(spec.run, T=T, seed=seed)))
    return jobs


def _execute_one(job, tasks, probs):
    if job.method == "maml":
        return run_maml_baseline(job.config, tasks, probs)
    return run_da_maml(job.config, tasks)


def execute(jobs, tasks, probs=None, n_jobs=1):
    """Run every job; results come back in run-id order whatever ``n_jobs`` is."""
    if n_jobs <= 1 or len(jobs) <= 1:
        return [_execute_one(j, tasks, probs) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as pool:
        futures = [pool.submit(_execute_one, j, tasks, probs) for j in jobs]
        return [f.result() for f in futures]


def trace_rows(job: Job, out: RunOutput):
    for r in out.trace:
        yield (job.run_id, job.method, job.seed, r.t, r.worst_loss, r.avg_loss,
               r.grad_norm_exact, r.proj_grad_norm, r.duality_gap, out.eta_w, out.eta_p)


def _default_certificate(spec, out):
    """``(eps, delta)`` from the regime's rate bounds, or ``None`` when none applies."""
    cfg, rep = spec.run, out.constants
    if rep is None or cfg.regime not in ("nonconvex-unconstrained", "nonconvex-constrained"):
        return None
    ci = suite_constants(spec.tasks)
    w1 = cfg.initial_point(spec.tasks)
    phi1 = phi(w1, np.full(spec.tasks.m, 1.0 / spec.tasks.m), spec.tasks, cfg.alpha)
    if cfg.regime == "nonconvex-unconstrained":
        try:
            g2, dp = unconstrained_rate_bounds(phi1, ci.B, ci.m, rep.G_p, rep.M_tilde,
                                               rep.sigma_w2, cfg.beta, cfg.T)
        except ValueError:
            return None
    else:
        # the variance bound at C = 1 is C times the one at the run's batch
        g2, dp = constrained_rate_bounds(phi1, ci.B, ci.m, rep.G_p, rep.M_tilde,
                                         out.C * rep.sigma_w2, cfg.beta, cfg.T)
    return math.sqrt(g2), dp


def summary_row(spec: ExperimentSpec, job: Job, out: RunOutput):
    r = out.final
    cert = spec.certificate or _default_certificate(spec, out)
    eps = delta = holds = None
    if cert is not None:
        eps, delta = cert
        eta = out.eta_w if math.isfinite(out.eta_w) else 1.0
        holds = stationarity_certificate(out.w_out, out.p_out, spec.tasks, job.config.alpha,
                                         eps, delta, eta_w=eta).holds
    return (job.run_id, job.method, job.seed, job.config.T, out.C, out.tau, r.worst_loss,
            r.avg_loss, r.grad_norm_exact, r.proj_grad_norm, r.duality_gap, r.p_gap,
            out.eta_w, out.eta_p, eps, delta, holds)


def write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def fit_slope(T_values, values) -> float:
    """Least-squares slope of ``log(value)`` against ``log(T)``."""
    x = np.log(np.asarray(T_values, dtype=float))
    v = np.asarray(values, dtype=float)
    if x.size < 2 or not np.all(np.isfinite(v) & (v > 0)):
        return math.nan
    y = np.log(v)
    return float(np.polyfit(x, y, 1)[0])


def rate_metrics(regime, termination, beta):
    """``(name, value(out, estimator), theoretical slope)`` triples for a regime.

    ``sampled`` reads the output iterate; ``trajectory`` averages the
    recorded iterates, the expectation over a uniform ``tau`` given the run.
    """
    def at(field, square):
        def value(out, estimator):
            rows = out.trace if estimator == "trajectory" else [out.final]
            vals = np.array([getattr(r, field) for r in rows], dtype=float)
            return float(np.mean(vals**2 if square else vals))
        return value

    if termination == "average":
        return [("duality_gap", at("duality_gap", False), -0.5)]
    if regime == "nonconvex-constrained":
        return [("proj_grad_sq", at("proj_grad_norm", True), -min(beta, 1.0)),
                ("p_gap", at("p_gap", False), -min(beta, 1.0 - beta))]
    if regime == "nonconvex-unconstrained":
        return [("grad_sq", at("grad_norm_exact", True), -beta),
                ("p_gap", at("p_gap", False), -min(2 * beta, 1 - 2 * beta))]
    return [("grad_sq", at("grad_norm_exact", True), math.nan),
            ("p_gap", at("p_gap", False), math.nan)]


def run_experiment(spec: ExperimentSpec, n_jobs=1):
    """Execute ``run``: write ``trace.csv`` and ``summary.csv``; returns the outputs."""
    jobs = plan_runs(spec)
    outs = execute(jobs, spec.tasks, spec.task_probs, n_jobs)
    write_csv(spec.output / "trace.csv", TRACE_COLUMNS,
              (row for j, o in zip(jobs, outs) for row in trace_rows(j, o)))
    write_csv(spec.output / "summary.csv", SUMMARY_COLUMNS,
              (summary_row(spec, j, o) for j, o in zip(jobs, outs)))
    return jobs, outs


def rate_sweep(spec: ExperimentSpec, n_jobs=1):
    """Execute ``rate-sweep``: write ``summary.csv`` and ``rates.csv``; returns the rate rows.

    The metric of every ``T`` is its mean over the sweep seeds.
    """
    jobs = plan_sweep(spec)
    outs = execute(jobs, spec.tasks, None, n_jobs)
    write_csv(spec.output / "summary.csv", SUMMARY_COLUMNS,
              (summary_row(spec, j, o) for j, o in zip(jobs, outs)))
    cfg = spec.run
    rows = []
    for name, value, theory in rate_metrics(cfg.regime, cfg.termination, cfg.beta):
        means = []
        for T in spec.sweep_T:
            vals = [value(o, spec.estimator) for j, o in zip(jobs, outs) if j.config.T == T]
            means.append(float(np.mean(vals)))
        rows.append((name, spec.estimator, fit_slope(spec.sweep_T, means), round(theory, 12),
                     spec.sweep_T[0], spec.sweep_T[-1], len(spec.sweep_T),
                     len(spec.sweep_seeds)))
    write_csv(spec.output / "rates.csv", RATES_COLUMNS, rows)
    return rows
