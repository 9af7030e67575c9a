"""Exact optimality measures and empirical checks of the problem constants.

Everything here uses the closed-form meta-losses of the analytic suites:
the duality gap, the projected gradient, (eps, delta)-stationarity and the
per-iteration :class:`DiagnosticsRecord` of a solver run. The constant
formulas themselves live in :mod:`minimax_meta.constants` and are
re-exported here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from .constants import (  # noqa: F401  (re-exported)
    ConstantsInput,
    ConstantsReport,
    constant_step_bounds,
    constants_report,
    constrained_rate_bounds,
    convex_gap_bound,
    lipschitz_meta,
    sampling_aware_p_bounds,
    second_moment_bounds,
    smoothness_meta,
    strong_convexity_meta,
    unconstrained_rate_bounds,
    variance_bounds,
)
from .errors import UnsupportedSuiteError
from .estimators import estimate_many, exact_grad_p, exact_grad_w
from .geometry import FeasibleSet, project_ball, prox_step
from .tasks import TaskSet, suite_constants

__all__ = [
    "ConstantsInput",
    "ConstantsReport",
    "lipschitz_meta",
    "smoothness_meta",
    "strong_convexity_meta",
    "variance_bounds",
    "second_moment_bounds",
    "sampling_aware_p_bounds",
    "constants_report",
    "convex_gap_bound",
    "constant_step_bounds",
    "unconstrained_rate_bounds",
    "constrained_rate_bounds",
    "run_constants",
    "phi",
    "worst_case_value",
    "inner_minimum",
    "duality_gap",
    "projected_grad",
    "Certificate",
    "stationarity_certificate",
    "DiagnosticsRecord",
    "diagnose",
    "replica_rng",
    "sample_in_ball",
    "empirical_moments",
    "empirical_lipschitz",
    "empirical_smoothness",
    "meta_hessian_min_eig",
]

GAP_MODES = ("closed-form", "gd-oracle")


def run_constants(tasks: TaskSet, alpha, C=1, D=1) -> ConstantsReport:
    """:class:`ConstantsReport` of a suite for inner step ``alpha`` and batch sizes ``C, D``."""
    return constants_report(replace(suite_constants(tasks), alpha=alpha, C=C, D=D))


def phi(w, p, tasks: TaskSet, alpha) -> float:
    """``phi(w, p) = sum_i p_i F_i(w)``."""
    return float(np.asarray(p, dtype=float) @ exact_grad_p(w, tasks, alpha))


def worst_case_value(w, tasks: TaskSet, alpha) -> float:
    """``max_p phi(w, p)``, attained at a vertex of the simplex: ``max_i F_i(w)``."""
    return float(np.max(exact_grad_p(w, tasks, alpha)))


def _require_convex(tasks):
    if not tasks.convex:
        raise UnsupportedSuiteError("the duality gap needs a convex suite")


def _trust_region_min(K, g, radius):
    """Minimize ``1/2 v'Kv - g'v`` over ``|v| <= radius`` for symmetric PSD ``K``.

    The unconstrained min-norm solution is used when it is feasible.
    Otherwise the boundary solution ``v = (K + lam I)^-1 g`` is found by
    solving ``|v(lam)| = radius`` on ``(0, |g| / radius]``; with PSD ``K``
    the norm is strictly decreasing there, so the root is unique.
    """
    lam, Q = np.linalg.eigh(K)
    lam = np.maximum(lam, 0.0)
    gq = Q.T @ g
    tol = 1e-12 * max(1.0, lam[-1])
    pos = lam > tol
    v0 = np.where(pos, gq / np.where(pos, lam, 1.0), 0.0)
    # g has no component along the null space when K is a sum of PSD terms
    # and g lies in its range; otherwise the problem is unbounded below
    if np.linalg.norm(v0) <= radius and np.all(np.abs(gq[~pos]) <= 1e-10 * max(1.0, np.linalg.norm(g))):
        return Q @ v0

    def excess(mu):
        return np.linalg.norm(gq / (lam + mu)) - radius

    hi = np.linalg.norm(g) / radius
    mu = brentq(excess, 1e-300, hi * (1 + 1e-12), xtol=1e-15, rtol=4 * np.finfo(float).eps)
    v = Q @ (gq / (lam + mu))
    # pin to the sphere against root-finding error
    return v * (radius / np.linalg.norm(v))


def _closed_form_min(p, tasks, alpha):
    st = tasks.stacked
    if st is None or st.has_ripple:
        raise UnsupportedSuiteError("closed-form inner minimum needs a pure quadratic suite")
    d = tasks.dim
    K = np.zeros((d, d))
    h = np.zeros(d)
    for pi, task in zip(p, tasks):
        Ki = task.meta_matrix(alpha)
        K += pi * Ki
        h += pi * (Ki @ task.b)
    K = 0.5 * (K + K.T)
    dom = tasks.domain
    if not dom.bounded:
        return np.linalg.lstsq(K, h, rcond=None)[0]
    v = _trust_region_min(K, h - K @ dom.center, dom.radius)
    return dom.center + v


def _gd_oracle_min(w0, p, tasks, alpha, max_iter=100_000, tol=1e-10, step=None):
    """Projected exact-gradient descent on ``phi(., p)`` to gradient-mapping norm ``tol``."""
    if step is None:
        step = 1.0 / run_constants(tasks, alpha).M_tilde
    w = project_ball(np.asarray(w0, dtype=float), tasks.domain)
    for _ in range(max_iter):
        u = prox_step(w, exact_grad_w(w, p, tasks, alpha), step, tasks.domain)
        if np.linalg.norm(w - u) / step <= tol:
            return u
        w = u
    return w


def inner_minimum(p, tasks: TaskSet, alpha, mode="closed-form", w0=None):
    """``argmin_{w in W} phi(w, p)`` for a convex suite.

    ``closed-form`` solves the weighted quadratic's stationarity system with
    matrix ``sum_i p_i (I - alpha A_i) A_i (I - alpha A_i)`` and, if the ball
    binds, the exact boundary (trust-region) problem. ``gd-oracle`` runs
    projected exact-gradient descent from ``w0`` (default: the domain center).
    """
    _require_convex(tasks)
    p = np.asarray(p, dtype=float)
    if mode == "closed-form":
        return _closed_form_min(p, tasks, alpha)
    if mode == "gd-oracle":
        start = tasks.domain.center if w0 is None else w0
        return _gd_oracle_min(start, p, tasks, alpha)
    raise ValueError(f"unknown inner minimization mode {mode!r}")


def duality_gap(w, p, tasks: TaskSet, alpha, mode="closed-form") -> float:
    """``max_p' phi(w, p') - min_{w' in W} phi(w', p)``, nonnegative for convex suites."""
    _require_convex(tasks)
    w_star = inner_minimum(p, tasks, alpha, mode, w0=w)
    gap = worst_case_value(w, tasks, alpha) - phi(w_star, p, tasks, alpha)
    return max(gap, 0.0)


def projected_grad(w, p, tasks: TaskSet, alpha, eta_w, grad=None):
    """Gradient mapping ``(w - Pi_W(w - eta_w g)) / eta_w`` and its norm.

    ``grad`` defaults to the exact ``g_w(w, p)``; pass a stochastic estimate
    to obtain its stochastic counterpart.
    """
    w = np.asarray(w, dtype=float)
    g = exact_grad_w(w, p, tasks, alpha) if grad is None else np.asarray(grad, dtype=float)
    g_bar = (w - prox_step(w, g, eta_w, tasks.domain)) / eta_w
    return g_bar, float(np.linalg.norm(g_bar))


@dataclass(frozen=True)
class Certificate:
    holds: bool
    grad_norm: float
    p_gap: float


def stationarity_certificate(w, p, tasks: TaskSet, alpha, eps, delta, eta_w=None) -> Certificate:
    """Check ``|grad_w phi| <= eps`` and ``phi(w, p) >= max_p' phi(w, p') - delta``.

    On a ball domain the gradient norm is replaced by the projected-gradient
    norm at step ``eta_w``, which is then required.
    """
    losses = exact_grad_p(w, tasks, alpha)
    p = np.asarray(p, dtype=float)
    p_gap = float(np.max(losses) - p @ losses)
    if tasks.domain.bounded:
        if eta_w is None:
            raise ValueError("a constrained certificate needs the step size eta_w")
        _, grad_norm = projected_grad(w, p, tasks, alpha, eta_w)
    else:
        grad_norm = float(np.linalg.norm(exact_grad_w(w, p, tasks, alpha)))
    return Certificate(grad_norm <= eps and p_gap <= delta, grad_norm, p_gap)


@dataclass(frozen=True)
class DiagnosticsRecord:
    """Exact state of one iterate.

    ``p_gap`` is ``max_i F_i(w) - phi(w, p)``; ``duality_gap`` is ``None``
    for nonconvex suites.
    """

    t: int
    grad_norm_exact: float
    grad_norm_est: float | None
    duality_gap: float | None
    proj_grad_norm: float
    worst_loss: float
    avg_loss: float
    p_gap: float
    task_losses: np.ndarray


def diagnose(t, w, p, tasks: TaskSet, alpha, eta_w, g_w_hat=None, gap_mode="closed-form"):
    """Build the :class:`DiagnosticsRecord` of iterate ``t``.

    ``avg_loss`` is the uniform mean of the task meta-losses, the objective
    of average-loss meta-learning.
    """
    losses = exact_grad_p(w, tasks, alpha)
    g = exact_grad_w(w, p, tasks, alpha)
    _, pg = projected_grad(w, p, tasks, alpha, eta_w, grad=g)
    gap = duality_gap(w, p, tasks, alpha, gap_mode) if tasks.convex else None
    est = None if g_w_hat is None else float(np.linalg.norm(g_w_hat))
    return DiagnosticsRecord(
        t=int(t),
        grad_norm_exact=float(np.linalg.norm(g)),
        grad_norm_est=est,
        duality_gap=gap,
        proj_grad_norm=pg,
        worst_loss=float(np.max(losses)),
        avg_loss=float(np.mean(losses)),
        p_gap=float(np.max(losses) - np.asarray(p, dtype=float) @ losses),
        task_losses=losses,
    )


# empirical checks ------------------------------------------------------------


def replica_rng(seed, replica) -> np.random.Generator:
    """Independent generator for Monte Carlo replica ``replica`` of ``seed``.

    The pair is hashed by :class:`numpy.random.SeedSequence`, so replicas
    never share a stream and results do not depend on how replicas are
    scheduled.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(replica)]))


def sample_in_ball(ball: FeasibleSet, n, rng) -> np.ndarray:
    """``n`` points uniformly distributed in a ball, shape ``(n, d)``."""
    d = ball.dim
    x = rng.standard_normal((n, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    r = ball.radius * rng.random(n) ** (1.0 / d)
    return ball.center + x * r[:, None]


def _analysis_ball(tasks):
    ball = tasks.domain if tasks.domain.bounded else tasks.region
    if ball is None:
        raise ValueError("empirical checks need a bounded domain or analysis region")
    return ball


def empirical_moments(w, p, tasks: TaskSet, alpha, C, D, n, rng):
    """Monte Carlo moments of the two estimators at ``(w, p)`` over ``n`` batches.

    Returns a dict with the sample means ``mean_w``, ``mean_p``, their
    standard errors ``se_w``, ``se_p`` and the second moments ``err_w2``
    (``E|g_w_hat - g_w|^2``), ``err_p2``, ``sq_w`` (``E|g_w_hat|^2``) and
    ``sq_p`` measured against the exact gradients.
    """
    g_w, g_p = estimate_many(w, p, tasks, alpha, C, D, n, rng)
    ex_w = exact_grad_w(w, p, tasks, alpha)
    ex_p = exact_grad_p(w, tasks, alpha)
    return dict(
        mean_w=g_w.mean(axis=0),
        mean_p=g_p.mean(axis=0),
        se_w=g_w.std(axis=0, ddof=1) / math.sqrt(n),
        se_p=g_p.std(axis=0, ddof=1) / math.sqrt(n),
        exact_w=ex_w,
        exact_p=ex_p,
        err_w2=float(np.mean(np.sum((g_w - ex_w) ** 2, axis=1))),
        err_p2=float(np.mean(np.sum((g_p - ex_p) ** 2, axis=1))),
        sq_w=float(np.mean(np.sum(g_w**2, axis=1))),
        sq_p=float(np.mean(np.sum(g_p**2, axis=1))),
    )


def _pairs(tasks, n_pairs, rng, max_dist=None):
    ball = _analysis_ball(tasks)
    u = sample_in_ball(ball, n_pairs, rng)
    if max_dist is None:
        v = sample_in_ball(ball, n_pairs, rng)
    else:
        # nearby pairs probe local curvature; keep both ends in the ball
        step = rng.standard_normal(u.shape)
        step *= (max_dist * rng.random(n_pairs) / np.linalg.norm(step, axis=1))[:, None]
        v = np.array([project_ball(x, ball) for x in u + step])
    return u, v


def empirical_lipschitz(tasks: TaskSet, alpha, n_pairs, rng, max_dist=None) -> float:
    """Largest ``|F_i(u) - F_i(v)| / |u - v|`` over random pairs in the domain and all tasks."""
    u, v = _pairs(tasks, n_pairs, rng, max_dist)
    dist = np.linalg.norm(u - v, axis=1)
    keep = dist > 0
    best = 0.0
    for task in tasks:
        fu = np.array([task.meta_loss(x, alpha) for x in u[keep]])
        fv = np.array([task.meta_loss(x, alpha) for x in v[keep]])
        best = max(best, float(np.max(np.abs(fu - fv) / dist[keep])))
    return best


def empirical_smoothness(tasks: TaskSet, alpha, n_pairs, rng, max_dist=None) -> float:
    """Largest ``|grad F_i(u) - grad F_i(v)| / |u - v|`` over random pairs and all tasks."""
    u, v = _pairs(tasks, n_pairs, rng, max_dist)
    dist = np.linalg.norm(u - v, axis=1)
    keep = dist > 0
    best = 0.0
    for task in tasks:
        gu = np.array([task.meta_grad(x, alpha) for x in u[keep]])
        gv = np.array([task.meta_grad(x, alpha) for x in v[keep]])
        best = max(best, float(np.max(np.linalg.norm(gu - gv, axis=1) / dist[keep])))
    return best


def meta_hessian_min_eig(tasks: TaskSet, alpha) -> float:
    """Smallest eigenvalue over tasks of the quadratic meta-Hessian ``(I - alpha A) A (I - alpha A)``."""
    if tasks.stacked is None or tasks.stacked.has_ripple:
        raise UnsupportedSuiteError("meta-Hessian eigenvalues need a pure quadratic suite")
    return min(float(np.linalg.eigvalsh(t.meta_matrix(alpha))[0]) for t in tasks)
