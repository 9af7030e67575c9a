"""Projected stochastic gradient descent-ascent on the min-max meta-objective.

Each iteration draws one minibatch, forms both stochastic gradients at the
current pair ``(w, p)`` and updates the two blocks simultaneously::

    w' = Pi_W(w - eta_w g_w_hat(w, p))
    p' = Pi_simplex(p + eta_p g_p_hat(w, p))

Convex suites output the running average of the iterates, nonconvex ones a
uniformly drawn iterate chosen by reservoir sampling from the same generator.
A plain MAML baseline shares the loop, the sampling and the step size.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .constants import ConstantsReport, constants_report
from .diagnostics import DiagnosticsRecord, diagnose
from .errors import ConfigError, DegenerateProblemError, RunAborted
from .estimators import (
    REDUCTIONS,
    Minibatch,
    MinibatchStream,
    estimate,
    estimate_maml_grad,
)
from .geometry import project_ball, project_simplex
from .tasks import TaskSet, suite_constants

__all__ = [
    "REGIMES",
    "RunConfig",
    "SaddleState",
    "Schedule",
    "RunOutput",
    "Reservoir",
    "schedule_convex",
    "schedule_nonconvex_unconstrained",
    "schedule_nonconvex_constrained",
    "resolve_schedule",
    "step",
    "run_da_maml",
    "run_maml_baseline",
]

REGIMES = ("convex", "nonconvex-unconstrained", "nonconvex-constrained", "manual")
TERMINATIONS = ("average", "random")
DEFAULT_TERMINATION = {
    "convex": "average",
    "nonconvex-unconstrained": "random",
    "nonconvex-constrained": "random",
}
# abort once |g_w_hat| exceeds this multiple of its second-moment bound
DIVERGENCE_FACTOR = 1e6


@dataclass(frozen=True)
class RunConfig:
    """Hyperparameters of one run.

    ``termination`` is ``"average"`` (output the mean of iterates ``1..T``)
    or ``"random"`` (output a uniformly drawn iterate); it defaults to the
    regime's rule and must be given for ``regime="manual"``, together with
    constant ``eta_w`` and ``eta_p``. ``w_init`` is ``"center"`` (of the
    domain), ``"zero"`` or a vector. ``record_every = k > 0`` records
    iterates ``1, 1 + k, 1 + 2k, ...`` and always ``T``; ``0`` records only
    ``T``. The first ``keep_history`` iterates are stored verbatim.
    """

    alpha: float
    T: int
    C: int = 1
    D: int = 1
    beta: float | None = None
    regime: str = "convex"
    eta_w: float | None = None
    eta_p: float | None = None
    termination: str | None = None
    seed: int = 0
    w_init: object = "center"
    record_every: int = 0
    keep_history: int = 0
    reduction: str = "sequential"

    def __post_init__(self):
        def need(cond, msg, name):
            if not cond:
                raise ConfigError(msg, field=name)

        need(math.isfinite(self.alpha) and self.alpha >= 0, "must be a finite number >= 0", "alpha")
        for name in ("T", "C", "D"):
            v = getattr(self, name)
            need(isinstance(v, (int, np.integer)) and v >= 1, "must be an integer >= 1", name)
        need(self.regime in REGIMES, f"must be one of {REGIMES}", "regime")
        term = self.termination
        if term is None and self.regime != "manual":
            object.__setattr__(self, "termination", DEFAULT_TERMINATION[self.regime])
        need(self.termination in TERMINATIONS, f"must be one of {TERMINATIONS}", "termination")
        if self.regime == "nonconvex-unconstrained":
            need(self.beta is not None and 0 < self.beta < 0.5, "must lie in (0, 1/2)", "beta")
        if self.regime == "nonconvex-constrained":
            need(self.beta is not None and 0 < self.beta < 1, "must lie in (0, 1)", "beta")
        if self.regime == "manual":
            for name in ("eta_w", "eta_p"):
                v = getattr(self, name)
                need(v is not None and math.isfinite(v) and v > 0,
                     "manual regime needs a positive step size", name)
        need(isinstance(self.seed, (int, np.integer)) and 0 <= self.seed < 2**64,
             "must be an integer in [0, 2^64)", "seed")
        need(self.record_every >= 0, "must be >= 0", "record_every")
        need(self.keep_history >= 0, "must be >= 0", "keep_history")
        need(self.reduction in REDUCTIONS, f"must be one of {REDUCTIONS}", "reduction")
        if not isinstance(self.w_init, str):
            w = np.asarray(self.w_init, dtype=float)
            need(w.ndim == 1 and np.all(np.isfinite(w)), "must be a finite vector", "w_init")
            object.__setattr__(self, "w_init", w)
        else:
            need(self.w_init in ("center", "zero"), "must be 'center', 'zero' or a vector", "w_init")

    def initial_point(self, tasks: TaskSet) -> np.ndarray:
        dom = tasks.domain
        if isinstance(self.w_init, str):
            w = dom.center.copy() if self.w_init == "center" else np.zeros(tasks.dim)
        else:
            w = self.w_init.copy()
        if w.size != tasks.dim:
            raise ConfigError(f"has dimension {w.size}, suite has {tasks.dim}", field="w_init")
        if not dom.contains(w):
            raise ConfigError("initial point lies outside the domain", field="w_init")
        return w


@dataclass(frozen=True)
class SaddleState:
    w: np.ndarray
    p: np.ndarray
    t: int = 1


@dataclass(frozen=True)
class Schedule:
    """Resolved constant step sizes, the effective task batch and the constants used."""

    eta_w: float
    eta_p: float
    C: int
    constants: ConstantsReport | None


@dataclass
class RunOutput:
    """Result of a run.

    ``tau`` is the drawn iterate index under random termination (``None``
    for averaging). ``final`` diagnoses the output pair; ``trace`` holds the
    recorded iterates (running averages under averaging).
    """

    method: str
    w_out: np.ndarray
    p_out: np.ndarray
    tau: int | None
    eta_w: float
    eta_p: float
    C: int
    constants: ConstantsReport | None
    final: DiagnosticsRecord
    trace: list = field(default_factory=list)
    history: list = field(default_factory=list)


def schedule_convex(R_W, G_w, G_p, T):
    """``eta_w = 2 R_W / (G_w sqrt(T))`` and ``eta_p = 2 / (G_p sqrt(T))``."""
    if G_w <= 0 or G_p <= 0:
        raise DegenerateProblemError("gradient bounds are zero; every gradient vanishes")
    if R_W <= 0 or T < 1:
        raise ValueError("R_W must be positive and T at least 1")
    root = math.sqrt(T)
    return 2.0 * R_W / (G_w * root), 2.0 / (G_p * root)


def schedule_nonconvex_unconstrained(beta, G_p, T, M_tilde=None):
    """``eta_w = T^-beta`` and ``eta_p = T^(-2 beta) / (sqrt(2) G_p)``.

    With ``M_tilde`` given, the requirement ``T^beta > M_tilde / 2`` is
    checked and a violation raises :class:`ConfigError`.
    """
    if not 0 < beta < 0.5:
        raise ConfigError("must lie in (0, 1/2)", field="beta")
    if G_p <= 0:
        raise DegenerateProblemError("G_p is zero")
    if M_tilde is not None and not T**beta > M_tilde / 2.0:
        raise ConfigError(
            f"T^beta = {T**beta:.6g} must exceed M_tilde / 2 = {M_tilde / 2.0:.6g}", field="T"
        )
    return T ** (-beta), T ** (-2.0 * beta) / (math.sqrt(2.0) * G_p)


def constrained_batch(beta, T) -> int:
    """Task batch ``ceil(T^beta)``, robust to round-off in the power."""
    x = T**beta
    r = round(x)
    return int(r) if abs(x - r) <= 1e-9 * max(1.0, x) else math.ceil(x)


def schedule_nonconvex_constrained(M_tilde, G_p, beta, T):
    """``eta_w = 1/(2 M_tilde)``, ``eta_p = T^-beta / (sqrt(2) G_p)`` and ``C = ceil(T^beta)``.

    ``G_p`` must already be evaluated at the returned batch size; see
    :func:`resolve_schedule`.
    """
    if not 0 < beta < 1:
        raise ConfigError("must lie in (0, 1)", field="beta")
    if M_tilde <= 0 or G_p <= 0:
        raise DegenerateProblemError("M_tilde and G_p must be positive")
    return 1.0 / (2.0 * M_tilde), T ** (-beta) / (math.sqrt(2.0) * G_p), constrained_batch(beta, T)


def _constants(tasks, config, C):
    return constants_report(replace(suite_constants(tasks), alpha=config.alpha, C=C, D=config.D))


def resolve_schedule(config: RunConfig, tasks: TaskSet) -> Schedule:
    """Step sizes and batch size for ``config`` on ``tasks``.

    Raises :class:`ConfigError` for an invalid combination and
    :class:`DegenerateProblemError` when the constants vanish.
    """
    T, regime = config.T, config.regime
    if regime == "manual":
        try:
            rep = _constants(tasks, config, config.C)
        except ConfigError:
            rep = None
        return Schedule(float(config.eta_w), float(config.eta_p), config.C, rep)
    if regime == "convex":
        if not tasks.domain.bounded:
            raise ConfigError("the convex regime needs a ball domain", field="domain")
        rep = _constants(tasks, config, config.C)
        eta_w, eta_p = schedule_convex(tasks.domain.radius, rep.G_w, rep.G_p, T)
        return Schedule(eta_w, eta_p, config.C, rep)
    if regime == "nonconvex-unconstrained":
        if tasks.domain.bounded:
            raise ConfigError("the unconstrained regime needs an unconstrained domain",
                              field="domain")
        rep = _constants(tasks, config, config.C)
        eta_w, eta_p = schedule_nonconvex_unconstrained(config.beta, rep.G_p, T, rep.M_tilde)
        return Schedule(eta_w, eta_p, config.C, rep)
    C = constrained_batch(config.beta, T)
    rep = _constants(tasks, config, C)
    eta_w, eta_p, C = schedule_nonconvex_constrained(rep.M_tilde, rep.G_p, config.beta, T)
    return Schedule(eta_w, eta_p, C, rep)


class Reservoir:
    """Uniform choice of one item from a stream of unknown length.

    Item ``t`` (1-based) replaces the kept one with probability ``1/t``;
    the first item is kept without a draw.
    """

    def __init__(self):
        self.t = 0
        self.item = None
        self.index = None

    def offer(self, item, rng) -> bool:
        self.t += 1
        if self.t == 1 or rng.random() * self.t < 1.0:
            self.item, self.index = item, self.t
            return True
        return False


def _check(g_w, g_p, t, limit):
    if not (np.all(np.isfinite(g_w)) and np.all(np.isfinite(g_p))):
        raise RunAborted("non-finite stochastic gradient", t)
    if limit is not None:
        norm = float(np.linalg.norm(g_w))
        if norm > limit:
            raise RunAborted(f"|g_w_hat| = {norm:.6g} exceeds the divergence limit {limit:.6g}", t)


def _apply(state, g_w, g_p, eta_w, eta_p, tasks):
    w = project_ball(state.w - eta_w * g_w, tasks.domain)
    p = project_simplex(state.p + eta_p * g_p)
    return SaddleState(w, p, state.t + 1)


def step(state: SaddleState, batch: Minibatch, eta_w, eta_p, tasks: TaskSet, alpha,
         reduction="sequential", grad_limit=None) -> SaddleState:
    """One simultaneous descent-ascent update; both gradients use the old ``(w, p)``.

    Raises :class:`RunAborted` carrying ``state.t`` if a gradient is not
    finite or ``|g_w_hat|`` exceeds ``grad_limit``.
    """
    if not (eta_w > 0 and eta_p > 0):
        raise ValueError("step sizes must be positive")
    est = estimate(state.w, state.p, tasks, batch, alpha, reduction)
    _check(est.g_w, est.g_p, state.t, grad_limit)
    return _apply(state, est.g_w, est.g_p, eta_w, eta_p, tasks)


def _recorded(t, T, every):
    return t == T or (every > 0 and (t - 1) % every == 0)


def _run(method, config, tasks, probs):
    try:
        sched = resolve_schedule(config, tasks)
    except DegenerateProblemError:
        sched = None
    w1 = config.initial_point(tasks)
    m = tasks.m
    p1 = np.full(m, 1.0 / m)
    if sched is None:
        # every gradient vanishes: the initial pair is already optimal
        final = diagnose(1, w1, p1, tasks, config.alpha, 1.0)
        tau = 1 if config.termination == "random" else None
        return RunOutput(method, w1, p1, tau, math.nan, math.nan, config.C, None, final, [final])

    eta_w, eta_p, C = sched.eta_w, sched.eta_p, sched.C
    alpha, T, every = config.alpha, config.T, config.record_every
    limit = None if sched.constants is None else DIVERGENCE_FACTOR * sched.constants.G_w
    rng = np.random.default_rng(config.seed)
    stream = MinibatchStream(tasks, C, config.D, rng, probs)
    averaging = config.termination == "average"
    baseline = method == "maml"

    state = SaddleState(w1, p1, 1)
    sum_w, sum_p = np.zeros_like(w1), np.zeros(m)
    reservoir = Reservoir()
    trace, history = [], []
    for t in range(1, T + 1):
        if len(history) < config.keep_history:
            history.append(state)
        if averaging:
            sum_w += state.w
            sum_p += state.p
        else:
            reservoir.offer(state, rng)
        g_w = None
        if t < T:
            batch = next(stream)
            if baseline:
                g_w = estimate_maml_grad(state.w, tasks, batch, alpha, config.reduction)
                g_p = np.zeros(m)
            else:
                est = estimate(state.w, state.p, tasks, batch, alpha, config.reduction)
                g_w, g_p = est.g_w, est.g_p
            _check(g_w, g_p, t, limit)
        if _recorded(t, T, every):
            if averaging:
                w_rec, p_rec, g_rec = sum_w / t, project_simplex(sum_p / t), None
            else:
                w_rec, p_rec, g_rec = state.w, state.p, g_w
            trace.append(diagnose(t, w_rec, p_rec, tasks, alpha, eta_w, g_rec))
        if t < T:
            state = _apply(state, g_w, g_p, eta_w, 0.0 if baseline else eta_p, tasks)

    if averaging:
        w_out, p_out, tau = sum_w / T, project_simplex(sum_p / T), None
        final = trace[-1]
    else:
        kept = reservoir.item
        w_out, p_out, tau = kept.w, kept.p, reservoir.index
        ts = [r.t for r in trace]
        pos = bisect.bisect_left(ts, tau)
        if pos < len(ts) and ts[pos] == tau:
            final = trace[pos]
        else:
            # the output iterate always appears in the trace
            final = diagnose(tau, w_out, p_out, tasks, alpha, eta_w)
            trace.insert(pos, final)
    return RunOutput(method, w_out, p_out, tau, eta_w, 0.0 if baseline else eta_p, C,
                     sched.constants, final, trace, history)


def run_da_maml(config: RunConfig, tasks: TaskSet) -> RunOutput:
    """Run the min-max descent-ascent loop for ``config.T`` iterates (``T - 1`` updates).

    ``p`` starts uniform and ``w`` at ``config.w_init``. Under averaging the
    output is the running mean of iterates ``1..T``; otherwise iterate
    ``tau``, uniform on ``1..T``.
    """
    if tasks.m == 0:
        raise ConfigError("empty task set", field="tasks")
    return _run("da-maml", config, tasks, None)


def run_maml_baseline(config: RunConfig, tasks: TaskSet, task_probs=None) -> RunOutput:
    """Average-loss MAML with tasks drawn from ``task_probs`` (uniform by default).

    Uses the same batch sizes, generator stream and ``eta_w`` as
    :func:`run_da_maml`; the gradient is the plain average of the ``C * D``
    per-pair meta-gradients, ``p`` stays uniform and there is no ascent step.
    """
    m = tasks.m
    if task_probs is None:
        probs = None
    else:
        probs = np.asarray(task_probs, dtype=float)
        if probs.shape != (m,) or np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise ConfigError("must be a probability vector over the tasks", field="task_probs")
    return _run("maml", config, tasks, probs)
