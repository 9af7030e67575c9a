"""Unbiased stochastic meta-gradients for the min-max objective.

For weights ``p`` on the simplex the objective is
``phi(w, p) = sum_i p_i F_i(w)`` with ``F_i`` the expected loss of task ``i``
after one noisy gradient step of size ``alpha``. A minibatch draws ``C`` tasks
uniformly with replacement and ``D`` data pairs per draw; each pair yields one
inner adaptation ``w_ij = w - alpha grad f_hat(w, theta_in)`` that serves both
gradient estimates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tasks import Datum, TaskSet

__all__ = [
    "Minibatch",
    "InnerBatch",
    "GradientEstimate",
    "sample_task_indices",
    "sample_minibatch",
    "adapt_inner",
    "second_order_apply",
    "inner_batch",
    "estimate",
    "estimate_grad_w",
    "estimate_grad_p",
    "estimate_maml_grad",
    "estimate_many",
    "MinibatchStream",
    "exact_grad_w",
    "exact_grad_p",
    "pairwise_sum",
]

REDUCTIONS = ("sequential", "pairwise")


@dataclass(frozen=True)
class Minibatch:
    """``C`` task draws with ``D`` data pairs each.

    The realised noise is stored per channel with leading shape ``(C, D)``;
    ``hess_*`` is ``None`` when no task in the suite has Hessian noise.
    """

    task_idx: np.ndarray
    value_in: np.ndarray
    value_out: np.ndarray
    grad_in: np.ndarray
    grad_out: np.ndarray
    hess_in: np.ndarray | None = None
    hess_out: np.ndarray | None = None

    def __post_init__(self):
        C, D = self.value_in.shape
        if C == 0 or D == 0:
            raise ValueError("empty minibatch")
        if len(self.task_idx) != C:
            raise ValueError("task_idx does not match the data shape")

    @property
    def C(self) -> int:
        return self.value_in.shape[0]

    @property
    def D(self) -> int:
        return self.value_in.shape[1]

    def theta_in(self, k) -> Datum:
        """Batched ``theta_in`` of draw ``k`` (leading shape ``(D,)``)."""
        hess = None if self.hess_in is None else self.hess_in[k]
        return Datum(self.value_in[k], self.grad_in[k], hess)

    def theta_out(self, k) -> Datum:
        hess = None if self.hess_out is None else self.hess_out[k]
        return Datum(self.value_out[k], self.grad_out[k], hess)

    def counts(self, m) -> np.ndarray:
        """Multiplicity of every task in the batch."""
        return np.bincount(self.task_idx, minlength=m)

    def draws(self, start, stop) -> Minibatch:
        """The sub-batch of draws ``start:stop`` (views, no copies)."""
        s = slice(start, stop)
        hess_in = None if self.hess_in is None else self.hess_in[s]
        hess_out = None if self.hess_out is None else self.hess_out[s]
        return Minibatch(self.task_idx[s], self.value_in[s], self.value_out[s],
                         self.grad_in[s], self.grad_out[s], hess_in, hess_out)


@dataclass(frozen=True)
class InnerBatch:
    """Per-pair quantities shared by both estimates, each with leading shape ``(C, D)``.

    ``meta_grads`` holds ``(I - alpha H_ij) grad f_hat(w_ij, theta_out)`` and
    ``losses`` holds ``f_hat(w_ij, theta_out)``.
    """

    task_idx: np.ndarray
    adapted: np.ndarray
    meta_grads: np.ndarray
    losses: np.ndarray

    @property
    def n_adaptations(self) -> int:
        return self.adapted.shape[0] * self.adapted.shape[1]


@dataclass(frozen=True)
class GradientEstimate:
    g_w: np.ndarray
    g_p: np.ndarray
    batch: Minibatch
    inner: InnerBatch


def sample_task_indices(m, C, rng, probs=None) -> np.ndarray:
    """Draw ``C`` task indices with replacement.

    Inverse-CDF sampling on one uniform per draw, so uniform and weighted
    sampling consume the generator identically.
    """
    if probs is None:
        cdf = np.arange(1, m + 1) / m
    else:
        cdf = np.cumsum(probs)
    idx = np.searchsorted(cdf, rng.random(C) * cdf[-1], side="right")
    return np.minimum(idx, m - 1)


def sample_minibatch(tasks: TaskSet, C: int, D: int, rng, probs=None) -> Minibatch:
    """Sample task indices, then all in/out noise of the batch, one call per channel.

    A channel is drawn only if some task in the suite uses it; each draw is
    then scaled by its own task's noise level.
    """
    if C < 1 or D < 1:
        raise ValueError("C and D must be at least 1")
    d = tasks.dim
    levels = tasks.noise_levels
    idx = sample_task_indices(tasks.m, C, rng, probs)
    sig_f, sig_r, sig_h = levels[idx].T
    used = tasks.noise_used

    if used[0]:
        value = rng.standard_normal((2, C, D)) * sig_f[:, None]
    else:
        value = np.zeros((2, C, D))
    if used[1]:
        grad = rng.standard_normal((2, C, D, d)) * (sig_r / math.sqrt(d))[:, None, None]
    else:
        grad = np.zeros((2, C, D, d))
    hess = (None, None)
    if used[2]:
        g = rng.standard_normal((2, C, D, d, d))
        scale = 0.5 * math.sqrt(2.0 / (d * (d + 1)))
        hess = (g + np.swapaxes(g, -1, -2)) * (scale * sig_h)[:, None, None, None]
    return Minibatch(idx, value[0], value[1], grad[0], grad[1], hess[0], hess[1])


class MinibatchStream:
    """Iterator over independent minibatches, drawn ``block`` at a time.

    Drawing many batches per generator call keeps the per-iteration cost of
    a solver run low. The sequence depends on ``block``, so it is part of the
    reproducibility contract together with the seed.
    """

    def __init__(self, tasks: TaskSet, C, D, rng, probs=None, block=None):
        self.tasks, self.C, self.D, self.rng, self.probs = tasks, C, D, rng, probs
        self.block = block if block is not None else default_block(C, D, tasks.dim)
        self._buf, self._pos = None, self.block

    def __iter__(self):
        return self

    def __next__(self) -> Minibatch:
        if self._pos == self.block:
            self._buf = sample_minibatch(self.tasks, self.C * self.block, self.D,
                                         self.rng, self.probs)
            self._pos = 0
        k = self._pos * self.C
        self._pos += 1
        return self._buf.draws(k, k + self.C)


def default_block(C, D, d):
    """Batches per generator call: about 2**16 noise entries, between 1 and 256."""
    return int(min(256, max(1, 2**16 // (C * D * d * d))))


def adapt_inner(w, task, theta_in: Datum, alpha):
    """One inner stochastic gradient step ``w - alpha grad f_hat(w, theta_in)``."""
    return np.asarray(w, dtype=float) - alpha * task.gradient(w, theta_in)


def second_order_apply(w, task, theta_in: Datum, alpha, v):
    """Apply ``I - alpha hess f_hat(w, theta_in)`` to ``v`` without forming the matrix."""
    v = np.asarray(v, dtype=float)
    return v - alpha * task.hessian_vec(w, theta_in, v)


def _inner_generic(w, tasks, batch, alpha):
    C, D, d = batch.C, batch.D, tasks.dim
    adapted = np.empty((C, D, d))
    meta = np.empty((C, D, d))
    losses = np.empty((C, D))
    ws = np.broadcast_to(w, (D, d))
    for k, i in enumerate(batch.task_idx):
        task, th_in, th_out = tasks[i], batch.theta_in(k), batch.theta_out(k)
        adapted[k] = adapt_inner(ws, task, th_in, alpha)
        outer = task.gradient(adapted[k], th_out)
        meta[k] = second_order_apply(ws, task, th_in, alpha, outer)
        losses[k] = task.value(adapted[k], th_out)
    return adapted, meta, losses


def _inner_stacked(w, tasks, batch, alpha):
    st = tasks.stacked
    sel = st.select(batch.task_idx)
    w0 = w[None, None, :]
    adapted = w0 - alpha * (st.grad_at(sel, w0) + batch.grad_in)
    outer = st.grad_at(sel, adapted) + batch.grad_out
    hv = st.hvp_at(sel, w0, outer)
    if batch.hess_in is not None:
        hv = hv + (batch.hess_in @ outer[..., None])[..., 0]
    meta = outer - alpha * hv
    losses = st.loss_at(sel, adapted) + batch.value_out
    return adapted, meta, losses


def inner_batch(w, tasks: TaskSet, batch: Minibatch, alpha, vectorized=True) -> InnerBatch:
    """Compute every inner adaptation of ``batch`` once.

    The outer gradient is evaluated at the adapted point with ``theta_out``
    and then multiplied by the second-order correction built from the same
    ``theta_in`` that produced the adaptation. Quadratic-family suites are
    evaluated for all draws at once unless ``vectorized`` is false.
    """
    w = np.asarray(w, dtype=float)
    if vectorized and tasks.stacked is not None:
        parts = _inner_stacked(w, tasks, batch, alpha)
    else:
        parts = _inner_generic(w, tasks, batch, alpha)
    return InnerBatch(batch.task_idx, *parts)


def pairwise_sum(terms):
    """Sum along the first axis with a fixed balanced tree."""
    terms = list(terms)
    while len(terms) > 1:
        nxt = [terms[k] + terms[k + 1] for k in range(0, len(terms) - 1, 2)]
        if len(terms) % 2:
            nxt.append(terms[-1])
        terms = nxt
    return terms[0]


def _reduce(terms, reduction):
    # np.add.reduce over axis 0 of a C-ordered array accumulates rows in order
    if reduction == "sequential":
        return np.add.reduce(terms, axis=0)
    if reduction == "pairwise":
        return pairwise_sum(terms)
    raise ValueError(f"unknown reduction {reduction!r}")


def _grad_w(inner, p, m, reduction):
    C, D = inner.losses.shape
    terms = p[inner.task_idx][:, None] * inner.meta_grads.sum(axis=1)
    return (m / (C * D)) * _reduce(terms, reduction)


def _grad_p(inner, m, reduction):
    C, D = inner.losses.shape
    if reduction == "sequential":
        sums = np.bincount(inner.task_idx, weights=inner.losses.sum(axis=1), minlength=m)
    else:
        terms = np.zeros((C, m))
        terms[np.arange(C), inner.task_idx] = inner.losses.sum(axis=1)
        sums = _reduce(terms, reduction)
    return (m / (C * D)) * sums


def estimate(w, p, tasks: TaskSet, batch: Minibatch, alpha, reduction="sequential"):
    """Both stochastic gradients from one minibatch, sharing the inner adaptations."""
    inner = inner_batch(w, tasks, batch, alpha)
    g_w = _grad_w(inner, np.asarray(p, dtype=float), tasks.m, reduction)
    g_p = _grad_p(inner, tasks.m, reduction)
    return GradientEstimate(g_w, g_p, batch, inner)


def estimate_grad_w(w, p, tasks, batch, alpha, reduction="sequential"):
    """Stochastic gradient of ``phi`` in ``w``.

    ``(m/C) sum_draws (1/D) sum_j p_i (I - alpha H_ij) grad f_hat_i(w_ij, theta_out_ij)``.
    """
    inner = inner_batch(w, tasks, batch, alpha)
    return _grad_w(inner, np.asarray(p, dtype=float), tasks.m, reduction)


def estimate_grad_p(w, tasks, batch, alpha, reduction="sequential"):
    """Stochastic gradient of ``phi`` in ``p``; tasks absent from the batch get 0."""
    return _grad_p(inner_batch(w, tasks, batch, alpha), tasks.m, reduction)


def estimate_maml_grad(w, tasks, batch, alpha, reduction="sequential"):
    """Plain average of per-draw meta-gradients, as used by the MAML baseline."""
    inner = inner_batch(w, tasks, batch, alpha)
    # same scaling expression as _grad_w so a one-task suite gives identical bits
    return (1.0 / (batch.C * batch.D)) * _reduce(inner.meta_grads.sum(axis=1), reduction)


def estimate_many(w, p, tasks: TaskSet, alpha, C, D, n, rng, chunk=None):
    """``n`` independent ``(g_w, g_p)`` estimates at one point, vectorized.

    Each chunk draws ``k * C`` tasks in one minibatch and splits it into
    ``k`` consecutive batches of ``C`` draws, so every estimate equals
    :func:`estimate` on the matching sub-batch. Returns arrays of shape
    ``(n, d)`` and ``(n, m)``.
    """
    w = np.asarray(w, dtype=float)
    p = np.asarray(p, dtype=float)
    m, d = tasks.m, tasks.dim
    chunk = chunk or max(1, 2**17 // (C * D * d))
    g_w = np.empty((n, d))
    g_p = np.empty((n, m))
    scale = m / (C * D)
    for start in range(0, n, chunk):
        k = min(chunk, n - start)
        inner = inner_batch(w, tasks, sample_minibatch(tasks, k * C, D, rng), alpha)
        idx = inner.task_idx.reshape(k, C)
        per_draw = inner.meta_grads.sum(axis=1).reshape(k, C, d)
        g_w[start:start + k] = scale * np.add.reduce(p[idx][..., None] * per_draw, axis=1)
        loss_sums = inner.losses.sum(axis=1).reshape(k, C)
        rows = np.repeat(np.arange(k), C)
        g = np.zeros((k, m))
        np.add.at(g, (rows, idx.ravel()), loss_sums.ravel())
        g_p[start:start + k] = scale * g
    return g_w, g_p


def exact_grad_w(w, p, tasks: TaskSet, alpha):
    """``sum_i p_i grad F_i(w)`` from the closed-form meta-gradients."""
    return np.asarray(p, dtype=float) @ tasks.meta_grads(w, alpha)


def exact_grad_p(w, tasks: TaskSet, alpha):
    """Vector of exact meta-losses ``F_i(w)``."""
    return tasks.meta_losses(w, alpha)
