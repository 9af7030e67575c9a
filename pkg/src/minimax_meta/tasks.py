"""Stochastic task oracles and analytic task suites.

A task exposes noisy evaluations ``value``, ``gradient`` and ``hessian_vec``
at a sampled datum. Noise is additive and independent per channel::

    f_hat(w, theta)      = f(w) + sigma_f * xi
    grad f_hat(w, theta) = grad f(w) + eps,            eps ~ N(0, sigma_r^2 / d I)
    hess f_hat(w, theta) = hess f(w) + sigma_h * S,    E |S|_F^2 = 1

A :class:`Datum` stores the realised perturbations, so the same datum can be
replayed for the inner gradient and the Hessian of one meta-gradient sample.
All oracle methods broadcast over leading axes: ``w`` of shape ``(..., d)``
pairs with a datum of leading shape ``(...)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constants import ConstantsInput
from .errors import ConfigError, UnsupportedSuiteError
from .geometry import FeasibleSet

__all__ = [
    "NoiseModel",
    "Datum",
    "TaskOracle",
    "QuadraticTask",
    "TrigQuadraticTask",
    "TaskSet",
    "StackedQuadratics",
    "sample_pair",
    "meta_loss_exact",
    "meta_grad_exact",
    "suite_constants",
    "random_spd",
    "quadratic_suite",
    "trig_suite",
]


@dataclass(frozen=True)
class Datum:
    """Realised noise of one (or a batch of) data draws."""

    value_noise: np.ndarray
    grad_noise: np.ndarray
    hess_noise: np.ndarray | None = None

    def __getitem__(self, idx):
        hess = None if self.hess_noise is None else self.hess_noise[idx]
        return Datum(self.value_noise[idx], self.grad_noise[idx], hess)


@dataclass(frozen=True)
class NoiseModel:
    """Standard deviations of the value, gradient and Hessian perturbations."""

    sigma_f: float = 0.0
    sigma_r: float = 0.0
    sigma_h: float = 0.0

    def __post_init__(self):
        for name in ("sigma_f", "sigma_r", "sigma_h"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be a nonnegative finite number")

    @property
    def is_zero(self) -> bool:
        return self.sigma_f == 0 and self.sigma_r == 0 and self.sigma_h == 0

    def sample(self, rng: np.random.Generator, d: int, size=()) -> Datum:
        """Draw a datum of leading shape ``size``.

        Channels with zero noise consume no random numbers.
        """
        size = tuple(np.atleast_1d(size)) if size != () else ()
        if self.sigma_f > 0:
            value = self.sigma_f * rng.standard_normal(size)
        else:
            value = np.zeros(size)
        if self.sigma_r > 0:
            grad = (self.sigma_r / math.sqrt(d)) * rng.standard_normal(size + (d,))
        else:
            grad = np.zeros(size + (d,))
        hess = None
        if self.sigma_h > 0:
            g = rng.standard_normal(size + (d, d))
            # symmetric with E|S|_F^2 = 1
            s = (g + np.swapaxes(g, -1, -2)) * (0.5 * math.sqrt(2.0 / (d * (d + 1))))
            hess = self.sigma_h * s
        return Datum(value, grad, hess)


class TaskOracle:
    """Base class of a task with a smooth deterministic loss and additive noise.

    Subclasses implement ``loss``, ``grad``, ``hvp`` and, for closed-form meta
    quantities, ``_smoothed_loss`` / ``_smoothed_grad``, the expectations of
    ``f(u - alpha * eps)`` and of its gradient over the gradient noise.
    """

    convex = False

    def __init__(self, dim: int, noise: NoiseModel | None = None):
        self.dim = int(dim)
        self.noise = noise if noise is not None else NoiseModel()

    # deterministic loss --------------------------------------------------
    def loss(self, w):
        raise NotImplementedError

    def grad(self, w):
        raise NotImplementedError

    def hvp(self, w, v):
        raise NotImplementedError

    def hessian(self, w):
        w = np.asarray(w, dtype=float)
        return np.stack([self.hvp(w, e) for e in np.eye(self.dim)], axis=-1)

    # stochastic oracle -----------------------------------------------------
    def sample_datum(self, rng, size=()) -> Datum:
        return self.noise.sample(rng, self.dim, size)

    def value(self, w, theta: Datum):
        return self.loss(w) + theta.value_noise

    def gradient(self, w, theta: Datum):
        return self.grad(w) + theta.grad_noise

    def hessian_vec(self, w, theta: Datum, v):
        out = self.hvp(w, v)
        if theta.hess_noise is not None:
            out = out + np.einsum("...ij,...j->...i", theta.hess_noise, v)
        return out

    # exact meta quantities ------------------------------------------------
    def _inner_variance(self, alpha):
        """Per-coordinate variance of the inner-step perturbation ``alpha * eps``."""
        return alpha**2 * self.noise.sigma_r**2 / self.dim

    def _smoothed_loss(self, u, s2):
        raise UnsupportedSuiteError(f"{type(self).__name__} has no closed-form meta-loss")

    def _smoothed_grad(self, u, s2):
        raise UnsupportedSuiteError(f"{type(self).__name__} has no closed-form meta-gradient")

    def meta_loss(self, w, alpha):
        u = np.asarray(w, dtype=float) - alpha * self.grad(w)
        return self._smoothed_loss(u, self._inner_variance(alpha))

    def meta_grad(self, w, alpha):
        w = np.asarray(w, dtype=float)
        u = w - alpha * self.grad(w)
        gu = self._smoothed_grad(u, self._inner_variance(alpha))
        return gu - alpha * self.hvp(w, gu)

    def constants(self, center, radius) -> dict:
        raise UnsupportedSuiteError(f"{type(self).__name__} declares no constants")


class QuadraticTask(TaskOracle):
    """``f(w) = 1/2 (w - b)^T A (w - b) + c`` with symmetric PSD ``A``."""

    convex = True

    def __init__(self, A, b, c=0.0, noise=None):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        if A.shape != (b.size, b.size):
            raise ValueError(f"A has shape {A.shape}, expected {(b.size, b.size)}")
        if not np.allclose(A, A.T, rtol=0, atol=1e-12):
            raise ValueError("A must be symmetric")
        eig = np.linalg.eigvalsh(A)
        if eig[0] < -1e-12:
            raise ValueError("A must be positive semidefinite")
        super().__init__(b.size, noise)
        self.A = 0.5 * (A + A.T)
        self.b = b
        self.c = float(c)
        self.eig_min, self.eig_max = float(max(eig[0], 0.0)), float(eig[-1])

    def _quad(self, u):
        r = u - self.b
        return 0.5 * np.einsum("...i,ij,...j->...", r, self.A, r)

    def loss(self, w):
        return self._quad(np.asarray(w, dtype=float)) + self.c

    def grad(self, w):
        return (np.asarray(w, dtype=float) - self.b) @ self.A

    def hvp(self, w, v):
        return np.asarray(v, dtype=float) @ self.A

    def hessian(self, w):
        return self.A.copy()

    def _smoothed_loss(self, u, s2):
        return self._quad(u) + 0.5 * s2 * np.trace(self.A) + self.c

    def _smoothed_grad(self, u, s2):
        return (u - self.b) @ self.A

    def meta_matrix(self, alpha):
        """``(I - alpha A) A (I - alpha A)``, the Hessian of the meta-loss."""
        J = np.eye(self.dim) - alpha * self.A
        return J @ self.A @ J

    def constants(self, center, radius):
        reach = radius + float(np.linalg.norm(self.b - center))
        return dict(
            B=0.5 * self.eig_max * reach**2 + abs(self.c),
            L=self.eig_max * reach,
            M=self.eig_max,
            mu=self.eig_min,
            H=0.0,
        )


class TrigQuadraticTask(QuadraticTask):
    """Quadratic plus a sinusoidal ripple: ``+ amplitude * sum_k sin(frequency * w_k)``.

    Nonconvex once ``amplitude * frequency^2`` exceeds the smallest eigenvalue of ``A``.
    Never treated as convex, since convexity of ``f`` does not carry over to
    its meta-loss.
    """

    convex = False

    def __init__(self, A, b, c=0.0, amplitude=0.5, frequency=2.0, noise=None):
        super().__init__(A, b, c, noise)
        self.amplitude = float(amplitude)
        self.frequency = float(frequency)

    def loss(self, w):
        w = np.asarray(w, dtype=float)
        return super().loss(w) + self.amplitude * np.sin(self.frequency * w).sum(axis=-1)

    def grad(self, w):
        w = np.asarray(w, dtype=float)
        lam, om = self.amplitude, self.frequency
        return super().grad(w) + lam * om * np.cos(om * w)

    def hvp(self, w, v):
        w = np.asarray(w, dtype=float)
        lam, om = self.amplitude, self.frequency
        return super().hvp(w, v) - lam * om**2 * np.sin(om * w) * v

    def hessian(self, w):
        lam, om = self.amplitude, self.frequency
        return self.A - lam * om**2 * np.diag(np.sin(om * np.asarray(w, dtype=float)))

    def _smoothed_loss(self, u, s2):
        lam, om = self.amplitude, self.frequency
        damp = math.exp(-0.5 * om**2 * s2)
        return super()._smoothed_loss(u, s2) + lam * damp * np.sin(om * u).sum(axis=-1)

    def _smoothed_grad(self, u, s2):
        lam, om = self.amplitude, self.frequency
        damp = math.exp(-0.5 * om**2 * s2)
        return super()._smoothed_grad(u, s2) + lam * damp * om * np.cos(om * u)

    def constants(self, center, radius):
        out = super().constants(center, radius)
        lam, om, d = self.amplitude, self.frequency, self.dim
        out["B"] += lam * d
        out["L"] += lam * om * math.sqrt(d)
        out["M"] += lam * om**2
        out["mu"] = max(0.0, self.eig_min - lam * om**2)
        out["H"] = lam * om**3 * math.sqrt(d)
        return out


@dataclass(frozen=True)
class TaskSet:
    """An ordered collection of tasks sharing one parameter dimension.

    ``region`` is a bounded ball used only to evaluate the problem constants
    when ``domain`` is all of space; the iterates are not constrained to it.
    """

    tasks: tuple
    domain: FeasibleSet
    region: FeasibleSet | None = None
    stacked: StackedQuadratics | None = field(default=None, init=False, repr=False, compare=False)
    # per-task (sigma_f, sigma_r, sigma_h), shape (m, 3)
    noise_levels: np.ndarray = field(default=None, init=False, repr=False, compare=False)
    # which noise channels any task uses
    noise_used: tuple = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        tasks = tuple(self.tasks)
        if not tasks:
            raise ValueError("a task set needs at least one task")
        d = tasks[0].dim
        if any(t.dim != d for t in tasks):
            raise ValueError("all tasks must share the same dimension")
        if self.domain.dim != d:
            raise ValueError(f"domain has dimension {self.domain.dim}, tasks have {d}")
        if self.region is not None and (not self.region.bounded or self.region.dim != d):
            raise ValueError("region must be a ball of the task dimension")
        object.__setattr__(self, "tasks", tasks)
        stacked = None
        if all(isinstance(t, QuadraticTask) for t in tasks):
            stacked = StackedQuadratics(tasks)
        object.__setattr__(self, "stacked", stacked)
        levels = np.array([[t.noise.sigma_f, t.noise.sigma_r, t.noise.sigma_h] for t in tasks])
        levels.flags.writeable = False
        object.__setattr__(self, "noise_levels", levels)
        object.__setattr__(self, "noise_used", tuple(bool(x) for x in levels.max(axis=0) > 0))

    def __len__(self):
        return len(self.tasks)

    def __getitem__(self, i):
        return self.tasks[i]

    def __iter__(self):
        return iter(self.tasks)

    @property
    def m(self) -> int:
        return len(self.tasks)

    @property
    def dim(self) -> int:
        return self.tasks[0].dim

    @property
    def convex(self) -> bool:
        return all(t.convex for t in self.tasks)

    def meta_losses(self, w, alpha) -> np.ndarray:
        """Exact meta-losses of every task, shape ``(m,)`` (or ``(m, ...)`` for batched ``w``)."""
        return np.array([meta_loss_exact(t, w, alpha) for t in self.tasks])

    def meta_grads(self, w, alpha) -> np.ndarray:
        return np.array([meta_grad_exact(t, w, alpha) for t in self.tasks])


class StackedQuadratics:
    """Parameters of a quadratic-family suite stacked along a task axis.

    Evaluates the deterministic loss, gradient and Hessian-vector product for
    many tasks at once: ``idx`` has shape ``(C,)`` and ``w`` shape ``(C, D, d)``.
    Pure quadratics carry a zero ripple amplitude.
    """

    def __init__(self, tasks):
        self.A = np.stack([t.A for t in tasks])
        self.b = np.stack([t.b for t in tasks])
        self.c = np.array([t.c for t in tasks])
        self.amplitude = np.array([getattr(t, "amplitude", 0.0) for t in tasks])
        self.frequency = np.array([getattr(t, "frequency", 0.0) for t in tasks])
        self.has_ripple = bool(np.any(self.amplitude != 0))

    def select(self, idx):
        """Parameters of draws ``idx``, shaped to broadcast against ``(C, D, d)``."""
        ripple = None
        if self.has_ripple:
            ripple = (self.amplitude[idx][:, None, None], self.frequency[idx][:, None, None])
        return self.A[idx], self.b[idx][:, None, :], self.c[idx][:, None], ripple

    @staticmethod
    def loss_at(sel, w):
        A, b, c, ripple = sel
        r = w - b
        out = 0.5 * (r * (r @ A)).sum(axis=-1) + c
        if ripple is not None:
            lam, om = ripple
            out = out + (lam * np.sin(om * w)).sum(axis=-1)
        return out

    @staticmethod
    def grad_at(sel, w):
        A, b, _, ripple = sel
        out = (w - b) @ A
        if ripple is not None:
            lam, om = ripple
            out = out + lam * om * np.cos(om * w)
        return out

    @staticmethod
    def hvp_at(sel, w, v):
        A, _, _, ripple = sel
        out = v @ A
        if ripple is not None:
            lam, om = ripple
            out = out - lam * om**2 * np.sin(om * w) * v
        return out

    def loss(self, idx, w):
        return self.loss_at(self.select(idx), w)

    def grad(self, idx, w):
        return self.grad_at(self.select(idx), w)

    def hvp(self, idx, w, v):
        return self.hvp_at(self.select(idx), w, v)


def sample_pair(task: TaskOracle, rng: np.random.Generator, size=()):
    """Draw an independent ``(theta_in, theta_out)`` pair (or ``size`` of them)."""
    return task.sample_datum(rng, size), task.sample_datum(rng, size)


def meta_loss_exact(task: TaskOracle, w, alpha):
    """Expected loss after one noisy inner gradient step of size ``alpha``."""
    return task.meta_loss(w, alpha)


def meta_grad_exact(task: TaskOracle, w, alpha):
    """Gradient of :func:`meta_loss_exact` with respect to ``w``."""
    return task.meta_grad(w, alpha)


def suite_constants(tasks: TaskSet) -> ConstantsInput:
    """Constants ``B, L, M, mu, sigma, sigma_r, sigma_h, H`` valid on the domain.

    Unbounded domains need ``tasks.region``; quadratic losses have no finite
    bound or Lipschitz constant on all of space.
    """
    ball = tasks.domain if tasks.domain.bounded else tasks.region
    if ball is None:
        raise ConfigError(
            "constants need a bounded domain or an analysis region", field="domain"
        )
    per_task = [t.constants(ball.center, ball.radius) for t in tasks]
    big = {k: max(c[k] for c in per_task) for k in ("B", "L", "M", "H")}
    return ConstantsInput(
        B=big["B"],
        L=big["L"],
        M=big["M"],
        mu=min(c["mu"] for c in per_task),
        sigma=max(t.noise.sigma_f for t in tasks),
        sigma_r=max(t.noise.sigma_r for t in tasks),
        sigma_h=max(t.noise.sigma_h for t in tasks),
        H=big["H"],
        R_W=ball.radius,
        m=tasks.m,
    )


def random_spd(d, eig_min, eig_max, rng):
    """Random symmetric matrix with eigenvalues spread uniformly in ``[eig_min, eig_max]``."""
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    if d == 1:
        eig = np.array([eig_max])
    else:
        eig = np.linspace(eig_min, eig_max, d)
        rng.shuffle(eig)
    A = (q * eig) @ q.T
    return 0.5 * (A + A.T)


def _floors(c, m):
    c = np.zeros(m) if c is None else np.broadcast_to(np.asarray(c, dtype=float), (m,))
    return c


def quadratic_suite(m, d, domain, seed=0, eig_min=0.5, eig_max=2.0, offset_scale=1.0,
                    offsets=None, noise=None, region=None, c=None):
    """Random quadratic tasks with minimizers ``b_i ~ N(0, offset_scale^2 I)``.

    ``offsets`` overrides the random minimizers (shape ``(m, d)``); ``c``
    gives the loss floors (minimum values), zero by default.
    """
    rng = np.random.default_rng(seed)
    floors = _floors(c, m)
    tasks = []
    for i in range(m):
        A = random_spd(d, eig_min, eig_max, rng)
        b = offset_scale * rng.standard_normal(d) if offsets is None else offsets[i]
        tasks.append(QuadraticTask(A, b, floors[i], noise))
    return TaskSet(tuple(tasks), domain, region)


def trig_suite(m, d, domain, seed=0, eig_min=0.5, eig_max=2.0, offset_scale=1.0,
               amplitude=0.5, frequency=2.0, noise=None, region=None, c=None):
    """Random :class:`TrigQuadraticTask` suite built like :func:`quadratic_suite`."""
    rng = np.random.default_rng(seed)
    floors = _floors(c, m)
    tasks = []
    for i in range(m):
        A = random_spd(d, eig_min, eig_max, rng)
        b = offset_scale * rng.standard_normal(d)
        tasks.append(TrigQuadraticTask(A, b, floors[i], amplitude, frequency, noise))
    return TaskSet(tuple(tasks), domain, region)
