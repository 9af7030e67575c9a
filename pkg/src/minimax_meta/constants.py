"""Problem constants of the meta-objective and the step-size bounds built from them.

All functions here are closed-form formulas of the per-task constants
(bound ``B``, Lipschitz ``L``, smoothness ``M``, strong convexity ``mu``,
noise levels ``sigma``, ``sigma_r``, ``sigma_h`` and Hessian Lipschitz ``H``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

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
]


@dataclass(frozen=True)
class ConstantsInput:
    """Per-task constants valid over the feasible set, plus run sizes.

    ``alpha``, ``C`` and ``D`` are run parameters; :func:`dataclasses.replace`
    fills them in on the output of :func:`minimax_meta.tasks.suite_constants`.
    """

    B: float
    L: float
    M: float
    mu: float
    sigma: float
    sigma_r: float
    sigma_h: float
    H: float
    R_W: float
    m: int
    alpha: float = 0.0
    C: int = 1
    D: int = 1

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value):
                raise ValueError(f"constant {f.name} must be finite, got {value}")
            if f.name != "alpha" and value < 0:
                raise ValueError(f"constant {f.name} must be nonnegative, got {value}")
        if self.m < 1 or self.C < 1 or self.D < 1:
            raise ValueError("m, C and D must be at least 1")


@dataclass(frozen=True)
class ConstantsReport:
    """Derived constants of the meta-objective.

    ``mu_tilde`` is ``None`` when the strong convexity bound does not apply
    (``alpha * M >= 1``); a value ``<= 0`` means it applies but certifies
    nothing.
    """

    L_tilde: float
    M_tilde: float
    mu_tilde: float | None
    sigma_w2: float
    sigma_p2: float
    G_w2: float
    G_p2: float

    @property
    def G_w(self) -> float:
        return math.sqrt(self.G_w2)

    @property
    def G_p(self) -> float:
        return math.sqrt(self.G_p2)

    @property
    def strongly_convex(self) -> bool:
        return self.mu_tilde is not None and self.mu_tilde > 0


def lipschitz_meta(L, M, sigma_h, alpha):
    """Lipschitz constant of every meta-loss: ``L (1 + alpha M + alpha sigma_h)``."""
    return L * (1.0 + alpha * M + alpha * sigma_h)


def smoothness_meta(M, L, H, alpha):
    """Gradient Lipschitz constant of every meta-loss: ``M (1 + alpha M)^2 + alpha L H``."""
    return M * (1.0 + alpha * M) ** 2 + alpha * L * H


def strong_convexity_meta(mu, M, L, H, alpha):
    """Strong convexity modulus ``mu (1 - alpha M)^2 - alpha L H`` of every meta-loss.

    Only meaningful for ``alpha < 1 / M``; returns ``None`` otherwise.
    """
    if alpha * M >= 1.0:
        return None
    return mu * (1.0 - alpha * M) ** 2 - alpha * L * H


def variance_bounds(ci: ConstantsInput, L_tilde):
    """Variance bounds ``(sigma_w2, sigma_p2)`` of the two stochastic gradients.

    ``sigma_w2 = (m-1)/C Lt^2 + m^2/(C D) (1 + alpha M)^2 (L^2 + sigma_r^2)``
    and ``sigma_p2 = m^2 sigma^2 / (C D)``.
    """
    m, C, D = ci.m, ci.C, ci.D
    sigma_w2 = (m - 1) / C * L_tilde**2 + m**2 / (C * D) * (1.0 + ci.alpha * ci.M) ** 2 * (
        ci.L**2 + ci.sigma_r**2
    )
    sigma_p2 = m**2 * ci.sigma**2 / (C * D)
    return sigma_w2, sigma_p2


def second_moment_bounds(L_tilde, sigma_w2, B, m, sigma_p2):
    """Second-moment bounds ``(Lt^2 + sigma_w2, m B^2 + sigma_p2)``."""
    return L_tilde**2 + sigma_w2, m * B**2 + sigma_p2


def sampling_aware_p_bounds(ci: ConstantsInput):
    """Bounds on ``E|g_p_hat - g_p|^2`` and ``E|g_p_hat|^2`` that include task sampling.

    Uniform task sampling with replacement makes entry ``i`` of the p-gradient
    a scaled count ``(m/C) c_i`` times a data average, which adds
    ``(m-1)/C * F_i^2`` per task on top of the data noise. Evaluating the loss
    at a point moved by a noisy inner step adds ``(alpha L sigma_r)^2`` to the
    per-sample variance. Returns ``(variance_bound, second_moment_bound)``.
    """
    m, C, D = ci.m, ci.C, ci.D
    per_sample = ci.sigma**2 + (ci.alpha * ci.L * ci.sigma_r) ** 2
    var = m**2 * per_sample / (C * D) + m * (m - 1) / C * ci.B**2
    return var, var + m * ci.B**2


def constants_report(ci: ConstantsInput) -> ConstantsReport:
    """Evaluate every derived constant for one set of inputs."""
    L_tilde = lipschitz_meta(ci.L, ci.M, ci.sigma_h, ci.alpha)
    M_tilde = smoothness_meta(ci.M, ci.L, ci.H, ci.alpha)
    mu_tilde = strong_convexity_meta(ci.mu, ci.M, ci.L, ci.H, ci.alpha)
    sigma_w2, sigma_p2 = variance_bounds(ci, L_tilde)
    G_w2, G_p2 = second_moment_bounds(L_tilde, sigma_w2, ci.B, ci.m, sigma_p2)
    return ConstantsReport(L_tilde, M_tilde, mu_tilde, sigma_w2, sigma_p2, G_w2, G_p2)


# rate bounds ---------------------------------------------------------------


def convex_gap_bound(R_W, G_w, G_p, T):
    """Expected duality gap bound ``(3 R_W G_w + 3 G_p) / sqrt(T)`` of the averaged iterates."""
    return (3.0 * R_W * G_w + 3.0 * G_p) / math.sqrt(T)


def constant_step_bounds(phi_init, B, m, G_p, M_tilde, sigma_w2, eta_w, eta_p, T,
                         constrained=False):
    """Bounds for constant step sizes with ``eta_w < 2 / M_tilde``.

    Returns ``(grad_sq_bound, p_gap_bound)``: the expected squared gradient
    norm at a uniformly drawn iterate and the expected shortfall of
    ``phi(w, p)`` from its maximum over ``p``. With ``constrained`` the
    variance term is not damped by ``eta_w``.
    """
    if not 0 < eta_w < 2.0 / M_tilde:
        raise ValueError("need 0 < eta_w < 2 / M_tilde")
    denom = 2.0 * eta_w - eta_w**2 * M_tilde
    var_term = sigma_w2 / (2.0 - eta_w * M_tilde)
    if not constrained:
        var_term *= eta_w * M_tilde
    grad = (2.0 * (phi_init + B) / (T * denom)
            + 4.0 * eta_p * math.sqrt(m) * B * G_p / denom
            + var_term)
    p_gap = 1.0 / (eta_p * T) + eta_p * G_p**2 / 2.0
    return grad, p_gap


def unconstrained_rate_bounds(phi_init, B, m, G_p, M_tilde, sigma_w2, beta, T):
    """Bounds under ``eta_w = T^-beta`` and ``eta_p = T^(-2 beta) / (sqrt(2) G_p)``.

    Returns ``(grad_sq_bound, p_gap_bound)``; requires ``T^beta > M_tilde / 2``.
    """
    slack = T**beta - M_tilde / 2.0
    if slack <= 0:
        raise ValueError("bound requires T^beta > M_tilde / 2")
    grad = (phi_init + B + math.sqrt(2.0 * m) * B + 2.0 * M_tilde * sigma_w2) / slack
    p_gap = math.sqrt(2.0) * G_p / T ** min(2.0 * beta, 1.0 - 2.0 * beta)
    return grad, p_gap


def constrained_rate_bounds(phi_init, B, m, G_p, M_tilde, sigma_w2_unit, beta, T):
    """Bounds with ``eta_w = 1/(2 M_tilde)`` and task batch ``C = T^beta``.

    ``sigma_w2_unit`` is the w-variance bound at ``C = 1`` (it scales as ``1/C``).
    Returns ``(proj_grad_sq_bound, p_gap_bound)``.
    """
    grad = (8.0 * M_tilde * (phi_init + B) / (3.0 * T)
            + (8.0 * M_tilde * B * math.sqrt(m) + 4.0 * sigma_w2_unit) / (3.0 * T**beta))
    p_gap = G_p / (math.sqrt(2.0) * T ** min(beta, 1.0 - beta))
    return grad, p_gap
