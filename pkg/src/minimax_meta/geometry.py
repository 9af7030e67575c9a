"""Euclidean projections onto the probability simplex and onto a ball."""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

__all__ = [
    "FeasibleSet",
    "project_simplex",
    "project_ball",
    "prox_step",
    "brute_force_simplex_qp",
]

BRUTE_FORCE_MAX_SIZE = 12


@dataclass(frozen=True)
class FeasibleSet:
    """Feasible set for the model parameters.

    ``kind`` is ``"all"`` (no constraint) or ``"ball"``, the closed Euclidean
    ball of radius ``radius`` around ``center``.
    """

    kind: str
    center: np.ndarray
    radius: float | None = None

    def __post_init__(self):
        if self.kind not in ("all", "ball"):
            raise ValueError(f"unknown feasible set kind {self.kind!r}")
        center = np.asarray(self.center, dtype=float).reshape(-1)
        if not np.all(np.isfinite(center)):
            raise ValueError("feasible set center must be finite")
        object.__setattr__(self, "center", center)
        if self.kind == "ball":
            if self.radius is None or not np.isfinite(self.radius) or self.radius <= 0:
                raise ValueError("ball radius must be a positive finite number")
            object.__setattr__(self, "radius", float(self.radius))

    @classmethod
    def ball(cls, radius, center=None, dim=None):
        if center is None:
            if dim is None:
                raise ValueError("need either center or dim")
            center = np.zeros(dim)
        return cls("ball", np.asarray(center, dtype=float), radius)

    @classmethod
    def everywhere(cls, dim):
        return cls("all", np.zeros(dim))

    @property
    def dim(self) -> int:
        return self.center.size

    @property
    def bounded(self) -> bool:
        return self.kind == "ball"

    def distance(self, u) -> float:
        """Euclidean distance from ``u`` to the set."""
        if self.kind == "all":
            return 0.0
        return max(0.0, float(np.linalg.norm(np.asarray(u) - self.center)) - self.radius)

    def contains(self, u, tol=1e-10) -> bool:
        return self.distance(u) <= tol


def _as_finite_vector(x, name):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"{name} must be a 1-d vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} has non-finite entries")
    return x


def project_simplex(q, m: int | None = None) -> np.ndarray:
    """Project ``q`` onto the probability simplex.

    Sort-and-threshold: with ``u`` sorted in decreasing order, the support
    size is the largest ``k`` with ``u_k - (sum_{j<=k} u_j - 1) / k > 0``.
    The result is renormalised so it sums to one to machine precision.

    Parameters
    ----------
    q : array_like, shape (m,)
    m : int, optional
        Expected length of ``q``; checked when given.

    Returns
    -------
    ndarray, shape (m,)
    """
    q = _as_finite_vector(q, "q")
    if m is not None and m != q.size:
        raise ValueError(f"expected a vector of length {m}, got {q.size}")
    if q.size == 0:
        raise ValueError("cannot project onto an empty simplex")
    # the projection commutes with shifts along (1, ..., 1); shifting the
    # largest entry to zero avoids cancellation for huge inputs
    q = q - q.max()
    u = np.sort(q)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, q.size + 1)
    # largest valid k; k = 1 is always valid
    k = np.nonzero(u - css / ks > 0)[0][-1] + 1
    theta = css[k - 1] / k
    p = np.maximum(q - theta, 0.0)
    return p / p.sum()


def project_ball(u, feasible: FeasibleSet) -> np.ndarray:
    """Project ``u`` onto ``feasible``; the identity for an unconstrained set."""
    u = _as_finite_vector(u, "u")
    if u.size != feasible.dim:
        raise ValueError(f"dimension mismatch: {u.size} vs {feasible.dim}")
    if feasible.kind == "all":
        return u.copy()
    offset = u - feasible.center
    norm = np.linalg.norm(offset)
    if norm <= feasible.radius:
        return u.copy()
    return feasible.center + feasible.radius * (offset / norm)


def prox_step(w, g, eta: float, feasible: FeasibleSet) -> np.ndarray:
    """Projected gradient step ``Pi_W(w - eta * g)``.

    This is the prox operator of the indicator of ``W`` applied to the
    linearised objective, i.e. the constrained update of the parameters.
    """
    if not eta > 0:
        raise ValueError("step size must be positive")
    w = np.asarray(w, dtype=float)
    g = np.asarray(g, dtype=float)
    if w.shape != g.shape:
        raise ValueError(f"shape mismatch: {w.shape} vs {g.shape}")
    return project_ball(w - eta * g, feasible)


def brute_force_simplex_qp(q) -> np.ndarray:
    """Exact simplex projection by enumerating every support set.

    For each nonempty support ``S`` the equality-constrained least squares
    problem has the closed form ``p_S = q_S - (sum(q_S) - 1) / |S|``; the
    feasible candidate closest to ``q`` wins. Exponential in ``m``, meant
    only as an independent check for small problems.
    """
    q = _as_finite_vector(q, "q")
    m = q.size
    if m == 0:
        raise ValueError("cannot project onto an empty simplex")
    if m > BRUTE_FORCE_MAX_SIZE:
        raise ValueError(f"brute force limited to m <= {BRUTE_FORCE_MAX_SIZE}, got {m}")
    masks = _support_masks(m)
    sizes = masks.sum(axis=1)
    # candidate for support S: q_S shifted so it sums to one, zero elsewhere
    shift = (masks @ q - 1.0) / sizes
    cand = np.where(masks, q - shift[:, None], 0.0)
    feasible = np.all(cand >= 0, axis=1)
    dist = np.where(feasible, np.sum((cand - q) ** 2, axis=1), np.inf)
    return cand[np.argmin(dist)]


@functools.lru_cache(maxsize=None)
def _support_masks(m):
    """Boolean matrix whose rows are all nonempty subsets of ``range(m)``."""
    rows = (np.arange(1, 2**m)[:, None] >> np.arange(m) & 1).astype(bool)
    rows.setflags(write=False)
    return rows
