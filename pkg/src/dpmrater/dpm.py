"""Dirichlet-process machinery: stick-breaking weights, truncated DPM draws,
Polya-urn simulation and the closed-form DP diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import rand

__all__ = [
    "MixtureComponents",
    "TruncatedDraw",
    "stick_break",
    "sample_sticks",
    "sample_truncated_dpm",
    "polya_urn_cluster_count",
    "polya_urn_expected_clusters",
    "antoniak_expected_clusters",
    "dp_variance_check",
]


@dataclass
class MixtureComponents:
    mu: np.ndarray  # (R, q) locations
    q_var: np.ndarray  # (R, q) diagonal variances

    def __post_init__(self):
        self.mu = np.atleast_2d(np.asarray(self.mu, dtype=float))
        self.q_var = np.atleast_2d(np.asarray(self.q_var, dtype=float))
        if self.mu.shape != self.q_var.shape:
            raise ValueError("mu and q_var must have the same shape")
        if np.any(self.q_var <= 0):
            raise ValueError("component variances must be positive")


@dataclass
class TruncatedDraw:
    draws: np.ndarray  # (n,) or (n, q)
    labels: np.ndarray  # (n,) 0-based component of each draw
    components: MixtureComponents
    v: np.ndarray
    weights: np.ndarray

    @property
    def n_occupied(self) -> int:
        return int(np.unique(self.labels).size)


def stick_break(v) -> np.ndarray:
    """Mixture weights ``pi_c = v_c * prod_{l<c} (1 - v_l)``.

    The last weight is taken as the residual ``1 - sum(pi[:-1])``; any
    leftover rounding is pushed into the largest weight so the correctly
    rounded sum (``math.fsum``) is exactly 1.  ``v[-1]`` must be 1.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("v must be a non-empty vector")
    if np.any(~np.isfinite(v)) or np.any(v < 0) or np.any(v > 1):
        raise ValueError("stick proportions must lie in [0, 1]")
    if v[-1] != 1.0:
        raise ValueError("the last stick proportion must equal 1")
    remaining = np.concatenate(([1.0], np.cumprod(1.0 - v[:-1])))
    pi = v * remaining
    pi[-1] = max(0.0, 1.0 - math.fsum(pi[:-1]))
    j = int(np.argmax(pi))
    for _ in range(8):
        gap = 1.0 - math.fsum(pi)
        if gap == 0.0:
            break
        pi[j] += gap
    return pi


def sample_sticks(rng, alpha: float, R: int) -> np.ndarray:
    """Prior stick proportions ``v_c ~ Beta(1, alpha)`` with ``v_R = 1``."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if R < 1:
        raise ValueError(f"truncation level must be >= 1, got {R}")
    v = np.ones(R)
    if R > 1:
        v[:-1] = rand.beta(rng, 1.0, alpha, size=R - 1)
    return v


def sample_truncated_dpm(
    rng,
    alpha: float,
    base_sampler: Callable[[np.random.Generator, int], np.ndarray],
    R: int,
    n: int,
    component_var: float,
) -> TruncatedDraw:
    """Draw ``n`` observations from a truncated stick-breaking DPM.

    ``base_sampler(rng, R)`` returns the R component locations; every
    component shares the variance ``component_var``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not component_var > 0:
        raise ValueError("component_var must be positive")
    v = sample_sticks(rng, alpha, R)
    weights = stick_break(v)
    mu = np.asarray(base_sampler(rng, R), dtype=float).reshape(R, -1)
    q_var = np.full_like(mu, float(component_var))
    labels = rand.draw_categorical_rows(rng, np.broadcast_to(weights, (n, R)))
    draws = mu[labels] + np.sqrt(q_var[labels]) * rng.standard_normal(mu[labels].shape)
    if mu.shape[1] == 1:
        draws = draws[:, 0]
    return TruncatedDraw(draws, labels, MixtureComponents(mu, q_var), v, weights)


def uniform_base(lo: float = -6.0, hi: float = 6.0):
    """Base sampler for ``U(lo, hi)`` locations."""
    def sampler(rng, R):
        return rand.uniform(rng, lo, hi, size=R)
    return sampler


def polya_urn_cluster_count(rng, alpha: float, n: int) -> int:
    """Number of clusters after seating ``n`` customers in a Polya urn.

    Customer ``i`` (1-based) opens a new cluster with probability
    ``alpha / (alpha + i - 1)``.
    """
    i = np.arange(1, n + 1)
    return int((rng.random(n) < alpha / (alpha + i - 1)).sum())


def antoniak_expected_clusters(alpha: float, n: int) -> float:
    """Approximation ``alpha * ln((n + alpha) / alpha)`` to E[clusters]."""
    return alpha * math.log((n + alpha) / alpha)


def polya_urn_expected_clusters(alpha: float, n: int, reps: int, rng) -> tuple[float, float]:
    """Monte-Carlo mean cluster count over ``reps`` urns, and the closed form."""
    if not alpha > 0 or n < 1 or reps < 1:
        raise ValueError("need alpha > 0, n >= 1 and reps >= 1")
    i = np.arange(1, n + 1)
    p_new = alpha / (alpha + i - 1)
    counts = (rng.random((reps, n)) < p_new).sum(axis=1)
    return float(counts.mean()), antoniak_expected_clusters(alpha, n)


def dp_variance_check(alpha: float, g0_mass: float) -> float:
    """Var[G(A)] = G0(A) (1 - G0(A)) / (alpha + 1)."""
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if not 0.0 <= g0_mass <= 1.0:
        raise ValueError("g0_mass must lie in [0, 1]")
    return g0_mass * (1.0 - g0_mass) / (alpha + 1.0)
