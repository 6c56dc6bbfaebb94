"""Euclidean projections onto the primal boxes and the dual ball."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class DualBall:
    """M = {mu >= 0 : ||mu||_1 <= radius}, the set the duals live in."""

    radius: float
    dim: int

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("dual-ball radius must be positive")
        if self.dim < 1:
            raise ValueError("dual dimension must be at least 1")


def project_box(x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Coordinatewise clamp onto [lo, hi]."""
    x = np.asarray(x, dtype=float)
    if x.shape != np.shape(lo) or x.shape != np.shape(hi):
        raise ValueError("box projection: dimension mismatch")
    return np.clip(x, lo, hi)


def project_dual(mu: np.ndarray, ball: DualBall) -> np.ndarray:
    """Exact Euclidean projection onto {mu >= 0, ||mu||_1 <= R}.

    Clip negatives first; if the 1-norm still exceeds R, subtract the unique
    soft threshold tau > 0 that lands the clipped vector on the budget
    (found by sort-and-scan, the standard simplex-projection device).
    """
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (ball.dim,):
        raise ValueError(f"expected dual vector of length {ball.dim}")
    if not np.all(np.isfinite(mu)):
        raise ValueError("non-finite dual vector passed to projection")
    clipped = np.maximum(mu, 0.0)
    total = clipped.sum()
    if total <= ball.radius:
        return clipped
    u = np.sort(clipped)[::-1]
    cumulative = np.cumsum(u)
    counts = np.arange(1, u.size + 1)
    positive = u - (cumulative - ball.radius) / counts > 0
    rho = counts[positive][-1]
    tau = (cumulative[rho - 1] - ball.radius) / rho
    return np.maximum(clipped - tau, 0.0)
