"""Shared fixtures and oracle helpers for the test suite."""
from __future__ import annotations

import numpy as np
import pytest
from scipy.optimize import minimize

from privdual import derive_constants, solve_saddle_point
from privdual.presets import benchmark_schedule, eight_agent_benchmark, two_agent_toy


@pytest.fixture(scope="session")
def benchmark():
    return eight_agent_benchmark()


@pytest.fixture(scope="session")
def benchmark_consts(benchmark):
    return derive_constants(benchmark)


@pytest.fixture(scope="session")
def toy():
    return two_agent_toy()


@pytest.fixture(scope="session")
def schedule():
    return benchmark_schedule()


@pytest.fixture(scope="session")
def benchmark_saddle(benchmark):
    sp = solve_saddle_point(benchmark)
    assert sp.converged
    return sp


def dual_projection_qp(mu: np.ndarray, radius: float) -> np.ndarray:
    """Brute-force reference for the dual projection: solve the QP
    min ||y - mu||^2 s.t. y >= 0, sum(y) <= radius with a generic solver."""
    m = mu.size
    res = minimize(
        lambda y: 0.5 * np.sum((y - mu) ** 2),
        x0=np.full(m, 0.5 * radius / m),
        jac=lambda y: y - mu,
        bounds=[(0.0, None)] * m,
        constraints=[{"type": "ineq", "fun": lambda y: radius - y.sum(),
                      "jac": lambda y: -np.ones_like(y)}],
        method="SLSQP",
        options={"ftol": 1e-12, "maxiter": 200},
    )
    assert res.success
    return res.x


def random_adjacent_pair(problem, i: int, bound: float, steps: int, rng):
    """Two state-signal arrays inside the box differing only in agent i,
    with summed 1-norm deviation at most `bound`."""
    lo, hi = problem.lo, problem.hi
    base = rng.uniform(lo, hi, size=(steps, lo.size))
    other = base.copy()
    sl = problem.agent_slice(i)
    deviation = rng.normal(size=(steps, sl.stop - sl.start))
    total = np.abs(deviation).sum()
    budget = rng.uniform(0.2, 1.0) * bound
    deviation *= budget / total
    other[:, sl] = np.clip(base[:, sl] + deviation, lo[sl], hi[sl])
    return base, other
