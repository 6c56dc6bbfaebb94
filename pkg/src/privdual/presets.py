"""Bundled problems: the 8-agent benchmark and a hand-solvable 2-agent toy."""
from __future__ import annotations

import numpy as np

from .engine import Schedule
from .problem import AgentSpec, ProblemSpec, QuadraticConstraintSet

BENCHMARK_TARGETS = (
    (6.0, -4.0),
    (2.0, 2.0),
    (-7.0, 7.0),
    (8.0, -9.0),
    (3.0, -7.0),
    (10.0, 10.0),
    (-10.0, -10.0),
    (6.0, -6.0),
)

# (squared-distance pairs, offset), agents 0-based
BENCHMARK_CONSTRAINTS = (
    (((0, 1), (0, 2)), -5.0),
    (((3, 4), (3, 5)), -3.0),
    (((6, 7), (6, 5)), -3.0),
    (((4, 2), (4, 6)), -5.0),
)

BENCHMARK_EPSILON = float(np.log(3.0))
BENCHMARK_ADJACENCY_BOUND = 3.0


def eight_agent_benchmark() -> ProblemSpec:
    """Eight planar agents in [-10, 10]^2 with quadratic pull toward fixed
    targets, coupled by four pairwise squared-distance budget constraints.
    The origin is strictly feasible and serves as the Slater point."""
    agents = tuple(
        AgentSpec(index=i, lo=[-10.0, -10.0], hi=[10.0, 10.0], target=list(t))
        for i, t in enumerate(BENCHMARK_TARGETS)
    )
    constraints = QuadraticConstraintSet.from_blocks(
        agent_dims=[2] * 8,
        constraints=[
            {"offset": off, "squared_distances": list(pairs)}
            for pairs, off in BENCHMARK_CONSTRAINTS
        ],
        slater=np.zeros(16),
    )
    return ProblemSpec(agents=agents, constraints=constraints)


def benchmark_schedule() -> Schedule:
    """gamma_k = 0.01 k^(-3/5), alpha_k = 0.5 k^(-1/3)."""
    return Schedule(alpha_bar=0.5, c1=1.0 / 3.0, gamma_bar=0.01, c2=3.0 / 5.0)


def two_agent_toy() -> ProblemSpec:
    """Two scalar agents, f_i = 0.5 (x_i - 1)^2 on [-2, 2], coupled by
    x_1 + x_2 <= 1. Optimality conditions solve by hand to
    x = (1/2, 1/2) with multiplier 1/2."""
    agents = (
        AgentSpec(index=0, lo=[-2.0], hi=[2.0], target=[1.0]),
        AgentSpec(index=1, lo=[-2.0], hi=[2.0], target=[1.0]),
    )
    constraints = QuadraticConstraintSet.from_blocks(
        agent_dims=[1, 1],
        constraints=[{"offset": -1.0, "linear": {0: [1.0], 1: [1.0]}}],
        slater=np.zeros(2),
    )
    return ProblemSpec(agents=agents, constraints=constraints)
