"""Synchronous cloud/agent iteration.

One cycle: agents report states (truthfully or not), the cloud forms the
per-agent constraint-gradient messages from the reported ensemble (noised in
private mode), each agent steps its true state with its own gradient plus the
received message under diminishing step size and damping, and the cloud steps
the dual from the latest reported ensemble. Misreporting only ever alters
what the cloud sees; a misreporting agent still applies the cloud's message
to its true state.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .errors import ConfigError, NumericsError
from .mechanism import AGENT_SOURCE, CONSTRAINT_SOURCE, NoisePlan, NoiseStream
from .problem import AgentSpec, DerivedConstants, ProblemSpec, derive_constants
from .projections import DualBall, project_box, project_dual


@dataclass(frozen=True)
class Schedule:
    """Step sizes gamma_k = gamma_bar k^-c2 and damping alpha_k = alpha_bar k^-c1.

    The exponent conditions 0 < c1 < c2 and c1 + c2 < 1 are what the
    convergence guarantee requires; construction rejects anything else.
    Evaluation shifts k by one so step 0 is defined.
    """

    alpha_bar: float
    c1: float
    gamma_bar: float
    c2: float

    def __post_init__(self):
        if not (self.alpha_bar > 0 and self.gamma_bar > 0):
            raise ConfigError("schedule: alpha_bar and gamma_bar must be positive")
        if not (0 < self.c1 < self.c2):
            raise ConfigError("schedule: need 0 < c1 < c2")
        if not self.c1 + self.c2 < 1:
            raise ConfigError("schedule: need c1 + c2 < 1")


def step_sizes(sched: Schedule, k: int) -> tuple[float, float]:
    """(alpha_k, gamma_k) at iteration k >= 0."""
    if k < 0:
        raise ValueError("iteration index must be nonnegative")
    kk = float(k + 1)
    return sched.alpha_bar * kk ** (-sched.c1), sched.gamma_bar * kk ** (-sched.c2)


class Behavior:
    """Truthful reporting. Subclasses override report()."""

    def reset(self) -> None:
        pass

    def report(self, true_state: np.ndarray, step: int) -> np.ndarray:
        return true_state


Truthful = Behavior


class ConstantTarget(Behavior):
    """Report a fixed vector (typically the agent's unconstrained minimizer)
    at every step, regardless of the true state."""

    def __init__(self, value):
        self.value = np.asarray(value, dtype=float)

    def report(self, true_state: np.ndarray, step: int) -> np.ndarray:
        if self.value.shape != true_state.shape:
            raise ValueError("constant report has wrong dimension")
        return self.value


class AdjacentClipped(Behavior):
    """Arbitrary misreport clipped to a cumulative 1-norm deviation budget.

    Each step the proposed report's deviation from the true state is scaled
    down, if necessary, so the total 1-norm deviation over the whole run
    never exceeds the budget; once the budget is spent, reports are truthful.
    """

    def __init__(self, budget: float, proposal):
        if budget <= 0:
            raise ConfigError("deviation budget must be positive")
        self.budget = float(budget)
        self._proposal = proposal if callable(proposal) else (
            lambda true_state, step, _v=np.asarray(proposal, dtype=float): _v
        )
        self._spent = 0.0

    def reset(self) -> None:
        self._spent = 0.0

    @property
    def spent(self) -> float:
        return self._spent

    def report(self, true_state: np.ndarray, step: int) -> np.ndarray:
        remaining = max(self.budget - self._spent, 0.0)
        if remaining == 0.0:
            return true_state
        deviation = np.asarray(self._proposal(true_state, step), dtype=float) - true_state
        magnitude = float(np.abs(deviation).sum())
        if magnitude > remaining:
            deviation = deviation * (remaining / magnitude)
            magnitude = remaining
        self._spent += magnitude
        return true_state + deviation


@dataclass
class RunState:
    """Mutable per-cycle state: true ensemble x, reported ensemble, dual, k."""

    x: np.ndarray
    reported: np.ndarray
    mu: np.ndarray
    k: int = 0


@dataclass(frozen=True)
class Trajectory:
    """Time-indexed record of a run, decimated to every log_stride-th step.

    Row for step k holds the true state x(k), the reported state the cloud
    held at the start of cycle k, the dual mu(k), the messages sent during
    cycle k (NaN on the final row, where no cycle runs), per-agent costs at
    the true state, and the constraint values at the reported state.
    """

    steps: np.ndarray
    states: np.ndarray
    reported: np.ndarray
    duals: np.ndarray
    messages: np.ndarray
    costs: np.ndarray
    constraint_values: np.ndarray
    agent_dims: tuple[int, ...]
    horizon: int
    log_stride: int
    seed: int | None
    mode: str

    def __len__(self) -> int:
        return int(self.steps.size)

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def final_dual(self) -> np.ndarray:
        return self.duals[-1]


def cloud_compute_q(
    problem: ProblemSpec,
    state: RunState,
    plan: NoisePlan | None,
    stream: NoiseStream | None,
    i: int,
) -> np.ndarray:
    """Message for agent i from the reported ensemble and current dual.

    Deterministic mode multiplies the exact Jacobian block by the dual;
    private mode perturbs the block with fresh Laplace noise first.
    """
    block = problem.constraints.jacobian_block(state.reported, i)
    if plan is not None:
        noise = stream.laplace(
            AGENT_SOURCE.format(i + 1), block.shape, float(plan.agent_scales[i])
        )
        block = block + noise
    return block.T @ state.mu


def agent_primal_update(
    agent: AgentSpec, x_i: np.ndarray, q_i: np.ndarray, alpha: float, gamma: float
) -> np.ndarray:
    """One damped projected-gradient step on the agent's own state."""
    raw = x_i - gamma * (agent.objective_gradient(x_i) + q_i + alpha * x_i)
    return project_box(raw, agent.lo, agent.hi)


def cloud_dual_update(
    problem: ProblemSpec,
    state: RunState,
    plan: NoisePlan | None,
    stream: NoiseStream | None,
    alpha: float,
    gamma: float,
    ball: DualBall,
) -> np.ndarray:
    """Damped projected dual ascent from the latest reported ensemble."""
    ascent = problem.constraints.evaluate(state.reported)
    if plan is not None:
        ascent = ascent + stream.laplace(
            CONSTRAINT_SOURCE, ascent.shape, plan.constraint_scale
        )
    return project_dual(state.mu + gamma * (ascent - alpha * state.mu), ball)


def _normalize_behaviors(
    behaviors, num_agents: int
) -> dict[int, Behavior]:
    if behaviors is None:
        return {}
    if isinstance(behaviors, Mapping):
        items = behaviors.items()
    else:
        if len(behaviors) != num_agents:
            raise ConfigError("behavior list length must equal the number of agents")
        items = enumerate(behaviors)
    out = {}
    for i, b in items:
        i = int(i)
        if not 0 <= i < num_agents:
            raise ConfigError(f"behavior assigned to unknown agent index {i}")
        if b is None:
            continue
        if not isinstance(b, Behavior):
            raise ConfigError("behaviors must be Behavior instances")
        if type(b) is Behavior:
            continue  # truthful, nothing to track
        out[i] = b
    return out


def run(
    problem: ProblemSpec,
    schedule: Schedule,
    plan: NoisePlan | None,
    behaviors=None,
    horizon: int = 0,
    seed: int | None = 0,
    x0: np.ndarray | None = None,
    mu0: np.ndarray | None = None,
    log_stride: int = 1,
    constants: DerivedConstants | None = None,
    stream: NoiseStream | None = None,
) -> Trajectory:
    """Execute `horizon` communication cycles and record the trajectory.

    plan=None runs the noise-free iteration; otherwise fresh Laplace noise is
    drawn every cycle from per-source substreams of a stream seeded by
    `seed`, so equal seeds give bit-identical trajectories. x0 defaults to
    the box centers and mu0 to zero.
    """
    if horizon < 0:
        raise ConfigError("horizon must be nonnegative")
    if log_stride < 1:
        raise ConfigError("log stride must be at least 1")
    n, m, num_agents = problem.dim, problem.num_constraints, problem.num_agents
    consts = constants if constants is not None else derive_constants(problem)
    ball = DualBall(consts.M_radius, m)
    lo, hi = problem.lo, problem.hi

    x = problem.box_centers() if x0 is None else np.asarray(x0, dtype=float).copy()
    mu = np.zeros(m) if mu0 is None else np.asarray(mu0, dtype=float).copy()
    if x.shape != (n,) or mu.shape != (m,):
        raise ConfigError("initial state dimensions do not match the problem")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(mu))):
        raise NumericsError("non-finite initial state", step=0)
    if np.any(x < lo - 1e-12) or np.any(x > hi + 1e-12):
        raise ConfigError("initial state is outside the box")
    mu = project_dual(mu, ball)

    active = _normalize_behaviors(behaviors, num_agents)
    for b in active.values():
        b.reset()
    slices = [problem.agent_slice(i) for i in range(num_agents)]

    mode = "deterministic" if plan is None else "noisy"
    if plan is not None and stream is None:
        if seed is None:
            raise ConfigError("noisy mode requires a seed or an explicit stream")
        stream = NoiseStream(seed, plan.source_scales())
    agent_noise = None
    constraint_noise = None
    if plan is not None:
        agent_noise = [
            stream.laplace_sampler(
                AGENT_SOURCE.format(i + 1), (m, problem.agents[i].dim),
                float(plan.agent_scales[i]),
            )
            for i in range(num_agents)
        ]
        constraint_noise = stream.laplace_sampler(
            CONSTRAINT_SOURCE, (m,), plan.constraint_scale
        )

    all_target_form = all(a.target is not None for a in problem.agents)
    if all_target_form:
        t_all = np.concatenate([a.target for a in problem.agents])

    def gradient(state: np.ndarray) -> np.ndarray:
        if all_target_form:
            return state - t_all
        return problem.objective_gradient(state)

    def make_report(true_state: np.ndarray, step: int) -> np.ndarray:
        if not active:
            return true_state
        rep = true_state.copy()
        for i, b in active.items():
            rep[slices[i]] = b.report(true_state[slices[i]], step)
        return rep

    rows_steps: list[int] = []
    rows_x: list[np.ndarray] = []
    rows_rep: list[np.ndarray] = []
    rows_mu: list[np.ndarray] = []
    rows_q: list[np.ndarray] = []
    rows_cost: list[np.ndarray] = []
    rows_g: list[np.ndarray] = []

    def record(k: int, xv, repv, muv, qv, gv):
        rows_steps.append(k)
        rows_x.append(xv.copy())
        rows_rep.append(repv.copy())
        rows_mu.append(muv.copy())
        rows_q.append(qv.copy())
        rows_cost.append(problem.agent_costs(xv))
        rows_g.append(gv.copy())

    reported = make_report(x, 0)
    g_current = problem.constraints.evaluate(reported)
    W = np.zeros((m, n)) if plan is not None else None

    for k in range(horizon):
        alpha, gamma = step_sizes(schedule, k)
        jac = problem.constraints.jacobian(reported)
        if plan is not None:
            for i in range(num_agents):
                W[:, slices[i]] = agent_noise[i]()
            q = (jac + W).T @ mu
        else:
            q = jac.T @ mu
        if k % log_stride == 0:
            record(k, x, reported, mu, q, g_current)

        x_new = np.clip(x - gamma * (gradient(x) + q + alpha * x), lo, hi)
        reported_new = make_report(x_new, k + 1)
        g_new = problem.constraints.evaluate(reported_new)
        dual_drive = g_new if plan is None else g_new + constraint_noise()
        dual_raw = mu + gamma * (dual_drive - alpha * mu)
        if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(dual_raw))):
            raise NumericsError(f"non-finite state at step {k}", step=k)
        mu = project_dual(dual_raw, ball)
        x, reported, g_current = x_new, reported_new, g_new

    record(horizon, x, reported, mu, np.full(n, np.nan), g_current)

    return Trajectory(
        steps=np.array(rows_steps, dtype=int),
        states=np.array(rows_x),
        reported=np.array(rows_rep),
        duals=np.array(rows_mu),
        messages=np.array(rows_q),
        costs=np.array(rows_cost),
        constraint_values=np.array(rows_g),
        agent_dims=problem.constraints.agent_dims,
        horizon=horizon,
        log_stride=log_stride,
        seed=seed,
        mode=mode,
    )
