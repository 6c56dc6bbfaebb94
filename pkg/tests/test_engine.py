import numpy as np
import pytest

from privdual import (
    AdjacentClipped,
    AgentSpec,
    Behavior,
    ConfigError,
    ConstantTarget,
    NoiseStream,
    NumericsError,
    ProblemSpec,
    QuadraticConstraintSet,
    RunState,
    Schedule,
    agent_primal_update,
    calibrate,
    cloud_compute_q,
    cloud_dual_update,
    derive_constants,
    run,
    step_sizes,
)
from privdual.projections import DualBall

LN3 = float(np.log(3.0))


def test_step_sizes_benchmark_values(schedule):
    assert step_sizes(schedule, 0) == (0.5, 0.01)
    alpha7, gamma7 = step_sizes(schedule, 7)
    assert alpha7 == pytest.approx(0.25, rel=1e-12)
    assert gamma7 == pytest.approx(0.0028717459, rel=1e-7)


def test_schedule_validation():
    with pytest.raises(ConfigError):
        Schedule(alpha_bar=0.5, c1=0.5, gamma_bar=0.01, c2=0.5)  # c1 < c2 violated
    with pytest.raises(ConfigError):
        Schedule(alpha_bar=0.5, c1=0.45, gamma_bar=0.01, c2=0.6)  # c1 + c2 >= 1
    with pytest.raises(ConfigError):
        Schedule(alpha_bar=0.0, c1=1 / 3, gamma_bar=0.01, c2=0.6)
    with pytest.raises(ConfigError):
        Schedule(alpha_bar=0.5, c1=1 / 3, gamma_bar=-0.01, c2=0.6)


def test_primal_update_fixed_point(benchmark):
    agent = benchmark.agents[1]  # target (2, 2) is interior
    out = agent_primal_update(agent, agent.target, np.zeros(2), alpha=0.0, gamma=0.01)
    np.testing.assert_array_equal(out, agent.target)


def test_primal_update_hand_arithmetic(benchmark):
    agent = benchmark.agents[0]
    out = agent_primal_update(
        agent, np.zeros(2), np.zeros(2), alpha=0.5, gamma=0.01
    )
    np.testing.assert_allclose(out, [0.06, -0.04])


def test_primal_update_projects_to_boundary(benchmark):
    agent = benchmark.agents[5]
    out = agent_primal_update(
        agent, np.array([10.0, 10.0]), np.array([-1e4, 0.0]), alpha=0.0, gamma=1.0
    )
    assert out[0] == 10.0


def test_cloud_q_zero_dual_kills_noise(benchmark, benchmark_consts):
    plan = calibrate(benchmark_consts, LN3, 3.0)
    stream = NoiseStream(5, plan.source_scales())
    state = RunState(x=np.zeros(16), reported=np.ones(16), mu=np.zeros(4))
    for i in range(8):
        np.testing.assert_array_equal(
            cloud_compute_q(benchmark, state, plan, stream, i), np.zeros(2)
        )


def test_cloud_q_deterministic_zero_at_origin(benchmark):
    state = RunState(x=np.zeros(16), reported=np.zeros(16), mu=np.ones(4))
    for i in range(8):
        np.testing.assert_array_equal(
            cloud_compute_q(benchmark, state, None, None, i), np.zeros(2)
        )


def test_cloud_q_noisy_isolates_noise_row(benchmark, benchmark_consts):
    # zero Jacobian and mu = e1 leave exactly the first noise row
    plan = calibrate(benchmark_consts, LN3, 3.0)
    stream = NoiseStream(11, plan.source_scales())
    mirror = NoiseStream(11, plan.source_scales())
    state = RunState(x=np.zeros(16), reported=np.zeros(16), mu=np.eye(4)[0])
    q = cloud_compute_q(benchmark, state, plan, stream, 2)
    expected = mirror.laplace("agent/3", (4, 2))[0]
    np.testing.assert_array_equal(q, expected)


def test_dual_update_stays_at_zero_when_feasible(benchmark, benchmark_consts):
    ball = DualBall(benchmark_consts.M_radius, 4)
    state = RunState(x=np.zeros(16), reported=np.zeros(16), mu=np.zeros(4))
    out = cloud_dual_update(benchmark, state, None, None, 0.5, 0.01, ball)
    np.testing.assert_array_equal(out, np.zeros(4))


def test_dual_update_hand_arithmetic(benchmark, benchmark_consts):
    ball = DualBall(benchmark_consts.M_radius, 4)
    x = np.zeros(16)
    x[0] = np.sqrt(3.0)  # g_1 = 2*3 - 5 = 1, all other ascent directions negative
    state = RunState(x=x, reported=x, mu=np.zeros(4))
    out = cloud_dual_update(benchmark, state, None, None, 0.7, 0.01, ball)
    np.testing.assert_allclose(out, [0.01, 0.0, 0.0, 0.0], atol=1e-15)


def test_dual_update_output_in_ball(benchmark, benchmark_consts):
    rng = np.random.default_rng(41)
    ball = DualBall(benchmark_consts.M_radius, 4)
    for _ in range(50):
        state = RunState(
            x=np.zeros(16),
            reported=rng.uniform(-10, 10, 16),
            mu=rng.uniform(0, 50, 4),
        )
        out = cloud_dual_update(benchmark, state, None, None, 0.5, 5.0, ball)
        assert np.all(out >= 0) and out.sum() <= ball.radius + 1e-9


def test_run_zero_horizon_records_initial_conditions(benchmark, schedule):
    traj = run(benchmark, schedule, None, horizon=0)
    assert len(traj) == 1
    np.testing.assert_array_equal(traj.states[0], np.zeros(16))
    np.testing.assert_array_equal(traj.duals[0], np.zeros(4))
    assert np.all(np.isnan(traj.messages[0]))
    np.testing.assert_allclose(traj.constraint_values[0], [-5, -3, -3, -5])


def test_equal_seeds_bit_identical(benchmark, benchmark_consts, schedule):
    plan = calibrate(benchmark_consts, LN3, 3.0)
    a = run(benchmark, schedule, plan, horizon=2000, seed=4, log_stride=50)
    b = run(benchmark, schedule, plan, horizon=2000, seed=4, log_stride=50)
    np.testing.assert_array_equal(a.states, b.states)
    np.testing.assert_array_equal(a.duals, b.duals)
    np.testing.assert_array_equal(a.messages[:-1], b.messages[:-1])
    c = run(benchmark, schedule, plan, horizon=2000, seed=5, log_stride=50)
    assert not np.array_equal(a.states, c.states)


def test_run_feasibility_invariants(benchmark, benchmark_consts, schedule):
    plan = calibrate(benchmark_consts, LN3, 3.0)
    traj = run(benchmark, schedule, plan, horizon=3000, seed=1, log_stride=7)
    assert np.all(traj.states >= benchmark.lo - 1e-12)
    assert np.all(traj.states <= benchmark.hi + 1e-12)
    assert np.all(traj.duals >= 0.0)
    assert np.all(traj.duals.sum(axis=1) <= benchmark_consts.M_radius + 1e-9)


def test_replaying_messages_reproduces_true_states(benchmark, benchmark_consts, schedule):
    # every agent's recorded update, including the misreporting one, must be
    # reproducible from its previous true state and the message it received
    plan = calibrate(benchmark_consts, LN3, 3.0)
    behaviors = {5: ConstantTarget(benchmark.agents[5].target)}
    traj = run(
        benchmark, schedule, plan, behaviors=behaviors, horizon=400, seed=9,
        log_stride=1,
    )
    for row in range(len(traj) - 1):
        k = int(traj.steps[row])
        alpha, gamma = step_sizes(schedule, k)
        for i, agent in enumerate(benchmark.agents):
            sl = benchmark.agent_slice(i)
            expected = agent_primal_update(
                agent, traj.states[row, sl], traj.messages[row, sl], alpha, gamma
            )
            np.testing.assert_array_equal(traj.states[row + 1, sl], expected)


def test_misreport_alters_cloud_view_not_agent_arithmetic(benchmark, schedule):
    behaviors = {5: ConstantTarget(benchmark.agents[5].target)}
    traj = run(benchmark, schedule, None, behaviors=behaviors, horizon=50, log_stride=1)
    sl = benchmark.agent_slice(5)
    # the cloud always saw the constant report, never the true state
    np.testing.assert_array_equal(
        traj.reported[:, sl], np.tile([10.0, 10.0], (len(traj), 1))
    )
    assert not np.allclose(traj.states[1:, sl], traj.reported[1:, sl])
    # everyone else reported truthfully
    others = np.ones(16, dtype=bool)
    others[sl] = False
    np.testing.assert_array_equal(traj.reported[:, others], traj.states[:, others])


def test_adjacent_clipped_budget_is_respected(benchmark, schedule):
    budget = 3.0
    behavior = AdjacentClipped(budget=budget, proposal=benchmark.agents[5].target)
    traj = run(
        benchmark, schedule, None, behaviors={5: behavior}, horizon=200, log_stride=1
    )
    sl = benchmark.agent_slice(5)
    total_dev = np.abs(traj.reported[:, sl] - traj.states[:, sl]).sum()
    assert total_dev <= budget + 1e-9
    assert behavior.spent == pytest.approx(total_dev)
    # budget exhausts immediately here, after which reports are truthful
    np.testing.assert_array_equal(traj.reported[5:, sl], traj.states[5:, sl])


def test_behavior_reset_between_runs(benchmark, schedule):
    behavior = AdjacentClipped(budget=2.0, proposal=np.array([10.0, 10.0]))
    run(benchmark, schedule, None, behaviors={5: behavior}, horizon=20)
    first_spent = behavior.spent
    run(benchmark, schedule, None, behaviors={5: behavior}, horizon=20)
    assert behavior.spent == pytest.approx(first_spent)


def test_run_rejects_bad_initial_conditions(benchmark, schedule):
    with pytest.raises(ConfigError):
        run(benchmark, schedule, None, horizon=1, x0=np.full(16, 20.0))
    with pytest.raises(NumericsError):
        run(benchmark, schedule, None, horizon=1, x0=np.full(16, np.nan))


@pytest.mark.filterwarnings("ignore:overflow", "ignore:invalid value")
def test_run_aborts_on_numeric_blowup():
    agents = (AgentSpec(index=0, lo=[-1e300], hi=[1e300], target=[1.0]),)
    cs = QuadraticConstraintSet.from_blocks(
        agent_dims=[1],
        constraints=[{"offset": -1.0, "blocks": [(0, 0, [[2.0]])]}],
        slater=[0.0],
    )
    problem = ProblemSpec(agents=agents, constraints=cs, f_lower=0.0)
    wild = Schedule(alpha_bar=0.5, c1=1 / 3, gamma_bar=1e280, c2=0.6)
    with pytest.raises(NumericsError) as err:
        run(problem, wild, None, horizon=10, x0=np.array([1e150]))
    assert err.value.step == 0


def test_truthful_behavior_instances_are_inert(benchmark, schedule):
    explicit = run(
        benchmark, schedule, None,
        behaviors={i: Behavior() for i in range(8)}, horizon=30,
    )
    implicit = run(benchmark, schedule, None, horizon=30)
    np.testing.assert_array_equal(explicit.states, implicit.states)


def test_deterministic_error_eventually_monotone(benchmark, schedule, benchmark_saddle):
    traj = run(benchmark, schedule, None, horizon=20_000, log_stride=20)
    errors = np.linalg.norm(traj.states - benchmark_saddle.x, axis=1)
    tail = errors[len(errors) // 2:]
    increases = np.sum(np.diff(tail) > 1e-12)
    assert increases <= 0.01 * tail.size
