"""Reference saddle point, error metrics, and misreport-incentive bounds."""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .engine import Schedule, Trajectory, step_sizes
from .errors import ConfigError
from .problem import (
    AgentSpec,
    DerivedConstants,
    ProblemSpec,
    QuadraticConstraintSet,
    derive_constants,
    eval_objective,
)
from .projections import DualBall, project_box, project_dual


@dataclass(frozen=True)
class SaddlePoint:
    """Reference primal/dual pair with its fixed-point residual.

    residual is ||z - T(z)||_2 / gamma_ref for the undamped projected
    update map T at reference step gamma_ref; it vanishes exactly at a
    saddle point.
    """

    x: np.ndarray
    mu: np.ndarray
    residual: float
    converged: bool
    iterations: int
    polished: bool = False


@dataclass(frozen=True)
class BetaBound:
    """Per-agent misreport-gain bounds beta_i = 2 max_j rho_j + eps * lambda_i."""

    epsilon: float
    lambdas: np.ndarray
    rhos: np.ndarray
    max_rho: float
    betas: np.ndarray


def lagrangian(problem: ProblemSpec, x: np.ndarray, mu: np.ndarray) -> float:
    return problem.objective(x) + float(mu @ problem.constraints.evaluate(x))


def fixed_point_residual(
    problem: ProblemSpec, x: np.ndarray, mu: np.ndarray, ball: DualBall,
    gamma_ref: float = 0.01,
) -> float:
    grad = problem.objective_gradient(x) + problem.constraints.jacobian(x).T @ mu
    rx = x - project_box(x - gamma_ref * grad, problem.lo, problem.hi)
    rmu = mu - project_dual(mu + gamma_ref * problem.constraints.evaluate(x), ball)
    return float(np.sqrt(rx @ rx + rmu @ rmu)) / gamma_ref


def _kkt_refine(problem: ProblemSpec, x0, mu0, ball: DualBall, tol: float = 1e-10):
    """Active-set Newton refinement of a near-saddle iterate.

    Needs second derivatives, so it only applies to quadratic constraint
    sets. Returns (x, mu, ok); ok is False whenever any optimality or sign
    condition cannot be verified, in which case callers keep the raw iterate.
    """
    cs = problem.constraints
    if not isinstance(cs, QuadraticConstraintSet):
        return x0, mu0, False
    n, m = problem.dim, problem.num_constraints
    lo, hi = problem.lo, problem.hi
    Hf = np.zeros((n, n))
    for i, a in enumerate(problem.agents):
        sl = problem.agent_slice(i)
        Hf[sl, sl] = np.eye(a.dim) if a.target is not None else a.objective.P

    x = np.clip(np.asarray(x0, dtype=float).copy(), lo, hi)
    mu = np.maximum(np.asarray(mu0, dtype=float).copy(), 0.0)
    active = (mu > 1e-8) | (cs.evaluate(x) > -1e-6)
    at_lo = np.abs(x - lo) < 1e-9
    at_hi = np.abs(x - hi) < 1e-9

    for _outer in range(12):
        free = ~(at_lo | at_hi)
        x[at_lo], x[at_hi] = lo[at_lo], hi[at_hi]
        mu[~active] = 0.0
        A = np.flatnonzero(active)
        try:
            for _inner in range(50):
                jac = cs.jacobian(x)
                grad_l = problem.objective_gradient(x) + jac.T @ mu
                r1 = grad_l[free]
                r2 = cs.evaluate(x)[A]
                if max(np.abs(r1).max(initial=0.0), np.abs(r2).max(initial=0.0)) < 1e-12:
                    break
                H = Hf + cs.hessian_combination(mu)
                Hff = H[np.ix_(free, free)]
                JAf = jac[np.ix_(A, free)]
                top = np.hstack([Hff, JAf.T])
                bottom = np.hstack([JAf, np.zeros((A.size, A.size))])
                sol = np.linalg.solve(
                    np.vstack([top, bottom]), -np.concatenate([r1, r2])
                )
                x[free] += sol[: int(free.sum())]
                mu[A] += sol[int(free.sum()):]
        except np.linalg.LinAlgError:
            return x0, mu0, False

        changed = False
        g_all = cs.evaluate(x)
        newly_active = (~active) & (g_all > 1e-9)
        if newly_active.any():
            active = active | newly_active
            changed = True
        negative = active & (mu < -1e-9)
        if negative.any():
            active = active & ~negative
            changed = True
        out_lo = free & (x < lo - 1e-12)
        out_hi = free & (x > hi + 1e-12)
        if out_lo.any() or out_hi.any():
            at_lo, at_hi = at_lo | out_lo, at_hi | out_hi
            changed = True
        grad_l = problem.objective_gradient(x) + cs.jacobian(x).T @ mu
        release_lo = at_lo & (grad_l < -1e-9)   # pull is inward, clamp is wrong
        release_hi = at_hi & (grad_l > 1e-9)
        if release_lo.any() or release_hi.any():
            at_lo, at_hi = at_lo & ~release_lo, at_hi & ~release_hi
            changed = True
        if not changed:
            break
    else:
        return x0, mu0, False

    mu = np.maximum(mu, 0.0)
    x = np.clip(x, lo, hi)
    g_all = cs.evaluate(x)
    grad_l = problem.objective_gradient(x) + cs.jacobian(x).T @ mu
    free = ~(at_lo | at_hi)
    ok = (
        np.abs(grad_l[free]).max(initial=0.0) < tol
        and np.abs(g_all[active]).max(initial=0.0) < tol
        and bool(np.all(g_all[~active] <= 1e-9))
        and bool(np.all(grad_l[at_hi] <= 1e-9))
        and bool(np.all(grad_l[at_lo] >= -1e-9))
        and mu.sum() <= ball.radius + 1e-6
    )
    return x, mu, bool(ok)


def solve_saddle_point(
    problem: ProblemSpec,
    tolerance: float = 1e-8,
    schedule: Schedule | None = None,
    max_iter: int = 2_000_000,
    polish: bool = True,
    constants: DerivedConstants | None = None,
) -> SaddlePoint:
    """Reference saddle point for a problem.

    Runs the noise-free truthful iteration under the bundled benchmark
    schedule until the per-step movement ||z(k+1) - z(k)||_2 / gamma_k drops
    below `tolerance` or `max_iter` is hit. The damping biases any finite
    iterate away from the true saddle point by O(alpha_k), far above the
    advertised residual, so by default the iterate is refined by an
    active-set Newton solve of the optimality system, attempted at
    geometrically spaced checkpoints; the first verified refinement is
    returned. Without a verified refinement the final iterate is returned,
    flagged non-converged unless the movement tolerance was met.
    """
    if schedule is None:
        from .presets import benchmark_schedule

        schedule = benchmark_schedule()
    consts = constants if constants is not None else derive_constants(problem)
    ball = DualBall(consts.M_radius, problem.num_constraints)
    lo, hi = problem.lo, problem.hi
    cs = problem.constraints

    x = problem.box_centers()
    mu = np.zeros(problem.num_constraints)
    check_at = 2_000
    hit_tolerance = False
    k = 0
    while k < max_iter:
        alpha, gamma = step_sizes(schedule, k)
        grad = problem.objective_gradient(x) + cs.jacobian(x).T @ mu
        x_new = np.clip(x - gamma * (grad + alpha * x), lo, hi)
        mu_new = project_dual(mu + gamma * (cs.evaluate(x_new) - alpha * mu), ball)
        movement = np.sqrt(
            float((x_new - x) @ (x_new - x)) + float((mu_new - mu) @ (mu_new - mu))
        )
        x, mu = x_new, mu_new
        k += 1
        if movement / gamma < tolerance:
            hit_tolerance = True
            break
        if polish and k >= check_at:
            check_at *= 2
            xp, mup, ok = _kkt_refine(problem, x, mu, ball)
            if ok:
                return SaddlePoint(
                    x=xp, mu=mup,
                    residual=fixed_point_residual(problem, xp, mup, ball),
                    converged=True, iterations=k, polished=True,
                )

    if polish:
        xp, mup, ok = _kkt_refine(problem, x, mu, ball)
        if ok:
            return SaddlePoint(
                x=xp, mu=mup,
                residual=fixed_point_residual(problem, xp, mup, ball),
                converged=True, iterations=k, polished=True,
            )
    return SaddlePoint(
        x=x, mu=mu,
        residual=fixed_point_residual(problem, x, mu, ball),
        converged=hit_tolerance, iterations=k, polished=False,
    )


def save_saddle_point(sp: SaddlePoint, path) -> None:
    payload = {
        "x": sp.x.tolist(),
        "mu": sp.mu.tolist(),
        "residual": sp.residual,
        "converged": sp.converged,
        "iterations": sp.iterations,
        "polished": sp.polished,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_saddle_point(path) -> SaddlePoint:
    payload = json.loads(Path(path).read_text())
    return SaddlePoint(
        x=np.asarray(payload["x"], dtype=float),
        mu=np.asarray(payload["mu"], dtype=float),
        residual=float(payload["residual"]),
        converged=bool(payload["converged"]),
        iterations=int(payload["iterations"]),
        polished=bool(payload.get("polished", False)),
    )


def lambda_bound(agent: AgentSpec, consts: DerivedConstants, slater_i) -> float:
    """Upper bound on f_i over the box: f_i at the strictly feasible point
    plus Lipschitz constant times diameter."""
    return eval_objective(agent, slater_i) + float(
        consts.K[agent.index] * consts.D[agent.index]
    )


def rho_bound(agent: AgentSpec, consts: DerivedConstants, lambda_i: float) -> float:
    """Bound on |f_i(a) - f_i(b)| over the box: min(K_i D_i, 2 lambda_i)."""
    return float(min(consts.K[agent.index] * consts.D[agent.index], 2.0 * lambda_i))


def beta_bound(
    problem: ProblemSpec, epsilon: float, constants: DerivedConstants | None = None
) -> BetaBound:
    """Per-agent misreport-gain bounds at privacy level epsilon.

    The underlying inequality is proved for epsilon in (0, 1); larger values
    are accepted with a warning since e^eps <= 1 + 2 eps still holds a bit
    beyond 1 and common deployments use epsilon up to ln 3.
    """
    if epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    if epsilon >= 1:
        warnings.warn(
            f"epsilon = {epsilon:.4f} is outside (0, 1); the gain bound's "
            "hypothesis is stretched, values are reported as-is",
            stacklevel=2,
        )
    consts = constants if constants is not None else derive_constants(problem)
    slater = problem.constraints.slater
    lambdas = np.array(
        [
            lambda_bound(a, consts, slater[problem.agent_slice(i)])
            for i, a in enumerate(problem.agents)
        ]
    )
    rhos = np.array(
        [rho_bound(a, consts, lambdas[i]) for i, a in enumerate(problem.agents)]
    )
    max_rho = float(rhos.max())
    betas = 2.0 * max_rho + epsilon * lambdas
    return BetaBound(
        epsilon=float(epsilon), lambdas=lambdas, rhos=rhos, max_rho=max_rho, betas=betas
    )


def _mean_cost_curve(trajectories, i: int) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(trajectories, Trajectory):
        trajectories = [trajectories]
    trajectories = list(trajectories)
    steps = trajectories[0].steps
    for t in trajectories[1:]:
        if t.horizon != trajectories[0].horizon or not np.array_equal(t.steps, steps):
            raise ValueError("trajectories have mismatched horizons or logging")
    costs = np.mean([t.costs[:, i] for t in trajectories], axis=0)
    return steps, costs


def misreport_gain(truthful, misreport, i: int) -> np.ndarray:
    """Seed-averaged cost reduction agent i obtained by misreporting.

    Inputs are single trajectories or same-seeded ensembles from the same
    problem and horizon. Entry k is (mean truthful cost) - (mean misreport
    cost) at the k-th logged step; positive values mean lying helped.
    """
    steps_t, cost_t = _mean_cost_curve(truthful, i)
    steps_m, cost_m = _mean_cost_curve(misreport, i)
    if not np.array_equal(steps_t, steps_m):
        raise ValueError("truthful and misreport trajectories are not aligned")
    return cost_t - cost_m


def error_curves(traj: Trajectory, sp: SaddlePoint) -> tuple[np.ndarray, np.ndarray]:
    """Per logged step, Euclidean distances to the reference saddle point."""
    primal = np.linalg.norm(traj.states - sp.x[None, :], axis=1)
    dual = np.linalg.norm(traj.duals - sp.mu[None, :], axis=1)
    return primal, dual
