"""Experiment orchestration: seeded runs and ensembles, CSV emission,
provenance logging."""
from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import SaddlePoint, beta_bound, error_curves, misreport_gain
from .config import BehaviorSpec, ExperimentConfig
from .engine import Trajectory, run, step_sizes

TRACE_COLUMNS = "k,alpha_k,gamma_k,{costs},{constraints},primal_error,dual_error"
SUMMARY_COLUMNS = (
    "seed,mode,horizon,final_primal_error,final_dual_error,final_total_cost,wall_time_s"
)
GAIN_COLUMNS = "k,mean_cost_truthful,mean_cost_misreport,gain,gain_over_beta"


@dataclass
class RunResult:
    trajectory: Trajectory
    wall_time_s: float


def _execute(cfg: ExperimentConfig, seed: int, behaviors: dict[int, BehaviorSpec]):
    built = {
        i: spec.build(cfg.problem.agents[i], cfg.adjacency_bound)
        for i, spec in behaviors.items()
    }
    started = time.perf_counter()
    traj = run(
        cfg.problem,
        cfg.schedule,
        cfg.noise_plan,
        behaviors=built,
        horizon=cfg.horizon,
        seed=seed,
        x0=None if cfg.x0 is None else np.asarray(cfg.x0),
        mu0=None if cfg.mu0 is None else np.asarray(cfg.mu0),
        log_stride=cfg.log_stride,
        constants=cfg.constants,
    )
    return RunResult(trajectory=traj, wall_time_s=time.perf_counter() - started)


def _worker(args):
    cfg, seed, behaviors = args
    return _execute(cfg, seed, behaviors)


def run_ensemble(
    cfg: ExperimentConfig,
    seeds=None,
    behaviors: dict[int, BehaviorSpec] | None = None,
    workers: int | None = None,
) -> list[RunResult]:
    """One run per seed; members are independent, so they run in parallel."""
    seeds = list(cfg.seeds if seeds is None else seeds)
    behaviors = cfg.behaviors if behaviors is None else behaviors
    jobs = [(cfg, s, behaviors) for s in seeds]
    if workers is None:
        workers = min(len(jobs), os.cpu_count() or 1)
    if workers <= 1 or len(jobs) == 1:
        return [_worker(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_worker, jobs))


def write_trace_csv(path, cfg: ExperimentConfig, traj: Trajectory,
                    fixture: SaddlePoint | None) -> None:
    n_agents = cfg.problem.num_agents
    m = cfg.problem.num_constraints
    header = (
        ["k", "alpha_k", "gamma_k"]
        + [f"cost_{i + 1}" for i in range(n_agents)]
        + [f"g_{j + 1}" for j in range(m)]
        + ["primal_error", "dual_error"]
    )
    if fixture is not None:
        primal, dual = error_curves(traj, fixture)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for row, k in enumerate(traj.steps):
            alpha, gamma = step_sizes(cfg.schedule, int(k))
            record = [int(k), f"{alpha:.12g}", f"{gamma:.12g}"]
            record += [f"{c:.12g}" for c in traj.costs[row]]
            record += [f"{g:.12g}" for g in traj.constraint_values[row]]
            if fixture is not None:
                record += [f"{primal[row]:.12g}", f"{dual[row]:.12g}"]
            else:
                record += ["", ""]
            writer.writerow(record)


def write_summary_csv(path, cfg: ExperimentConfig, results: list[RunResult],
                      fixture: SaddlePoint | None) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(SUMMARY_COLUMNS.split(","))
        for seed, result in zip(cfg.seeds, results):
            traj = result.trajectory
            if fixture is not None:
                primal = float(np.linalg.norm(traj.final_state - fixture.x))
                dual = float(np.linalg.norm(traj.final_dual - fixture.mu))
                primal, dual = f"{primal:.12g}", f"{dual:.12g}"
            else:
                primal = dual = ""
            writer.writerow(
                [
                    seed,
                    traj.mode,
                    traj.horizon,
                    primal,
                    dual,
                    f"{float(traj.costs[-1].sum()):.12g}",
                    f"{result.wall_time_s:.3f}",
                ]
            )


def write_gain_csv(path, steps, truthful_curve, misreport_curve, gain, beta_i) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(GAIN_COLUMNS.split(","))
        for k, ct, cm, gv in zip(steps, truthful_curve, misreport_curve, gain):
            writer.writerow(
                [int(k), f"{ct:.12g}", f"{cm:.12g}", f"{gv:.12g}", f"{gv / beta_i:.12g}"]
            )


def write_provenance(path, cfg: ExperimentConfig, extra: dict | None = None) -> None:
    """Everything needed to reproduce the outputs bit-for-bit."""
    plan = cfg.noise_plan
    payload = {
        "package_version": __version__,
        "config_sha256": cfg.source_sha256,
        "config": cfg.raw,
        "seeds": list(cfg.seeds),
        "mode": cfg.mode,
        "derived_constants": {
            "K": cfg.constants.K.tolist(),
            "D": cfg.constants.D.tolist(),
            "K_g": cfg.constants.K_g,
            "L_g": cfg.constants.L_g.tolist(),
            "f_lower": cfg.constants.f_lower,
            "M_radius": cfg.constants.M_radius,
        },
        "noise_scales": None
        if plan is None
        else {
            "per_agent": plan.agent_scales.tolist(),
            "constraint": plan.constraint_scale,
            "epsilon": plan.epsilon,
            "adjacency_bound": plan.adjacency_bound,
        },
    }
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def run_experiment(
    cfg: ExperimentConfig,
    output_dir=None,
    fixture: SaddlePoint | None = None,
    workers: int | None = None,
) -> list[RunResult]:
    """Run the configured ensemble and write trace/summary/provenance files."""
    out = Path(output_dir if output_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = run_ensemble(cfg, workers=workers)
    for seed, result in zip(cfg.seeds, results):
        run_dir = out / f"run_seed{seed:04d}"
        run_dir.mkdir(parents=True, exist_ok=True)
        write_trace_csv(run_dir / "trace.csv", cfg, result.trajectory, fixture)
    write_summary_csv(out / "summary.csv", cfg, results, fixture)
    write_provenance(out / "provenance.json", cfg)
    return results


def pair_experiment(
    cfg: ExperimentConfig,
    agent_id: int,
    policy: str,
    budget: float | None = None,
    output_dir=None,
    fixture: SaddlePoint | None = None,
    workers: int | None = None,
):
    """Truthful-versus-misreport comparison on common seeds.

    agent_id is 1-based. Writes both arms' outputs plus gain.csv holding the
    seed-averaged cost advantage the misreporting agent extracted, in
    absolute terms and relative to that agent's gain bound.
    """
    index = agent_id - 1
    if not 0 <= index < cfg.problem.num_agents:
        raise ValueError(f"agent id {agent_id} out of range")
    out = Path(output_dir if output_dir is not None else cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    truthful_behaviors = dict(cfg.behaviors)
    truthful_behaviors.pop(index, None)
    misreport_behaviors = dict(truthful_behaviors)
    misreport_behaviors[index] = BehaviorSpec(policy=policy, budget=budget)

    truthful = run_ensemble(cfg, behaviors=truthful_behaviors, workers=workers)
    misreport = run_ensemble(cfg, behaviors=misreport_behaviors, workers=workers)

    for arm, results in (("truthful", truthful), ("misreport", misreport)):
        arm_dir = out / arm
        arm_dir.mkdir(parents=True, exist_ok=True)
        for seed, result in zip(cfg.seeds, results):
            run_dir = arm_dir / f"run_seed{seed:04d}"
            run_dir.mkdir(parents=True, exist_ok=True)
            write_trace_csv(run_dir / "trace.csv", cfg, result.trajectory, fixture)
        write_summary_csv(arm_dir / "summary.csv", cfg, results, fixture)

    bounds = beta_bound(cfg.problem, cfg.epsilon, cfg.constants)
    beta_i = float(bounds.betas[index])
    truth_trajs = [r.trajectory for r in truthful]
    mis_trajs = [r.trajectory for r in misreport]
    gain = misreport_gain(truth_trajs, mis_trajs, index)
    steps = truth_trajs[0].steps
    truth_curve = np.mean([t.costs[:, index] for t in truth_trajs], axis=0)
    mis_curve = np.mean([t.costs[:, index] for t in mis_trajs], axis=0)
    write_gain_csv(out / "gain.csv", steps, truth_curve, mis_curve, gain, beta_i)
    write_provenance(
        out / "provenance.json",
        cfg,
        extra={
            "pair": {
                "agent": agent_id,
                "policy": policy,
                "budget": budget,
                "beta": beta_i,
            }
        },
    )
    return truthful, misreport, gain, beta_i
