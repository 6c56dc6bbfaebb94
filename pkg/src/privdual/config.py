"""Experiment configuration: JSON schema, validation, bundled configs.

Agent ids are 1-based everywhere a human sees them (config files, CLI flags,
CSV columns); internal arrays are 0-based. The parser rejects unknown keys
so typos fail loudly instead of silently running a different experiment.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .engine import Schedule
from .errors import ConfigError
from .mechanism import NoisePlan, calibrate
from .problem import (
    AgentSpec,
    DerivedConstants,
    ProblemSpec,
    QuadraticConstraintSet,
    QuadraticObjective,
    derive_constants,
)

BUNDLED_CONFIGS = ("benchmark8", "toy2")
_POLICIES = ("truthful", "constant_target", "adjacent_clipped")


def _require_keys(obj: dict, allowed: set[str], required: set[str], where: str):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = set(obj) - allowed
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise ConfigError(f"{where}: missing keys {sorted(missing)}")


def _positive(value, where: str) -> float:
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: expected a number") from None
    if not out > 0:
        raise ConfigError(f"{where}: must be positive")
    return out


def _parse_agent(i: int, spec: dict) -> AgentSpec:
    where = f"agents[{i + 1}]"
    _require_keys(spec, {"box", "target", "objective"}, {"box"}, where)
    box = np.asarray(spec["box"], dtype=float)
    if box.ndim != 2 or box.shape[1] != 2:
        raise ConfigError(f"{where}: box must be a list of [lo, hi] pairs")
    target = spec.get("target")
    objective = None
    if "objective" in spec:
        ospec = spec["objective"]
        _require_keys(
            ospec, {"quadratic", "linear", "constant"}, {"quadratic", "linear"},
            f"{where}.objective",
        )
        objective = QuadraticObjective(
            P=np.asarray(ospec["quadratic"], dtype=float),
            c=np.asarray(ospec["linear"], dtype=float),
            d=float(ospec.get("constant", 0.0)),
        )
    try:
        return AgentSpec(
            index=i, lo=box[:, 0], hi=box[:, 1], target=target, objective=objective
        )
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _parse_constraints(specs, agent_dims, slater) -> QuadraticConstraintSet:
    if not isinstance(specs, list) or not specs:
        raise ConfigError("constraints: expected a non-empty list")
    parsed = []
    num_agents = len(agent_dims)

    def agent_ref(value, where):
        try:
            idx = int(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{where}: agent ids must be integers") from None
        if not 1 <= idx <= num_agents:
            raise ConfigError(f"{where}: agent id {idx} out of range 1..{num_agents}")
        return idx - 1

    for j, spec in enumerate(specs):
        where = f"constraints[{j + 1}]"
        _require_keys(
            spec, {"offset", "squared_distances", "blocks", "linear"}, set(), where
        )
        entry = {"offset": float(spec.get("offset", 0.0))}
        if "squared_distances" in spec:
            entry["squared_distances"] = [
                (agent_ref(a, where), agent_ref(b, where))
                for a, b in spec["squared_distances"]
            ]
        if "blocks" in spec:
            blocks = []
            for blk in spec["blocks"]:
                _require_keys(blk, {"agents", "matrix"}, {"agents", "matrix"}, where)
                a, b = (agent_ref(v, where) for v in blk["agents"])
                blocks.append((a, b, np.asarray(blk["matrix"], dtype=float)))
            entry["blocks"] = blocks
        if "linear" in spec:
            entry["linear"] = {
                agent_ref(k, where): np.asarray(v, dtype=float)
                for k, v in spec["linear"].items()
            }
        parsed.append(entry)
    try:
        return QuadraticConstraintSet.from_blocks(agent_dims, parsed, slater)
    except ValueError as exc:
        raise ConfigError(f"constraints: {exc}") from None


def parse_problem(spec: dict) -> ProblemSpec:
    _require_keys(
        spec,
        {"agents", "constraints", "slater_point", "f_lower"},
        {"agents", "constraints", "slater_point"},
        "problem",
    )
    if not isinstance(spec["agents"], list) or not spec["agents"]:
        raise ConfigError("problem.agents: expected a non-empty list")
    agents = tuple(_parse_agent(i, a) for i, a in enumerate(spec["agents"]))
    slater = np.asarray(spec["slater_point"], dtype=float).ravel()
    constraints = _parse_constraints(
        spec["constraints"], [a.dim for a in agents], slater
    )
    f_lower = spec.get("f_lower")
    problem = ProblemSpec(
        agents=agents,
        constraints=constraints,
        f_lower=None if f_lower is None else float(f_lower),
    )
    return problem


@dataclass(frozen=True)
class BehaviorSpec:
    """Declarative behavior assignment; instantiated fresh for every run."""

    policy: str
    budget: float | None = None
    report: tuple[float, ...] | None = None

    def build(self, agent: AgentSpec, default_budget: float):
        from .engine import AdjacentClipped, Behavior, ConstantTarget

        if self.policy == "truthful":
            return Behavior()
        if self.report is not None:
            value = np.asarray(self.report, dtype=float)
        elif agent.target is not None:
            value = agent.target
        else:
            raise ConfigError(
                f"agent {agent.index + 1}: misreport policy needs an explicit "
                "report vector when the agent has no target"
            )
        if self.policy == "constant_target":
            return ConstantTarget(value)
        budget = self.budget if self.budget is not None else default_budget
        return AdjacentClipped(budget=budget, proposal=value)


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemSpec
    constants: DerivedConstants
    schedule: Schedule
    epsilon: float
    adjacency_bound: float
    horizon: int
    mode: str
    seeds: tuple[int, ...]
    behaviors: dict[int, BehaviorSpec]
    log_stride: int
    output_dir: str
    source_sha256: str
    x0: tuple[float, ...] | None = None
    mu0: tuple[float, ...] | None = None
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def noise_plan(self) -> NoisePlan | None:
        if self.mode != "noisy":
            return None
        return calibrate(self.constants, self.epsilon, self.adjacency_bound)

    def build_behaviors(self):
        return {
            i: spec.build(self.problem.agents[i], self.adjacency_bound)
            for i, spec in self.behaviors.items()
        }


def _parse_seeds(spec) -> tuple[int, ...]:
    if isinstance(spec, int):
        return (spec,)
    if isinstance(spec, list):
        if not spec or not all(isinstance(s, int) for s in spec):
            raise ConfigError("seeds: expected a non-empty list of integers")
        return tuple(spec)
    if isinstance(spec, dict):
        _require_keys(spec, {"start", "count"}, {"count"}, "seeds")
        start, count = int(spec.get("start", 0)), int(spec["count"])
        if count < 1:
            raise ConfigError("seeds.count must be at least 1")
        return tuple(range(start, start + count))
    raise ConfigError("seeds: expected an integer, list, or {start, count}")


def _parse_behaviors(spec, problem: ProblemSpec) -> dict[int, BehaviorSpec]:
    if spec is None:
        return {}
    if not isinstance(spec, dict):
        raise ConfigError("behaviors: expected an object keyed by agent id")
    out = {}
    for key, value in spec.items():
        try:
            agent_id = int(key)
        except ValueError:
            raise ConfigError(f"behaviors: bad agent id {key!r}") from None
        if not 1 <= agent_id <= problem.num_agents:
            raise ConfigError(f"behaviors: agent id {agent_id} out of range")
        _require_keys(
            value, {"policy", "budget", "report"}, {"policy"}, f"behaviors[{agent_id}]"
        )
        policy = value["policy"]
        if policy not in _POLICIES:
            raise ConfigError(
                f"behaviors[{agent_id}]: unknown policy {policy!r}; "
                f"expected one of {_POLICIES}"
            )
        budget = value.get("budget")
        out[agent_id - 1] = BehaviorSpec(
            policy=policy,
            budget=None if budget is None else _positive(budget, "budget"),
            report=None if "report" not in value else tuple(
                float(v) for v in value["report"]
            ),
        )
    return out


def bundled_config_path(name: str) -> Path:
    return Path(resources.files("privdual").joinpath(f"data/{name}.json"))


def load_config(path_or_alias) -> ExperimentConfig:
    """Load, validate, and pre-derive everything an experiment needs.

    Accepts a filesystem path or the name of a bundled config. Derived
    constants and noise scales are computed here so a bad problem fails at
    load time, not mid-run, and so provenance can echo them.
    """
    path = Path(path_or_alias)
    if not path.exists() and str(path_or_alias) in BUNDLED_CONFIGS:
        path = bundled_config_path(str(path_or_alias))
    if not path.exists():
        raise ConfigError(f"config file not found: {path_or_alias}")
    text = path.read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None

    _require_keys(
        raw,
        {
            "problem", "schedule", "epsilon", "adjacency_bound", "horizon",
            "mode", "seed", "seeds", "behaviors", "log_stride", "output_dir",
            "x0", "mu0",
        },
        {"problem", "schedule", "epsilon", "adjacency_bound", "horizon", "mode"},
        "config",
    )
    problem = parse_problem(raw["problem"])
    constants = derive_constants(problem)

    sched_spec = raw["schedule"]
    _require_keys(
        sched_spec,
        {"alpha_bar", "c1", "gamma_bar", "c2"},
        {"alpha_bar", "c1", "gamma_bar", "c2"},
        "schedule",
    )
    schedule = Schedule(
        alpha_bar=float(sched_spec["alpha_bar"]),
        c1=float(sched_spec["c1"]),
        gamma_bar=float(sched_spec["gamma_bar"]),
        c2=float(sched_spec["c2"]),
    )

    mode = raw["mode"]
    if mode not in ("deterministic", "noisy"):
        raise ConfigError(f"mode: expected 'deterministic' or 'noisy', got {mode!r}")
    horizon = int(raw["horizon"])
    if horizon < 1:
        raise ConfigError("horizon must be at least 1")
    if "seed" in raw and "seeds" in raw:
        raise ConfigError("give either seed or seeds, not both")
    seeds = _parse_seeds(raw.get("seeds", raw.get("seed", 0)))
    log_stride = int(raw.get("log_stride", 100))
    if log_stride < 1:
        raise ConfigError("log_stride must be at least 1")

    epsilon = _positive(raw["epsilon"], "epsilon")
    bound = _positive(raw["adjacency_bound"], "adjacency_bound")

    def initial_vector(key: str, expected: int):
        if key not in raw:
            return None
        vec = tuple(float(v) for v in raw[key])
        if len(vec) != expected:
            raise ConfigError(f"{key}: expected {expected} entries")
        return vec

    cfg = ExperimentConfig(
        problem=problem,
        constants=constants,
        schedule=schedule,
        epsilon=epsilon,
        adjacency_bound=bound,
        horizon=horizon,
        mode=mode,
        seeds=seeds,
        behaviors=_parse_behaviors(raw.get("behaviors"), problem),
        log_stride=log_stride,
        output_dir=str(raw.get("output_dir", "results")),
        source_sha256=hashlib.sha256(text.encode("utf-8")).hexdigest(),
        x0=initial_vector("x0", problem.dim),
        mu0=initial_vector("mu0", problem.num_constraints),
        raw=raw,
    )
    # validate calibration eagerly in noisy mode
    if mode == "noisy":
        cfg.noise_plan
    return cfg
