"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 numeric abort mid-run.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .analysis import load_saddle_point, save_saddle_point, solve_saddle_point
from .config import load_config
from .errors import ConfigError, NumericsError
from .harness import pair_experiment, run_experiment
from .mechanism import calibrate


def _add_common(parser):
    parser.add_argument("--config", required=True,
                        help="config file path or bundled name (benchmark8, toy2)")


def _apply_overrides(cfg, args):
    updates = {}
    if getattr(args, "horizon", None) is not None:
        if args.horizon < 1:
            raise ConfigError("horizon must be at least 1")
        updates["horizon"] = args.horizon
    if getattr(args, "seed", None) is not None:
        updates["seeds"] = (args.seed,)
    if getattr(args, "seed_count", None) is not None:
        start = cfg.seeds[0]
        updates["seeds"] = tuple(range(start, start + args.seed_count))
    if getattr(args, "stride", None) is not None:
        if args.stride < 1:
            raise ConfigError("log stride must be at least 1")
        updates["log_stride"] = args.stride
    if getattr(args, "mode", None) is not None:
        updates["mode"] = args.mode
    return dataclasses.replace(cfg, **updates) if updates else cfg


def _load_fixture(args):
    if getattr(args, "fixture", None) is None:
        return None
    return load_saddle_point(args.fixture)


def cmd_calibrate(args) -> int:
    cfg = load_config(args.config)
    plan = calibrate(cfg.constants, cfg.epsilon, cfg.adjacency_bound)
    print("source,sensitivity_bound,scale")
    for i, scale in enumerate(plan.agent_scales):
        sens = cfg.constants.L_g[i] * cfg.adjacency_bound
        print(f"agent/{i + 1},{sens:.6g},{scale:.6g}")
    sens_g = cfg.constants.K_g * cfg.adjacency_bound
    print(f"constraint,{sens_g:.6g},{plan.constraint_scale:.6g}")
    print(
        f"# epsilon={cfg.epsilon:.10g} adjacency_bound={cfg.adjacency_bound:.10g} "
        f"M_radius={cfg.constants.M_radius:.10g}",
        file=sys.stderr,
    )
    return 0


def cmd_oracle(args) -> int:
    cfg = load_config(args.config)
    sp = solve_saddle_point(
        cfg.problem,
        tolerance=args.tolerance,
        schedule=cfg.schedule,
        max_iter=args.max_iter,
        polish=not args.no_polish,
        constants=cfg.constants,
    )
    if args.output:
        save_saddle_point(sp, args.output)
        where = args.output
    else:
        where = "(not saved)"
    status = "converged" if sp.converged else "NOT CONVERGED"
    print(
        f"saddle point {status}: iterations={sp.iterations} "
        f"residual={sp.residual:.3e} polished={sp.polished} -> {where}"
    )
    if not sp.converged:
        return 1
    return 0


def cmd_run(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    results = run_experiment(
        cfg,
        output_dir=args.output,
        fixture=_load_fixture(args),
        workers=args.workers,
    )
    out = Path(args.output if args.output else cfg.output_dir)
    print(f"{len(results)} run(s) complete -> {out}")
    return 0


def cmd_pair(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    _, _, gain, beta_i = pair_experiment(
        cfg,
        agent_id=args.agent,
        policy=args.policy,
        budget=args.budget,
        output_dir=args.output,
        fixture=_load_fixture(args),
        workers=args.workers,
    )
    out = Path(args.output if args.output else cfg.output_dir)
    print(
        f"pair complete: agent {args.agent} policy={args.policy} "
        f"max gain={gain.max():.6g} beta={beta_i:.6g} -> {out}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="privdual",
        description=(
            "Cloud-mediated primal-dual solver for coupled multi-agent programs "
            "with privately noised coordination messages"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_cal = sub.add_parser("calibrate", help="print the noise plan for a config")
    _add_common(p_cal)
    p_cal.set_defaults(func=cmd_calibrate)

    p_oracle = sub.add_parser("oracle", help="compute the reference saddle point")
    _add_common(p_oracle)
    p_oracle.add_argument("--output", help="write the fixture JSON here")
    p_oracle.add_argument("--tolerance", type=float, default=1e-8)
    p_oracle.add_argument("--max-iter", type=int, default=2_000_000)
    p_oracle.add_argument("--no-polish", action="store_true",
                          help="skip the optimality-system refinement")
    p_oracle.set_defaults(func=cmd_oracle)

    p_run = sub.add_parser("run", help="run the configured experiment")
    _add_common(p_run)
    p_run.add_argument("--output", help="output directory (default from config)")
    p_run.add_argument("--seed", type=int, help="run a single seed")
    p_run.add_argument("--seed-count", type=int,
                       help="run this many consecutive seeds from the first")
    p_run.add_argument("--horizon", type=int)
    p_run.add_argument("--stride", type=int, help="logging stride")
    p_run.add_argument("--mode", choices=["deterministic", "noisy"])
    p_run.add_argument("--fixture", help="saddle-point JSON for error columns")
    p_run.add_argument("--workers", type=int)
    p_run.set_defaults(func=cmd_run)

    p_pair = sub.add_parser(
        "pair", help="truthful-versus-misreport ensembles on common seeds"
    )
    _add_common(p_pair)
    p_pair.add_argument("--agent", type=int, required=True, help="1-based agent id")
    p_pair.add_argument(
        "--policy", default="constant_target",
        choices=["constant_target", "adjacent_clipped"],
    )
    p_pair.add_argument("--budget", type=float,
                        help="deviation budget for adjacent_clipped")
    p_pair.add_argument("--output")
    p_pair.add_argument("--seed-count", type=int)
    p_pair.add_argument("--horizon", type=int)
    p_pair.add_argument("--stride", type=int)
    p_pair.add_argument("--fixture")
    p_pair.add_argument("--workers", type=int)
    p_pair.set_defaults(func=cmd_pair)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
