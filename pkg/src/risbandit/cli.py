"""Command-line interface.

Subcommands:
  oracle   estimate a success-probability table and cache it as .npz
  run      Monte Carlo simulation of one or more policies on a scenario
  compare  run with a default policy set and print a comparison table

Exit codes: 0 success, 2 bad arguments or scenario, 3 runtime failure.
"""
import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from .backend import active_backend
from .channel import SuccessProbTable, estimate_success_probs
from .engine import prepare_table, run_monte_carlo
from .policies import hungarian_assign, occupancy_aware_value, parse_policy
from .reporting import (summarize_aggregate, write_aggregate_csv,
                        write_summary_json, write_trace_csv)
from .scenario import (builtin_scenario_path, load_scenario, parse_phase_mode,
                       scenario_physics_hash, validate_scenario)

BUILTINS = ("fig3", "fig9_cluster")
DEFAULT_COMPARE = ("e2boost", "got", "qlearning", "random", "optimal")


class CliError(Exception):
    """Configuration problem: reported on stderr, exit code 2."""


def resolve_scenario(name, phase_mode=None):
    if os.path.exists(name):
        path = name
    elif name in BUILTINS:
        path = builtin_scenario_path(name)
    else:
        raise CliError(f"scenario {name!r} is neither a file nor one of "
                       f"{', '.join(BUILTINS)}")
    scenario = load_scenario(path)
    if phase_mode is not None:
        parse_phase_mode(phase_mode)  # raises ValueError on bad syntax
        scenario = replace(scenario, phase_shift_mode=phase_mode)
        problems = validate_scenario(scenario)
        if problems:
            raise CliError("; ".join(problems))
    return scenario


def load_or_build_table(scenario, args):
    """Resolve the success-probability table for fixed-device scenarios.

    --oracle points at an .npz cache: loaded when present and consistent
    with the scenario physics and trial count, created otherwise.
    """
    if scenario.random_devices:
        if getattr(args, "oracle", None):
            raise CliError("--oracle cannot cache per-trial device draws")
        return None
    cache = getattr(args, "oracle", None)
    if cache and os.path.exists(cache):
        table = SuccessProbTable.load(cache)
        want = scenario_physics_hash(scenario)
        if table.physics_hash != want:
            raise RuntimeError(
                f"oracle cache {cache} was built for different physics "
                f"(hash {table.physics_hash[:12]}.. != {want[:12]}..)")
        if table.trials != args.oracle_trials:
            raise RuntimeError(
                f"oracle cache {cache} holds {table.trials} trials, "
                f"requested {args.oracle_trials}")
        return table
    table = prepare_table(scenario, args.oracle_trials, args.seed)
    if cache:
        table.save(cache)
    return table


def safe_name(policy_name):
    return policy_name.replace(":", "-")


def cmd_oracle(args):
    scenario = resolve_scenario(args.scenario, args.phase_mode)
    if scenario.random_devices:
        raise CliError("scenario draws device positions per trial; there is "
                       "no single table to cache")
    table = estimate_success_probs(scenario, args.trials,
                                   rng=np.random.default_rng(args.seed))
    table.save(args.out)
    print(f"wrote {args.out}: theta {table.theta.shape}, "
          f"{table.trials} trials, physics {table.physics_hash[:12]}")
    return 0


def _run_policies(args, policies):
    scenario = resolve_scenario(args.scenario, args.phase_mode)
    specs = [parse_policy(p) for p in policies]
    table = load_or_build_table(scenario, args)

    os.makedirs(args.out, exist_ok=True)
    print(f"backend: {active_backend()}", file=sys.stderr)

    summary = {
        "scenario": args.scenario,
        "seed": args.seed,
        "reps": args.reps,
        "epochs": args.epochs if args.epochs else scenario.algo.epochs,
        "full_channel": bool(args.full_channel),
        "phase_mode": args.phase_mode or scenario.phase_shift_mode,
        "policies": {},
    }
    if table is not None:
        mu = table.mu / 1e6
        mu_direct = table.mu_direct / 1e6
        assignment = hungarian_assign(mu, mu_direct)
        summary["optimal_value_mbps"] = occupancy_aware_value(
            assignment, mu, mu_direct, scenario.ris_active_prob)

    aggs = []
    for spec in specs:
        agg = run_monte_carlo(scenario, spec, args.reps, args.seed,
                              table=table, epochs=args.epochs or None,
                              full_channel=args.full_channel,
                              trace=args.trace, jobs=args.jobs,
                              oracle_trials=args.oracle_trials)
        aggs.append(agg)
        base = os.path.join(args.out, safe_name(spec.name))
        write_aggregate_csv(base + "_aggregate.csv", agg)
        if args.trace and agg.trace is not None:
            write_trace_csv(base + "_trace.csv", agg.trace)
        summary["policies"][spec.name] = summarize_aggregate(agg)

    write_summary_json(os.path.join(args.out, "summary.json"), summary)
    return scenario, summary, aggs


def cmd_run(args):
    _run_policies(args, args.policy or ["e2boost"])
    print(f"results in {args.out}")
    return 0


def cmd_compare(args):
    scenario, summary, aggs = _run_policies(args, args.policy or list(DEFAULT_COMPARE))
    opt = summary.get("optimal_value_mbps")
    print(f"{'policy':<24}{'mean thr (Mbit/s)':>18}{'stderr':>10}"
          f"{'pseudo regret':>15}{'vs opt':>8}")
    for agg in aggs:
        ratio = f"{agg.final_thr_mean / opt:6.1%}" if opt else "   n/a"
        print(f"{agg.policy:<24}{agg.final_thr_mean:>18.4f}"
              f"{agg.final_thr_stderr:>10.4f}"
              f"{float(agg.mean_pseudo_regret[-1]):>15.1f}{ratio:>8}")
    if opt:
        print(f"{'(centralized optimum)':<24}{opt:>18.4f}")
    print(f"results in {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="risbandit",
        description="Discrete-time simulator for learned surface/SF selection "
                    "in RIS-assisted uplinks")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", default="fig3",
                       help="builtin name (fig3, fig9_cluster) or .scenario path")
        p.add_argument("--seed", type=int, default=1)
        p.add_argument("--phase-mode", default=None,
                       help="override surface phases: 'optimal' or 'constant:<word>'")

    p = sub.add_parser("oracle", help="estimate and cache success probabilities")
    common(p)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("--out", required=True, help="output .npz path")
    p.set_defaults(func=cmd_oracle)

    for name, fn, hlp in (("run", cmd_run, "simulate policies"),
                          ("compare", cmd_compare,
                           "simulate a policy set and print a table")):
        p = sub.add_parser(name, help=hlp)
        common(p)
        p.add_argument("--policy", action="append",
                       help="repeatable; e2boost, e2boost-no-ts, "
                            "e2boost-fixed-eps:<v>, got, qlearning, random, "
                            "optimal")
        p.add_argument("--reps", type=int, default=20)
        p.add_argument("--epochs", type=int, default=0,
                       help="override the scenario's epoch count")
        p.add_argument("--out", default=os.environ.get("RISBANDIT_OUT", "runs"))
        p.add_argument("--oracle", default=None,
                       help=".npz cache for the success-probability table")
        p.add_argument("--oracle-trials", type=int, default=100_000)
        p.add_argument("--full-channel", action="store_true",
                       help="draw per-slot channels instead of oracle coin flips")
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--trace", action="store_true",
                       help="write a per-slot event log of trial 0")
        p.set_defaults(func=fn)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
