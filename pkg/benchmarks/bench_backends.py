"""Wall-time comparison of the compiled and pure-Python slot loops.

Runs one trial per policy with each backend and reports the speedup. The
two backends produce bit-identical results (see tests/test_backend_parity),
so this is purely a performance comparison.

Usage: python benchmarks/bench_backends.py [--epochs 6] [--repeat 3]
"""
import argparse
import os
import time

import numpy as np

from risbandit.backend import active_backend
from risbandit.channel import estimate_success_probs
from risbandit.engine import TrialConfig, run_trial
from risbandit.policies import parse_policy
from risbandit.scenario import builtin_scenario_path, load_scenario

POLICIES = ("e2boost", "got", "e2boost-no-ts", "qlearning", "random", "optimal")


def time_trial(scenario, table, policy, backend, epochs, repeat):
    if backend == "python":
        os.environ["RISBANDIT_PURE_PYTHON"] = "1"
    else:
        os.environ.pop("RISBANDIT_PURE_PYTHON", None)
    assert active_backend() == backend, f"{backend} backend unavailable"
    cfg = TrialConfig(scenario=scenario, policy=parse_policy(policy),
                      table=table, seed=11, trial_index=0, epochs=epochs)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = run_trial(cfg)
        best = min(best, time.perf_counter() - t0)
    return best, result


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--epochs", type=int, default=6)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--scenario", default="fig3")
    args = ap.parse_args()

    scenario = load_scenario(builtin_scenario_path(args.scenario))
    table = estimate_success_probs(scenario, 20_000, rng=np.random.default_rng(5))

    print(f"scenario {args.scenario}, {args.epochs} epochs, "
          f"best of {args.repeat}\n")
    print(f"{'policy':<16}{'compiled (s)':>14}{'python (s)':>13}{'speedup':>9}")
    for policy in POLICIES:
        tc, rc = time_trial(scenario, table, policy, "compiled",
                            args.epochs, args.repeat)
        tp, rp = time_trial(scenario, table, policy, "python",
                            args.epochs, args.repeat)
        same = np.array_equal(rc.w_final, rp.w_final)
        note = "" if same else "  RESULTS DIFFER!"
        print(f"{policy:<16}{tc:>14.4f}{tp:>13.4f}{tp / tc:>8.0f}x{note}")
    os.environ.pop("RISBANDIT_PURE_PYTHON", None)


if __name__ == "__main__":
    main()
