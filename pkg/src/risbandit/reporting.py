"""CSV and JSON writers for simulation outputs.

Floats are written with repr (shortest exact round-trip), so two runs with
the same seed produce byte-identical files.
"""
import csv
import json
import os

import numpy as np

SUCCESS = "success"
FAILURE = "failure"
NONE = "none"


def _f(x):
    return repr(float(x))


def _ensure_dir(path):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)


def write_aggregate_csv(path, agg):
    """Across-trial series on the snapshot grid.

    The pseudo-regret column is step-filled: each row carries the value of
    the most recent epoch end, empty before the first one.
    """
    _ensure_dir(path)
    ends = np.asarray(agg.epoch_ends)
    with open(path, "w", newline="") as f:
        out = csv.writer(f)
        out.writerow(["slot", "mean_sum_throughput_mbps",
                      "stderr_sum_throughput_mbps",
                      "mean_realized_regret_mbit", "mean_pseudo_regret_mbit"])
        ei = -1
        for gi, slot in enumerate(np.asarray(agg.grid)):
            while ei + 1 < len(ends) and ends[ei + 1] <= slot:
                ei += 1
            pseudo = _f(agg.mean_pseudo_regret[ei]) if ei >= 0 else ""
            out.writerow([int(slot), _f(agg.mean_thr_sum[gi]),
                          _f(agg.stderr_thr_sum[gi]),
                          _f(agg.mean_realized_regret[gi]), pseudo])


def read_aggregate_csv(path):
    """Columns of an aggregate CSV as arrays (empty cells become nan)."""
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    header, body = rows[0], rows[1:]
    cols = {name: [] for name in header}
    for row in body:
        for name, cell in zip(header, row):
            cols[name].append(float(cell) if cell else float("nan"))
    return {name: np.asarray(vals) for name, vals in cols.items()}


def write_trace_csv(path, trace):
    """Per-player-slot event log of one trial."""
    _ensure_dir(path)
    with open(path, "w", newline="") as f:
        out = csv.writer(f)
        out.writerow(["slot", "player", "pattern", "ris", "sf", "collision",
                      "feedback", "reward_mbps"])
        for i in range(trace.n):
            if trace.collision[i]:
                feedback = NONE
            elif trace.success[i]:
                feedback = SUCCESS
            else:
                feedback = FAILURE
            out.writerow([int(trace.slot[i]), int(trace.player[i]),
                          int(trace.pattern[i]), int(trace.ris[i]),
                          int(trace.sf[i]), int(trace.collision[i]),
                          feedback, _f(trace.reward[i])])


def write_summary_json(path, payload):
    _ensure_dir(path)
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def summarize_aggregate(agg):
    """JSON-ready scalar summary of one policy's aggregate."""
    return {
        "reps": int(agg.reps),
        "horizon": int(agg.horizon),
        "final_sum_throughput_mbps": agg.final_thr_mean,
        "final_sum_throughput_stderr": agg.final_thr_stderr,
        "final_pseudo_regret_mbit": float(agg.mean_pseudo_regret[-1]),
        "final_realized_regret_mbit": float(agg.mean_realized_regret[-1]),
        "mean_collisions": agg.collisions_mean,
        "mean_busy_fallbacks": agg.busy_fallbacks_mean,
        "converged_fraction": agg.conv_distinct_frac,
        "devices_full_mode_per_slot": int(agg.flagged_per_slot),
    }
