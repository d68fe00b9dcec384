"""Backend selection and the compiled-trial adapter.

The Cython slot loop is a transliteration of engine._python_slot_loop plus
the player-state transitions; both consume the same RNG streams in the same
order, so trials are bit-identical across backends. Set RISBANDIT_PURE_PYTHON
to any non-empty value to force the Python reference loop even when the
extension is available.
"""
import os

import numpy as np

try:
    from . import _kernels
except ImportError:  # extension not built; pure Python still works
    _kernels = None

KIND_CODES = {"epoch": 0, "qlearning": 1, "random": 2, "optimal": 3}


def active_backend():
    """'compiled' when the extension is importable and not overridden."""
    if os.environ.get("RISBANDIT_PURE_PYTHON"):
        return "python"
    return "compiled" if _kernels is not None else "python"


def run_trial_compiled(scenario, config, table, assignment, metrics,
                       ranks, sizes, cluster_mode,
                       occ_rng, fb_rng, opt_rng, player_rngs):
    """Flatten one trial's state into arrays and run the compiled slot loop.

    Mutates `metrics` in place exactly like the Python loop would.
    """
    from .bandit import EpochSchedule

    algo = scenario.algo
    spec = config.policy
    N, K, M = scenario.n_devices, scenario.n_ris, scenario.n_sf
    Z = algo.epochs
    schedule = EpochSchedule.from_algo(algo)
    horizon = schedule.total_slots
    joint = bool(spec.joint_arms)
    A = K * M if joint else K
    A2 = K * M + M

    rates_hz = np.asarray(scenario.sf_table.rates, dtype=float)
    if joint:
        util_scale = np.tile(rates_hz / rates_hz[0], K)
    else:
        util_scale = np.ones(A)
    lengths = np.array([schedule.phase_lengths(z) for z in range(1, Z + 1)],
                       dtype=np.int64)

    G = len(metrics.grid)
    E = len(metrics.epoch_ends)
    pseudo = np.zeros(E)
    w_epochs = np.zeros((E, N, A2), dtype=np.int64)
    counters = np.zeros(2, dtype=np.int64)
    cum_real = np.zeros(2)
    bench2 = np.array([float(np.max(metrics.mu_direct[p])) for p in range(N)])

    trace_on = metrics.trace is not None
    tr = metrics.trace
    dummy8 = np.zeros(1, dtype=np.int8)
    dummy32 = np.zeros(1, dtype=np.int32)
    dummy64 = np.zeros(1, dtype=np.int64)
    dummyf = np.zeros(1)

    args = {
        # dimensions and switches
        "N": N, "K": K, "M": M, "A": A, "A2": A2,
        "horizon": horizon, "epochs": Z,
        "kind": KIND_CODES[spec.kind],
        "joint": int(joint),
        "thompson": int(spec.thompson),
        "adaptive": int(spec.fixed_eps is None),
        "cluster": int(bool(cluster_mode)),
        "full": int(bool(config.full_channel)),
        "trace": int(trace_on),
        # learner constants
        "game_explore": float(algo.game_epsilon ** algo.game_nu),
        "game_epsilon": float(algo.game_epsilon),
        "qlr": float(algo.qlearn_lr), "qdisc": float(algo.qlearn_discount),
        "qe0": float(algo.qlearn_eps_start), "qe1": float(algo.qlearn_eps_final),
        "lengths": lengths,
        "util_scale": util_scale,
        "rates_e2": rates_hz,
        # environment tables
        "theta": np.ascontiguousarray(table.theta, dtype=np.float64),
        "theta_direct": np.ascontiguousarray(table.theta_direct, dtype=np.float64),
        "mu": np.ascontiguousarray(metrics.mu, dtype=np.float64),
        "mu_direct": np.ascontiguousarray(metrics.mu_direct, dtype=np.float64),
        "rates_mbps": np.ascontiguousarray(metrics.rates, dtype=np.float64),
        "pa": np.asarray(scenario.ris_active_prob, dtype=np.float64),
        "thresholds": np.asarray(scenario.sf_table.thresholds, dtype=np.float64),
        "los_re": np.ascontiguousarray(table.los_sum.real, dtype=np.float64),
        "los_im": np.ascontiguousarray(table.los_sum.imag, dtype=np.float64),
        "nlos_var": np.ascontiguousarray(table.nlos_var, dtype=np.float64),
        "shadow_mu": np.ascontiguousarray(table.shadow_mu, dtype=np.float64),
        "shadow_sigma": float(table.shadow_sigma),
        "tx": float(scenario.radio.tx_power),
        "denom": float(scenario.radio.interference_plus_noise),
        # centralized assignment (counterfactual optimum and regret benchmarks)
        "opt_ris": np.asarray(assignment.ris, dtype=np.int64),
        "opt_sf": np.asarray(assignment.sf, dtype=np.int64),
        "opt_dsf": np.asarray(assignment.direct_sf, dtype=np.int64),
        "bench1": np.asarray(assignment.per_player, dtype=np.float64),
        "bench2": bench2,
        # clustering
        "ranks": np.asarray(ranks, dtype=np.int64),
        "sizes": np.asarray(sizes, dtype=np.int64),
        # player state (epoch family)
        "eps": np.full(N, 1.0 if spec.fixed_eps is None else float(spec.fixed_eps)),
        "z": np.ones(N, dtype=np.int64),
        "phase": np.zeros(N, dtype=np.int64),
        "sip": np.zeros(N, dtype=np.int64),
        "cur_len": np.tile(lengths[0], (N, 1)),
        "v": np.zeros((N, A)), "q": np.zeros((N, A)),
        "theta_hat": np.zeros((N, A)),
        "u_max": np.zeros(N),
        "mood": np.zeros(N, dtype=np.int64),
        "baseline": np.zeros(N, dtype=np.int64),
        "fcounts": np.zeros((N, Z + 1, A)),
        "last_choice": np.full((N, Z + 1), -1, dtype=np.int64),
        "a1": np.zeros((N, M)), "b1": np.zeros((N, M)),
        "a2": np.zeros((N, M)), "b2": np.zeros((N, M)),
        "k_star": np.zeros(N, dtype=np.int64),
        "c_star": np.zeros(N, dtype=np.int64),
        "cur_arm": np.zeros(N, dtype=np.int64),
        "cur_sf": np.zeros(N, dtype=np.int64),
        # player state (q-learning)
        "q_idle": np.zeros((N, K * M)), "q_busy": np.zeros((N, M)),
        "q_state": np.zeros(N, dtype=np.int64),
        "q_last": np.asarray([n % K for n in range(N)], dtype=np.int64),
        "q_ptbl": np.zeros(N, dtype=np.int64),
        "q_pidx": np.zeros(N, dtype=np.int64),
        "q_reward": np.zeros(N),
        # outputs
        "w": metrics.w,
        "cum_player": metrics.cum_player,
        "thr_player": metrics.thr_player,
        "realized_regret": metrics.realized_regret,
        "grid": np.asarray(metrics.grid, dtype=np.int64),
        "epoch_ends": np.asarray(metrics.epoch_ends, dtype=np.int64),
        "pseudo": pseudo,
        "w_epochs": w_epochs,
        "counters": counters,
        "cum_real": cum_real,
        # trace buffers
        "tr_slot": tr.slot if trace_on else dummy64,
        "tr_player": tr.player if trace_on else dummy32,
        "tr_pattern": tr.pattern if trace_on else dummy8,
        "tr_ris": tr.ris if trace_on else dummy32,
        "tr_sf": tr.sf if trace_on else dummy32,
        "tr_collision": tr.collision if trace_on else dummy8,
        "tr_success": tr.success if trace_on else dummy8,
        "tr_reward": tr.reward if trace_on else dummyf,
        # generators (capsules looked up inside the kernel)
        "occ_rng": occ_rng, "fb_rng": fb_rng, "opt_rng": opt_rng,
        "player_rngs": list(player_rngs),
    }

    _kernels.run_slot_loop(args)

    metrics.collisions = int(counters[0])
    metrics.busy_fallbacks = int(counters[1])
    metrics.cum_real_self = float(cum_real[0])
    metrics.cum_real_opt = float(cum_real[1])
    metrics.pseudo_regret = [float(x) for x in pseudo]
    metrics.w_epochs = [w_epochs[e].copy() for e in range(E)]
    if trace_on:
        tr.n = horizon * N
