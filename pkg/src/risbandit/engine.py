"""Discrete-time simulation engine.

Each slot: surfaces toggle busy/vacant, every player picks a surface/SF (or
direct transmission), same-surface reflected transmissions collide, feedback
comes from the success-probability oracle (or from per-slot channel samples
with full_channel), learners update, metrics accumulate.

Stream discipline per trial (PCG64 generators spawned from
SeedSequence(seed, spawn_key=(trial,)) in this order: occ, fb, opt, setup,
then one per player). Per slot, in this order:
  1. occupancy: K uniforms from occ, surface order
  2. counterfactual optimum: per player from opt, player order; oracle mode
     1 uniform each, full_channel 2 normals reflected / 3 direct
  3. arm selection: player streams, player order (skipped for out-of-turn
     clustered devices)
  4. direct-SF selection for blocked or out-of-turn players, player order
  5. feedback: per player from fb, player order; oracle mode 1 uniform each
     regardless of outcome, full_channel 2 normals per non-collided
     reflected transmission, 3 per direct, none for collided
  6. learner updates, player order (game transitions may draw from the
     player's own stream)
Results are reduced in trial order, so worker parallelism never changes
any output.
"""
import math
from dataclasses import dataclass, replace

import numpy as np

from .bandit import EpochSchedule
from .channel import estimate_success_probs, sample_direct_power, sample_ris_power
from .clustering import cluster_ranks, kmeans_xy
from .policies import hungarian_assign, make_player
from .scenario import sample_device_positions

SUCCESS = "success"
FAILURE = "failure"
COLLISION = "collision"


class OccupancyProcess:
    """Independent per-surface busy flags, one uniform per surface per slot."""

    def __init__(self, active_probs):
        self.probs = tuple(float(p) for p in active_probs)

    def sample(self, rng):
        return [rng.random() < p for p in self.probs]


@dataclass(frozen=True)
class SlotOutcome:
    """One player's resolved slot (pattern 1 = reflected, 2 = direct).

    For pattern 2, ris is the blocked target of a busy fallback and -1 for a
    deliberate direct transmission. reward is the expected rate of the
    transmitted arm in Mbit/s, zero on collision.
    """

    slot: int
    player: int
    pattern: int
    ris: int
    sf: int
    result: str
    reward: float


class TraceBuffer:
    """Preallocated per-player-slot event log, fillable by either backend."""

    def __init__(self, horizon, n_players):
        size = horizon * n_players
        self.slot = np.zeros(size, dtype=np.int64)
        self.player = np.zeros(size, dtype=np.int32)
        self.pattern = np.zeros(size, dtype=np.int8)
        self.ris = np.zeros(size, dtype=np.int32)
        self.sf = np.zeros(size, dtype=np.int32)
        self.collision = np.zeros(size, dtype=np.int8)
        self.success = np.zeros(size, dtype=np.int8)
        self.reward = np.zeros(size)
        self.n = 0

    def push(self, slot, player, pattern, ris, sf, collision, success, reward):
        i = self.n
        self.slot[i] = slot
        self.player[i] = player
        self.pattern[i] = pattern
        self.ris[i] = ris
        self.sf[i] = sf
        self.collision[i] = collision
        self.success[i] = success
        self.reward[i] = reward
        self.n = i + 1

    def outcomes(self):
        """Rows as SlotOutcome objects (tests and pretty-printing)."""
        for i in range(self.n):
            if self.collision[i]:
                result = COLLISION
            else:
                result = SUCCESS if self.success[i] else FAILURE
            yield SlotOutcome(int(self.slot[i]), int(self.player[i]),
                              int(self.pattern[i]), int(self.ris[i]),
                              int(self.sf[i]), result, float(self.reward[i]))


def resolve_slot(intents, busy):
    """Classify each intent: (pattern, eta) per player.

    intents are (surface, sf) pairs, surface -1 meaning deliberate direct
    transmission. A reflected attempt on an occupied surface becomes
    pattern 2; two or more reflected attempts on the same vacant surface
    all collide (eta 0).
    """
    counts = {}
    for k, _ in intents:
        if k >= 0 and not busy[k]:
            counts[k] = counts.get(k, 0) + 1
    patterns = []
    etas = []
    for k, _ in intents:
        if k < 0 or busy[k]:
            patterns.append(2)
            etas.append(0)
        else:
            patterns.append(1)
            etas.append(0 if counts[k] >= 2 else 1)
    return patterns, etas


def build_time_grid(horizon, epoch_ends, points=512):
    """Slot indices to snapshot: ~evenly spaced plus every epoch end and T."""
    base = np.linspace(1, horizon, min(points, horizon)).round().astype(np.int64)
    grid = np.union1d(np.union1d(base, np.asarray(epoch_ends, dtype=np.int64)),
                      np.asarray([horizon], dtype=np.int64))
    return grid[(grid >= 1) & (grid <= horizon)]


def compute_pseudo_regret(w, mu_mbps, mu_direct_mbps, assignment):
    """Expected-shortfall regret from pull counts.

    Reflected pulls are charged against the player's centralized-assignment
    value, direct pulls against its best direct rate; w rows hold the K*M
    reflected arms followed by the M direct arms.
    """
    n, nk, nm = mu_mbps.shape
    total = 0.0
    for p in range(n):
        bench1 = float(assignment.per_player[p])
        bench2 = float(np.max(mu_direct_mbps[p]))
        # accumulate term by term in arm order so the compiled backend's
        # sequential sum produces the identical float
        for k in range(nk):
            for m in range(nm):
                total += w[p, k * nm + m] * (bench1 - mu_mbps[p, k, m])
        for m in range(nm):
            total += w[p, nk * nm + m] * (bench2 - mu_direct_mbps[p, m])
    return total


class MetricsLedger:
    """Per-slot accumulation of every series a trial reports.

    Throughput credits the expected rate of the transmitted arm (zero on
    collision); the realized series credit rate * success from the actual
    feedback draws, mirrored by the counterfactual optimum run.
    """

    def __init__(self, n_players, n_ris, n_sf, mu_mbps, mu_direct_mbps,
                 rates_mbps, assignment, grid, epoch_ends, trace, horizon=0):
        self.N, self.K, self.M = n_players, n_ris, n_sf
        self.mu = mu_mbps
        self.mu_direct = mu_direct_mbps
        self.rates = rates_mbps
        self.assignment = assignment
        self.grid = grid
        self.epoch_ends = np.asarray(epoch_ends, dtype=np.int64)
        self.w = np.zeros((n_players, n_ris * n_sf + n_sf), dtype=np.int64)
        self.cum_player = np.zeros(n_players)
        self.cum_real_self = 0.0
        self.cum_real_opt = 0.0
        self.collisions = 0
        self.busy_fallbacks = 0
        self.thr_player = np.zeros((n_players, len(grid)))
        self.realized_regret = np.zeros(len(grid))
        self._gi = 0
        self.w_epochs = []
        self.pseudo_regret = []
        self.trace = TraceBuffer(horizon, n_players) if trace else None

    def record(self, slot, player, pattern, ris, sf, eta, success):
        """Account one player's resolved slot (slot is 1-based)."""
        collision = 0
        if pattern == 1:
            self.w[player, ris * self.M + sf] += 1
            if eta == 1:
                reward = self.mu[player, ris, sf]
                self.cum_real_self += self.rates[sf] * success
            else:
                reward = 0.0
                self.collisions += 1
                collision = 1
        else:
            self.w[player, self.K * self.M + sf] += 1
            reward = self.mu_direct[player, sf]
            self.cum_real_self += self.rates[sf] * success
            if ris >= 0:
                self.busy_fallbacks += 1
        self.cum_player[player] += reward
        if self.trace is not None:
            self.trace.push(slot, player, pattern, ris, sf, collision,
                            int(success > 0), reward)

    def record_optimal(self, realized_mbps):
        self.cum_real_opt += realized_mbps

    def end_slot(self, slot):
        """Snapshot series at grid points and epoch boundaries (slot 1-based)."""
        if self._gi < len(self.grid) and slot == self.grid[self._gi]:
            self.thr_player[:, self._gi] = self.cum_player / slot
            self.realized_regret[self._gi] = self.cum_real_opt - self.cum_real_self
            self._gi += 1
        e = len(self.w_epochs)
        if e < len(self.epoch_ends) and slot == self.epoch_ends[e]:
            self.w_epochs.append(self.w.copy())
            self.pseudo_regret.append(
                compute_pseudo_regret(self.w, self.mu, self.mu_direct, self.assignment))


@dataclass(frozen=True)
class TrialConfig:
    """Everything one trial needs; picklable for worker processes."""

    scenario: object
    policy: object            # PolicySpec
    table: object             # SuccessProbTable, or None to estimate per trial
    seed: int
    trial_index: int
    epochs: int
    full_channel: bool = False
    trace: bool = False
    oracle_trials: int = 100_000


@dataclass
class TrialResult:
    grid: np.ndarray
    thr_player: np.ndarray        # (N, G) time-averaged Mbit/s
    realized_regret: np.ndarray   # (G,)
    pseudo_regret: np.ndarray     # (E,) at epoch ends
    w_final: np.ndarray           # (N, K*M + M)
    w_epochs: np.ndarray          # (E, N, K*M + M)
    top_arm_final_epoch: np.ndarray  # (N, 3): pattern, surface, sf
    collisions: int
    busy_fallbacks: int
    horizon: int
    epoch_ends: np.ndarray
    flagged_per_slot: int         # devices in full-learner mode (cluster runs)
    trace: list | None

    @property
    def thr_sum(self):
        return self.thr_player.sum(axis=0)


def _top_arms(w_epochs, n_players, n_ris, n_sf):
    """Most-pulled arm of the final epoch per player, as (pattern, surface, sf)."""
    last = w_epochs[-1] - (w_epochs[-2] if len(w_epochs) > 1 else 0)
    out = np.zeros((n_players, 3), dtype=np.int64)
    for p in range(n_players):
        idx = int(np.argmax(last[p]))
        if idx < n_ris * n_sf:
            out[p] = (1, idx // n_sf, idx % n_sf)
        else:
            out[p] = (2, -1, idx - n_ris * n_sf)
    return out


def run_trial(config):
    """Simulate one trial of one policy; see the module docstring for the
    slot-level ordering contract shared with the compiled backend."""
    from .backend import active_backend, run_trial_compiled

    scenario = config.scenario
    if config.epochs != scenario.algo.epochs:
        scenario = replace(scenario, algo=replace(scenario.algo, epochs=config.epochs))

    ss = np.random.SeedSequence(config.seed, spawn_key=(config.trial_index,))
    children = ss.spawn(4 + scenario.n_devices)
    occ_rng, fb_rng, opt_rng, setup_rng = (
        np.random.Generator(np.random.PCG64(c)) for c in children[:4])
    player_rngs = [np.random.Generator(np.random.PCG64(c)) for c in children[4:]]

    if scenario.random_devices:
        scenario = scenario.with_devices(sample_device_positions(scenario, setup_rng))
        table = estimate_success_probs(scenario, config.oracle_trials, rng=setup_rng)
    else:
        table = config.table
        if table is None:
            table = estimate_success_probs(scenario, config.oracle_trials, rng=setup_rng)

    N, K, M = scenario.n_devices, scenario.n_ris, scenario.n_sf
    mu = table.mu / 1e6
    mu_direct = table.mu_direct / 1e6
    rates_mbps = table.rates / 1e6
    assignment = hungarian_assign(mu, mu_direct)

    schedule = EpochSchedule.from_algo(scenario.algo)
    horizon = schedule.total_slots
    epoch_ends = schedule.epoch_ends()
    grid = build_time_grid(horizon, epoch_ends)

    cluster_mode = config.policy.kind == "epoch" and N > K
    if cluster_mode:
        xy = np.array([[d.x, d.y] for d in scenario.devices])
        labels, _ = kmeans_xy(xy, K, setup_rng,
                              scenario.algo.kmeans_iter_cap, scenario.algo.kmeans_tol)
        ranks, sizes = cluster_ranks(labels)
        flagged_per_slot = len(np.unique(labels))
    else:
        ranks = np.zeros(N, dtype=np.int64)
        sizes = np.ones(N, dtype=np.int64)
        flagged_per_slot = N

    players = [make_player(config.policy, scenario, assignment, n, horizon)
               for n in range(N)]

    metrics = MetricsLedger(N, K, M, mu, mu_direct, rates_mbps, assignment,
                            grid, epoch_ends, config.trace, horizon)

    if active_backend() == "compiled":
        run_trial_compiled(scenario, config, table, assignment, metrics,
                           ranks, sizes, cluster_mode,
                           occ_rng, fb_rng, opt_rng, player_rngs)
    else:
        _python_slot_loop(scenario, config, table, assignment, players, metrics,
                          ranks, sizes, cluster_mode,
                          occ_rng, fb_rng, opt_rng, player_rngs)

    return TrialResult(
        grid=grid,
        thr_player=metrics.thr_player,
        realized_regret=metrics.realized_regret,
        pseudo_regret=np.asarray(metrics.pseudo_regret),
        w_final=metrics.w,
        w_epochs=np.asarray(metrics.w_epochs),
        top_arm_final_epoch=_top_arms(metrics.w_epochs, N, K, M),
        collisions=metrics.collisions,
        busy_fallbacks=metrics.busy_fallbacks,
        horizon=horizon,
        epoch_ends=epoch_ends,
        flagged_per_slot=flagged_per_slot,
        trace=metrics.trace,
    )


def prepare_table(scenario, trials, seed):
    """One success-probability table for every trial of a fixed-device
    scenario; None when device positions are drawn per trial."""
    if scenario.random_devices:
        return None
    return estimate_success_probs(scenario, trials, rng=np.random.default_rng(seed))


@dataclass
class AggregateResult:
    """Across-trial summary of one policy on one scenario."""

    policy: str
    reps: int
    horizon: int
    grid: np.ndarray
    epoch_ends: np.ndarray
    mean_thr_sum: np.ndarray        # (G,) mean over trials of sum over players
    stderr_thr_sum: np.ndarray      # (G,)
    mean_thr_player: np.ndarray     # (N, G)
    mean_realized_regret: np.ndarray   # (G,)
    mean_pseudo_regret: np.ndarray  # (E,)
    finals: np.ndarray              # (R,) final time-averaged sum throughput
    pseudo_finals: np.ndarray       # (R,)
    top_arms: np.ndarray            # (R, N, 3) pattern, surface, sf
    conv_distinct_frac: float       # trials where every player settled on its
                                    # own surface with the top-rate SF
    collisions_mean: float
    busy_fallbacks_mean: float
    flagged_per_slot: int
    trace: TraceBuffer | None

    @property
    def final_thr_mean(self):
        return float(np.mean(self.finals))

    @property
    def final_thr_stderr(self):
        if len(self.finals) < 2:
            return 0.0
        return float(np.std(self.finals, ddof=1) / math.sqrt(len(self.finals)))


def _converged_distinct(top):
    """All players on reflected arms, pairwise-distinct surfaces, SF index 0."""
    if (top[:, 0] != 1).any() or (top[:, 2] != 0).any():
        return False
    surfaces = top[:, 1]
    return len(set(surfaces.tolist())) == len(surfaces)


def aggregate_trials(policy_name, results):
    """Reduce per-trial results (in trial order) to an AggregateResult."""
    thr_sum = np.stack([r.thr_sum for r in results])
    thr_player = np.stack([r.thr_player for r in results])
    realized = np.stack([r.realized_regret for r in results])
    pseudo = np.stack([r.pseudo_regret for r in results])
    finals = thr_sum[:, -1].copy()
    top_arms = np.stack([r.top_arm_final_epoch for r in results])
    conv = np.array([_converged_distinct(t) for t in top_arms])
    reps = len(results)
    if reps < 2:
        stderr = np.zeros_like(thr_sum[0])
    else:
        stderr = np.std(thr_sum, axis=0, ddof=1) / math.sqrt(reps)
    return AggregateResult(
        policy=policy_name,
        reps=reps,
        horizon=results[0].horizon,
        grid=results[0].grid,
        epoch_ends=results[0].epoch_ends,
        mean_thr_sum=thr_sum.mean(axis=0),
        stderr_thr_sum=stderr,
        mean_thr_player=thr_player.mean(axis=0),
        mean_realized_regret=realized.mean(axis=0),
        mean_pseudo_regret=pseudo.mean(axis=0),
        finals=finals,
        pseudo_finals=pseudo[:, -1].copy(),
        top_arms=top_arms,
        conv_distinct_frac=float(conv.mean()),
        collisions_mean=float(np.mean([r.collisions for r in results])),
        busy_fallbacks_mean=float(np.mean([r.busy_fallbacks for r in results])),
        flagged_per_slot=results[0].flagged_per_slot,
        trace=results[0].trace,
    )


def run_monte_carlo(scenario, policy, reps, seed, table=None, epochs=None,
                    full_channel=False, trace=False, jobs=1,
                    oracle_trials=100_000):
    """Independent trials of one policy, reduced in trial order.

    Trials are seeded SeedSequence(seed, spawn_key=(trial,)), so the trial
    set is identical for every policy sharing the seed and unchanged by the
    worker count. A trace is kept for trial 0 only.
    """
    epochs = scenario.algo.epochs if epochs is None else int(epochs)
    configs = [
        TrialConfig(scenario=scenario, policy=policy, table=table, seed=seed,
                    trial_index=i, epochs=epochs, full_channel=full_channel,
                    trace=bool(trace) and i == 0, oracle_trials=oracle_trials)
        for i in range(reps)
    ]
    if jobs > 1 and reps > 1:
        from concurrent.futures import ProcessPoolExecutor

        chunk = max(1, reps // (jobs * 4))
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(run_trial, configs, chunksize=chunk))
    else:
        results = [run_trial(c) for c in configs]
    return aggregate_trials(policy.name, results)


def _python_slot_loop(scenario, config, table, assignment, players, metrics,
                      ranks, sizes, cluster_mode,
                      occ_rng, fb_rng, opt_rng, player_rngs):
    """Reference implementation of the slot loop (pure Python)."""
    N, K, M = scenario.n_devices, scenario.n_ris, scenario.n_sf
    pa = scenario.ris_active_prob
    theta = table.theta
    theta_direct = table.theta_direct
    rates_mbps = table.rates / 1e6
    thresholds = np.asarray(scenario.sf_table.thresholds)
    radio = scenario.radio
    denom = radio.interference_plus_noise
    tx = radio.tx_power
    full = config.full_channel
    horizon = EpochSchedule.from_algo(scenario.algo).total_slots
    qlearning = config.policy.kind == "qlearning"

    opt_ris = assignment.ris
    opt_sf = assignment.sf
    opt_dsf = assignment.direct_sf

    for t in range(horizon):
        slot = t + 1
        busy = [occ_rng.random() < p for p in pa]

        # counterfactual optimum on the shared occupancy, its own stream
        opt_gain = 0.0
        for n in range(N):
            k = opt_ris[n]
            if k >= 0 and not busy[k]:
                m = opt_sf[n]
                if full:
                    s = table.los_sum[n, k]
                    p2 = sample_ris_power(s.real, s.imag, table.nlos_var[n, k], opt_rng)
                    x = (tx * p2 / denom) >= thresholds[m]
                else:
                    x = opt_rng.random() < theta[n, k, m]
            else:
                m = opt_dsf[n]
                if full:
                    p2 = sample_direct_power(table.shadow_mu[n], table.shadow_sigma, opt_rng)
                    x = (tx * p2 / denom) >= thresholds[m]
                else:
                    x = opt_rng.random() < theta_direct[n, m]
            if x:
                opt_gain += rates_mbps[m]
        metrics.record_optimal(opt_gain)

        # selections
        flagged = [(t % sizes[n]) == ranks[n] for n in range(N)] if cluster_mode \
            else [True] * N
        intents = []
        for n, p in enumerate(players):
            intents.append(p.select(player_rngs[n]) if flagged[n] else (-2, 0))

        patterns = [0] * N
        etas = [0] * N
        live = [i for i in range(N) if flagged[i]]
        pat_live, eta_live = resolve_slot([intents[i] for i in live], busy)
        for j, i in enumerate(live):
            patterns[i], etas[i] = pat_live[j], eta_live[j]

        # direct-SF choices for blocked targets and out-of-turn devices
        sfs = [0] * N
        riss = [0] * N
        for n, p in enumerate(players):
            k, sf = intents[n]
            if not flagged[n]:
                patterns[n] = 2
                riss[n] = -1
                sfs[n] = p.busy_select(player_rngs[n])
            elif patterns[n] == 2:
                riss[n] = k  # -1 for deliberate direct, else the blocked target
                sfs[n] = p.busy_select(player_rngs[n]) if k >= 0 else sf
            else:
                riss[n] = k
                sfs[n] = sf

        # feedback draws, shared stream, player order
        succ = [False] * N
        for n in range(N):
            m = sfs[n]
            if patterns[n] == 1:
                if etas[n] == 1:
                    k = riss[n]
                    if full:
                        s = table.los_sum[n, k]
                        p2 = sample_ris_power(s.real, s.imag, table.nlos_var[n, k], fb_rng)
                        succ[n] = (tx * p2 / denom) >= thresholds[m]
                    else:
                        succ[n] = fb_rng.random() < theta[n, k, m]
                elif not full:
                    fb_rng.random()  # stream stays aligned across outcomes
            else:
                if full:
                    p2 = sample_direct_power(table.shadow_mu[n], table.shadow_sigma, fb_rng)
                    succ[n] = (tx * p2 / denom) >= thresholds[m]
                else:
                    succ[n] = fb_rng.random() < theta_direct[n, m]

        # learner updates and accounting
        for n, p in enumerate(players):
            if patterns[n] == 1:
                p.feedback_pattern1(etas[n], 1.0 if succ[n] else 0.0, player_rngs[n])
            else:
                p.feedback_pattern2(1.0 if succ[n] else 0.0)
            if qlearning:
                p.observe(busy[p.last_target])
            metrics.record(slot, n, patterns[n], riss[n], sfs[n], etas[n],
                           1.0 if succ[n] else 0.0)
            if flagged[n]:
                p.end_slot(player_rngs[n])
        metrics.end_slot(slot)
