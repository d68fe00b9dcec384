"""Baseline policies and the policy registry.

Every player object exposes the same slot protocol the engine drives:
select(rng) -> (surface or -1 for direct, sf), busy_select(rng) -> sf when
the chosen surface turns out occupied, feedback_pattern1(eta, x, rng) /
feedback_pattern2(x), end_slot(rng), and a done flag. Draw discipline per
policy is fixed and mirrored by the compiled backend.
"""
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .bandit import E2BoostPlayerState, EpochSchedule, advance, game_step, rand_index

NEG = -1e18  # blocks another player's personal direct column, keeps scipy feasible


@dataclass(frozen=True)
class AssignmentMatrix:
    """Centralized optimum: per-player surface (-1 = direct), SF, and values.

    direct_sf is each player's genie fallback SF for slots where its
    assigned surface is occupied.
    """

    ris: np.ndarray
    sf: np.ndarray
    direct_sf: np.ndarray
    per_player: np.ndarray
    value: float


def genie_optimal_sf(mu_direct_row):
    """Best direct SF for one player given its true expected rates."""
    return int(np.argmax(mu_direct_row))


def hungarian_assign(mu, mu_direct):
    """Maximum-throughput one-surface-per-player assignment.

    mu has shape (N, K, M), mu_direct (N, M). Each surface column is
    pre-reduced to its best SF; every player also gets a personal direct
    column so the problem stays feasible when players outnumber surfaces.
    """
    mu = np.asarray(mu, dtype=float)
    mu_direct = np.asarray(mu_direct, dtype=float)
    n, k = mu.shape[0], mu.shape[1]
    gain = np.full((n, k + n), NEG)
    gain[:, :k] = mu.max(axis=2)
    for i in range(n):
        gain[i, k + i] = mu_direct[i].max()
    rows, cols = linear_sum_assignment(gain, maximize=True)
    ris = np.full(n, -1, dtype=np.int64)
    sf = np.zeros(n, dtype=np.int64)
    per = np.zeros(n)
    direct_sf = np.array([genie_optimal_sf(mu_direct[i]) for i in range(n)],
                         dtype=np.int64)
    for r, c in zip(rows, cols):
        if c < k:
            ris[r] = c
            sf[r] = int(np.argmax(mu[r, c]))
            per[r] = mu[r, c, sf[r]]
        else:
            sf[r] = direct_sf[r]
            per[r] = mu_direct[r, sf[r]]
    return AssignmentMatrix(ris=ris, sf=sf, direct_sf=direct_sf, per_player=per,
                            value=float(per.sum()))


def occupancy_aware_value(assignment, mu, mu_direct, ris_active_prob):
    """Expected sum rate of the optimal policy once surface occupancy is folded in.

    A player assigned surface k earns its reflected rate only while k is
    vacant and falls back to its best direct rate otherwise.
    """
    total = 0.0
    for n in range(len(assignment.ris)):
        k = assignment.ris[n]
        direct = float(np.max(mu_direct[n]))
        if k < 0:
            total += direct
        else:
            pa = ris_active_prob[k]
            total += (1.0 - pa) * assignment.per_player[n] + pa * direct
    return total


@dataclass(frozen=True)
class QTable:
    """Q values of the two occupancy states: joint arms when the last sensed
    surface was idle, direct SFs when it was busy."""

    idle: np.ndarray  # (K*M,)
    busy: np.ndarray  # (M,)


class QLearningPlayer:
    """Tabular Q-learning over (occupancy state, arm) with decaying exploration.

    State is the busy flag of the most recently targeted surface. In the
    idle state the player picks a joint (surface, SF) arm; in the busy state
    it transmits directly with an SF from the busy table. The pending update
    completes one slot later, once the follow-up occupancy of the same
    surface is observed.
    """

    def __init__(self, n_ris, n_sf, rates_mbps, horizon, lr=0.1, discount=0.9,
                 eps_start=0.1, eps_final=0.01, init_target=0):
        self.K = n_ris
        self.M = n_sf
        self.rates = np.asarray(rates_mbps, dtype=float)
        self.horizon = int(horizon)
        self.lr = lr
        self.discount = discount
        self.eps_start = eps_start
        self.eps_final = eps_final
        self.table = QTable(np.zeros(n_ris * n_sf), np.zeros(n_sf))
        self.state_busy = False
        self.last_target = int(init_target)
        self.t = 0
        self.done = False
        self.cur_sf = 0
        self._pending = (0, 0)
        self._reward = 0.0

    def epsilon(self):
        frac = self.t / max(self.horizon - 1, 1)
        return self.eps_start + (self.eps_final - self.eps_start) * frac

    def select(self, rng):
        coin = rng.random()
        explore = coin < self.epsilon()
        if self.state_busy:
            m = rand_index(rng, self.M) if explore else int(np.argmax(self.table.busy))
            self._pending = (1, m)
            self.cur_sf = m
            return -1, m
        a = rand_index(rng, self.K * self.M) if explore else int(np.argmax(self.table.idle))
        self._pending = (0, a)
        self.last_target = a // self.M
        self.cur_sf = a % self.M
        return self.last_target, self.cur_sf

    def busy_select(self, rng):
        # forced direct keeps the SF already chosen; no draw
        return self.cur_sf

    def feedback_pattern1(self, eta, success, rng):
        self._reward = self.rates[self.cur_sf] * eta * success

    def feedback_pattern2(self, success):
        self._reward = self.rates[self.cur_sf] * success

    def observe(self, target_busy):
        """Finish the delayed update with the follow-up occupancy observation."""
        follow = float(np.max(self.table.busy if target_busy else self.table.idle))
        which, idx = self._pending
        table = self.table.busy if which == 1 else self.table.idle
        table[idx] += self.lr * (self._reward + self.discount * follow - table[idx])
        self.state_busy = bool(target_busy)

    def end_slot(self, rng):
        self.t += 1


class RandomPlayer:
    """Uniform joint arm every slot; uniform direct SF when blocked."""

    def __init__(self, n_ris, n_sf):
        self.K = n_ris
        self.M = n_sf
        self.done = False
        self.cur_sf = 0

    def select(self, rng):
        a = rand_index(rng, self.K * self.M)
        self.cur_sf = a % self.M
        return a // self.M, self.cur_sf

    def busy_select(self, rng):
        self.cur_sf = rand_index(rng, self.M)
        return self.cur_sf

    def feedback_pattern1(self, eta, success, rng):
        pass

    def feedback_pattern2(self, success):
        pass

    def end_slot(self, rng):
        pass


class OptimalPlayer:
    """Plays its centralized assignment every slot; genie SF when blocked."""

    def __init__(self, ris, sf, genie_sf):
        self.ris = int(ris)
        self.sf = int(sf)
        self.genie_sf = int(genie_sf)
        self.done = False
        self.cur_sf = self.sf if ris >= 0 else self.genie_sf

    def select(self, rng):
        self.cur_sf = self.sf if self.ris >= 0 else self.genie_sf
        return self.ris, self.cur_sf

    def busy_select(self, rng):
        self.cur_sf = self.genie_sf
        return self.genie_sf

    def feedback_pattern1(self, eta, success, rng):
        pass

    def feedback_pattern2(self, success):
        pass

    def end_slot(self, rng):
        pass


def got_player_step(state, rng):
    """Game-phase arm choice of the joint-arm variant (shared machinery)."""
    return game_step(state, rng)


def got_advance(state, rng):
    """Phase bookkeeping of the joint-arm variant (shared machinery)."""
    advance(state, rng)


@dataclass(frozen=True)
class PolicySpec:
    """Parsed policy name: family plus the learner switches."""

    name: str
    kind: str              # epoch | qlearning | random | optimal
    joint_arms: bool = False
    thompson: bool = True
    fixed_eps: float | None = None


def parse_policy(name):
    if name == "e2boost":
        return PolicySpec(name, "epoch")
    if name == "e2boost-no-ts":
        return PolicySpec(name, "epoch", joint_arms=True, thompson=False)
    if name == "got":
        return PolicySpec(name, "epoch", joint_arms=True, thompson=False, fixed_eps=1.0)
    if name.startswith("e2boost-fixed-eps:"):
        eps = float(name.split(":", 1)[1])
        if not 0.0 <= eps <= 1.0:
            raise ValueError(f"exploration rate {eps} outside [0, 1]")
        return PolicySpec(name, "epoch", fixed_eps=eps)
    if name in ("qlearning", "random", "optimal"):
        return PolicySpec(name, name)
    raise ValueError(
        f"unknown policy {name!r}; choose e2boost, e2boost-no-ts, "
        "e2boost-fixed-eps:<v>, got, qlearning, random or optimal"
    )


def make_player(spec, scenario, assignment, player_index, horizon):
    """Instantiate one player of the given policy for one trial."""
    K, M = scenario.n_ris, scenario.n_sf
    rates_mbps = np.asarray(scenario.sf_table.rates) / 1e6
    if spec.kind == "epoch":
        schedule = EpochSchedule.from_algo(scenario.algo)
        return E2BoostPlayerState(
            K, M, np.asarray(scenario.sf_table.rates), schedule,
            scenario.algo.game_epsilon, scenario.algo.game_nu,
            joint_arms=spec.joint_arms, thompson=spec.thompson,
            fixed_eps=spec.fixed_eps,
        )
    if spec.kind == "qlearning":
        return QLearningPlayer(
            K, M, rates_mbps, horizon,
            lr=scenario.algo.qlearn_lr, discount=scenario.algo.qlearn_discount,
            eps_start=scenario.algo.qlearn_eps_start,
            eps_final=scenario.algo.qlearn_eps_final,
            init_target=player_index % K,
        )
    if spec.kind == "random":
        return RandomPlayer(K, M)
    if spec.kind == "optimal":
        return OptimalPlayer(assignment.ris[player_index], assignment.sf[player_index],
                             genie_optimal_sf_for(assignment, player_index))
    raise ValueError(f"unhandled policy kind {spec.kind}")


def genie_optimal_sf_for(assignment, player_index):
    """Direct-fallback SF the assignment computed for this player."""
    return int(assignment.direct_sf[player_index])
