"""Two-stage bandit learner: surface selection by perturbed game dynamics,
spreading-factor selection by Thompson sampling, on an epoch schedule.

One player state covers the whole policy family through three switches:
arms are either the K surfaces (stage two picks the SF separately) or the
K*M joint (surface, SF) pairs; Thompson sampling is on or off; the
exploration rate is either adapted from the Wasserstein distance between
consecutive arm-frequency PMFs or held fixed.

RNG discipline (identical in both backends, do not reorder):
  phase 1 select : 1 coin; +1 index if exploring; +1 SF index if epoch 1
                   (surface-arm mode with M > 1 only)
  phase 2 select : 1 coin if content (+1 index if experimenting) or
                   1 index if discontent; +1 SF index as in phase 1
  phase 3 select : M Beta draws (SF posterior, arm order) if sampling is on,
                   none otherwise
  busy fallback  : M Beta draws (direct posterior) if sampling is on
  game feedback  : 1 coin only when the acceptance probability is strictly
                   inside (0, 1)
  phase 1 -> 2   : 1 index when the baseline has no recorded ancestor
Uniform indices are drawn as int(random() * n) and n == 1 consumes nothing.
"""
import math
from dataclasses import dataclass, field

import numpy as np

CONTENT = 0
DISCONTENT = 1

PHASE_EXPLORE = 0
PHASE_GAME = 1
PHASE_EXPLOIT = 2


def rand_index(rng, n):
    """Uniform index in [0, n); no draw when there is only one choice."""
    if n <= 1:
        return 0
    i = int(rng.random() * n)
    return n - 1 if i >= n else i


def pmf_of_counts(counts):
    """Normalize a count vector; None if it is all zero."""
    # summed term by term: the compiled backend accumulates in index order
    # and this total feeds the exploration rate, which must match bit for bit
    total = 0.0
    for c in np.asarray(counts, dtype=float):
        total += float(c)
    if total <= 0.0:
        return None
    return np.asarray(counts, dtype=float) / total


def w1_distance(p, q):
    """1-D Wasserstein distance between two PMFs on the arm indices.

    Equals the sum of absolute CDF differences, accumulated in index order
    (same note as pmf_of_counts).
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    cum = 0.0
    acc = 0.0
    for i in range(len(p)):
        cum += float(p[i]) - float(q[i])
        acc += abs(cum)
    return acc


def adapt_epsilon(f_now, f_prev):
    """Exploration rate for the next epoch: W1 between frequency PMFs, capped at 1."""
    p = pmf_of_counts(f_now)
    q = pmf_of_counts(f_prev)
    if p is None or q is None:
        return 1.0
    return min(1.0, w1_distance(p, q))


class EpochSchedule:
    """Slot counts of the three phases over epochs 1..epochs.

    Phase lengths ceil(nu1 * z^delta), ceil(nu2 * z^delta), ceil(nu3 * 2^z):
    polynomial exploration and game phases, exponentially growing
    exploitation.
    """

    def __init__(self, epochs, nu1, nu2, nu3, delta=0.0):
        self.epochs = int(epochs)
        self.nu1 = nu1
        self.nu2 = nu2
        self.nu3 = nu3
        self.delta = delta

    @classmethod
    def from_algo(cls, algo):
        return cls(algo.epochs, algo.nu1, algo.nu2, algo.nu3, algo.delta)

    def phase_lengths(self, z):
        poly = float(z) ** self.delta
        return (math.ceil(self.nu1 * poly), math.ceil(self.nu2 * poly),
                math.ceil(self.nu3 * 2.0 ** z))

    def epoch_length(self, z):
        return sum(self.phase_lengths(z))

    @property
    def total_slots(self):
        return sum(self.epoch_length(z) for z in range(1, self.epochs + 1))

    def epoch_ends(self):
        """Cumulative slot index at the end of each epoch (1-based slot counts)."""
        out = []
        acc = 0
        for z in range(1, self.epochs + 1):
            acc += self.epoch_length(z)
            out.append(acc)
        return np.asarray(out, dtype=np.int64)


@dataclass
class Phase1Stats:
    """Collision-free transmission counts (v) and success sums (q) per arm."""

    v: np.ndarray
    q: np.ndarray

    @classmethod
    def zeros(cls, n_arms):
        return cls(np.zeros(n_arms), np.zeros(n_arms))

    def theta_hat(self):
        out = np.zeros_like(self.q)
        np.divide(self.q, self.v, out=out, where=self.v > 0)
        return out


@dataclass
class BetaPosterior:
    """Per-SF Beta posterior; sampling uses Beta(alpha+1, beta+1)."""

    alpha: np.ndarray
    beta: np.ndarray

    @classmethod
    def zeros(cls, n_sf):
        return cls(np.zeros(n_sf), np.zeros(n_sf))

    def mean(self):
        total = self.alpha + self.beta
        out = np.zeros_like(self.alpha)
        np.divide(self.alpha, total, out=out, where=total > 0)
        return out


def ts_select(posterior, rates, rng):
    """Thompson step: draw each arm's success probability, pick by expected rate.

    Scalar Beta calls in arm order keep the draw sequence identical to the
    compiled backend. A single arm is forced and consumes nothing, mirroring
    the index-draw shortcut.
    """
    if len(rates) == 1:
        return 0
    best, best_val = 0, -1.0
    for m in range(len(rates)):
        theta = rng.beta(posterior.alpha[m] + 1.0, posterior.beta[m] + 1.0)
        val = rates[m] * theta
        if val > best_val:
            best, best_val = m, val
    return best


def ts_update(posterior, sf, success):
    posterior.alpha[sf] += success
    posterior.beta[sf] += 1.0 - success


def best_sf(posterior, rates):
    """Exploitation SF: argmax rate * posterior mean (index 0 when all-zero)."""
    return int(np.argmax(rates * posterior.mean()))


@dataclass
class GameState:
    """Mood and baseline arm of the perturbed game dynamics."""

    mood: int = CONTENT
    baseline: int = 0


@dataclass
class FHistory:
    """Per-epoch content-play counts, indexed by epoch number (1-based)."""

    n_arms: int
    counts: dict = field(default_factory=dict)

    def new_epoch(self, z):
        self.counts[z] = np.zeros(self.n_arms)

    def record(self, z, arm):
        self.counts[z][arm] += 1.0

    def window_sum(self, z):
        """Counts summed over epochs z-floor(z/2) .. z."""
        total = np.zeros(self.n_arms)
        for j in range(z // 2 + 1):
            if (z - j) in self.counts:
                total += self.counts[z - j]
        return total


def best_ris(fhistory, z):
    """Game consensus arm: most content-played over the recent epoch window."""
    return int(np.argmax(fhistory.window_sum(z)))


def record_content_play(fhistory, z, arm, mood):
    if mood == CONTENT:
        fhistory.record(z, arm)


class E2BoostPlayerState:
    """Complete per-player learner state.

    joint_arms=False: arms are the K surfaces, SF learned by two Thompson
    posteriors (reflected and direct). joint_arms=True: arms are the K*M
    (surface, SF) pairs, utilities are scaled by rate_m / rate_1 so they,
    like success probabilities, live in [0, 1].
    fixed_eps=None adapts the exploration rate per epoch from the W1
    distance; a float freezes it for every epoch including the first.
    """

    def __init__(self, n_ris, n_sf, rates, schedule, game_epsilon, game_nu,
                 joint_arms=False, thompson=True, fixed_eps=None):
        self.K = int(n_ris)
        self.M = int(n_sf)
        self.rates = np.asarray(rates, dtype=float)
        self.schedule = schedule
        self.joint = bool(joint_arms)
        self.thompson = bool(thompson)
        self.fixed_eps = fixed_eps
        self.n_arms = self.K * self.M if self.joint else self.K
        # utility scale per arm: theta_hat (already in [0,1]) for surface arms,
        # theta_hat * rate_m / rate_1 for joint arms
        if self.joint:
            self.util_scale = np.tile(self.rates / self.rates[0], self.K)
        else:
            self.util_scale = np.ones(self.n_arms)

        self.game_explore = game_epsilon ** game_nu
        self.game_epsilon = game_epsilon

        self.z = 1
        self.phase = PHASE_EXPLORE
        self.slot_in_phase = 0
        self.lengths = schedule.phase_lengths(1)
        self.done = False

        self.eps = 1.0 if fixed_eps is None else float(fixed_eps)
        self.stats = Phase1Stats.zeros(self.n_arms)
        self.theta_hat = np.zeros(self.n_arms)
        self.u_max = 0.0
        self.game = GameState()
        self.fhist = FHistory(self.n_arms)
        self.game_last_choice = {}
        self.post1 = BetaPosterior.zeros(self.M)
        self.post2 = BetaPosterior.zeros(self.M)
        self.k_star = 0
        self.c_star = 0

        # set per slot by select(); consumed by the feedback methods
        self.cur_arm = 0
        self.cur_sf = 0

    def arm_components(self, arm):
        """(surface, SF) encoded by an arm index."""
        if self.joint:
            return arm // self.M, arm % self.M
        return arm, self.cur_sf

    def exploit_sf(self):
        """SF played when not sampling: learned c* or the joint winner's SF."""
        if self.joint:
            return self.k_star % self.M
        return self.c_star

    def _stage2_sf(self, rng):
        """Phase 1/2 SF rule for surface-arm mode: uniform in epoch 1, then c*."""
        if self.z == 1:
            return rand_index(rng, self.M)
        return self.c_star

    def select(self, rng):
        """Choose this slot's intended (surface, SF); see the module docstring
        for the exact draws consumed."""
        if self.phase == PHASE_EXPLORE:
            arm = phase1_select(self, rng)
            sf = self.arm_components(arm)[1] if self.joint else self._stage2_sf(rng)
        elif self.phase == PHASE_GAME:
            arm = game_step(self, rng)
            self.game_last_choice[self.z] = arm
            sf = self.arm_components(arm)[1] if self.joint else self._stage2_sf(rng)
        else:
            if self.thompson:
                sf = ts_select(self.post1, self.rates, rng)
                arm = self.k_star
            else:
                arm = self.k_star
                sf = self.arm_components(arm)[1]
        self.cur_arm = arm
        self.cur_sf = sf
        k = arm // self.M if self.joint else arm
        return k, sf

    def busy_select(self, rng):
        """Direct-transmission SF when the intended surface is occupied."""
        if self.thompson:
            sf = ts_select(self.post2, self.rates, rng)
        else:
            sf = self.exploit_sf()
        self.cur_sf = sf
        return sf

    def feedback_pattern1(self, eta, success, rng):
        """Account a reflected transmission: eta=0 on collision."""
        if self.phase == PHASE_EXPLORE:
            phase1_update(self, self.cur_arm, eta, success)
        elif self.phase == PHASE_GAME:
            record_content_play(self.fhist, self.z, self.cur_arm, self.game.mood)
            game_transition(self, self.cur_arm, eta, success, rng)
        else:
            if self.thompson and eta == 1:
                ts_update(self.post1, self.cur_sf, success)

    def feedback_pattern2(self, success):
        """Account a direct transmission (busy fallback in any phase)."""
        if self.thompson:
            ts_update(self.post2, self.cur_sf, success)

    def end_slot(self, rng):
        """Advance the phase/epoch cursor; runs boundary logic when a phase ends."""
        advance(self, rng)


def phase1_select(state, rng):
    """Epsilon-greedy arm: always spends the coin, index only when exploring."""
    coin = rng.random()
    if coin < state.eps:
        return rand_index(rng, state.n_arms)
    return state.k_star


def phase1_update(state, arm, eta, success):
    """Count only collision-free transmissions toward the success estimates."""
    if eta == 1:
        state.stats.v[arm] += 1.0
        state.stats.q[arm] += success


def game_step(state, rng):
    """Arm choice of the game phase: content players stick to the baseline
    with high probability, discontent players play uniformly."""
    if state.game.mood == CONTENT:
        coin = rng.random()
        if coin < state.game_explore:
            idx = rand_index(rng, state.n_arms - 1)
            return idx if idx < state.game.baseline else idx + 1
        return state.game.baseline
    return rand_index(rng, state.n_arms)


def game_transition(state, arm, eta, success, rng):
    """Mood/baseline update after a game-phase reflected transmission.

    No transition when a content player replayed its baseline with positive
    utility. Otherwise the player becomes content with probability
    (u / u_max) * eps^(u_max - u) and the played arm becomes the baseline
    either way. Degenerate utilities skip the coin: u <= 0 or u_max <= 0 is
    certain discontent, acceptance >= 1 certain content.
    """
    u = eta * state.theta_hat[arm] * state.util_scale[arm]
    if arm == state.game.baseline and u > 0.0 and state.game.mood == CONTENT:
        return
    state.game.baseline = arm
    if u <= 0.0 or state.u_max <= 0.0:
        state.game.mood = DISCONTENT
        return
    p = (u / state.u_max) * state.game_epsilon ** (state.u_max - u)
    if p >= 1.0:
        state.game.mood = CONTENT
        return
    coin = rng.random()
    state.game.mood = CONTENT if coin < p else DISCONTENT


def advance(state, rng):
    """Move one slot forward; handle phase and epoch boundaries."""
    state.slot_in_phase += 1
    if state.slot_in_phase < state.lengths[state.phase]:
        return
    state.slot_in_phase = 0

    if state.phase == PHASE_EXPLORE:
        state.theta_hat = state.stats.theta_hat()
        util = state.theta_hat * state.util_scale
        state.u_max = float(np.max(util))
        state.phase = PHASE_GAME
        state.game.mood = CONTENT
        state.fhist.new_epoch(state.z)
        ref = state.z - state.z // 2 - 1
        if ref in state.game_last_choice:
            state.game.baseline = state.game_last_choice[ref]
        else:
            state.game.baseline = rand_index(rng, state.n_arms)
    elif state.phase == PHASE_GAME:
        state.k_star = best_ris(state.fhist, state.z)
        if state.fixed_eps is None and state.z >= 2:
            state.eps = adapt_epsilon(state.fhist.counts[state.z],
                                      state.fhist.counts[state.z - 1])
        state.phase = PHASE_EXPLOIT
    else:
        if state.thompson:
            state.c_star = best_sf(state.post1, state.rates)
        state.z += 1
        if state.z > state.schedule.epochs:
            state.done = True
        else:
            state.lengths = state.schedule.phase_lengths(state.z)
        state.phase = PHASE_EXPLORE
