"""Epoch schedule, exploration adaptation, game dynamics and Thompson stage."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import wasserstein_distance

from risbandit.bandit import (
    CONTENT,
    DISCONTENT,
    PHASE_EXPLOIT,
    PHASE_EXPLORE,
    PHASE_GAME,
    BetaPosterior,
    E2BoostPlayerState,
    EpochSchedule,
    FHistory,
    Phase1Stats,
    adapt_epsilon,
    advance,
    best_ris,
    best_sf,
    game_step,
    game_transition,
    pmf_of_counts,
    rand_index,
    ts_select,
    ts_update,
    w1_distance,
)


def _state_of(rng):
    return rng.bit_generator.state


def test_rand_index_single_choice_consumes_nothing():
    rng = np.random.default_rng(1)
    before = _state_of(rng)
    assert rand_index(rng, 1) == 0
    assert rand_index(rng, 0) == 0
    assert _state_of(rng) == before


def test_rand_index_bounds_and_coverage():
    rng = np.random.default_rng(2)
    draws = [rand_index(rng, 5) for _ in range(2000)]
    assert min(draws) == 0 and max(draws) == 4
    assert set(draws) == {0, 1, 2, 3, 4}


def test_pmf_of_counts():
    assert pmf_of_counts([0.0, 0.0]) is None
    assert np.allclose(pmf_of_counts([1.0, 3.0]), [0.25, 0.75])


counts_st = st.lists(st.integers(min_value=0, max_value=50), min_size=2, max_size=12)


@settings(max_examples=150, deadline=None)
@given(counts_st, counts_st)
def test_w1_matches_scipy(c1, c2):
    if sum(c1) == 0 or sum(c2) == 0:
        return
    n = max(len(c1), len(c2))
    p = np.zeros(n)
    q = np.zeros(n)
    p[:len(c1)] = c1
    q[:len(c2)] = c2
    p /= p.sum()
    q /= q.sum()
    support = np.arange(n)
    ref = wasserstein_distance(support, support, p, q)
    assert w1_distance(p, q) == pytest.approx(ref, abs=1e-9)


def test_adapt_epsilon_edges():
    assert adapt_epsilon([0, 0, 0], [1, 2, 3]) == 1.0  # no history yet
    assert adapt_epsilon([2, 2], [4, 4]) == 0.0        # identical PMFs
    # mass moved across the whole support: distance n-1, capped at 1
    assert adapt_epsilon([0, 0, 0, 9], [9, 0, 0, 0]) == 1.0
    assert adapt_epsilon([1, 1], [2, 0]) == pytest.approx(0.5)


def test_phase_lengths_and_totals():
    sched = EpochSchedule(10, 1000, 1000, 100)
    assert sched.phase_lengths(1) == (1000, 1000, 200)
    assert sched.phase_lengths(4) == (1000, 1000, 1600)
    assert sched.total_slots == 224_600
    # ends accumulated by hand: epoch z adds 2000 + 100 * 2^z slots
    assert list(sched.epoch_ends()) == [
        2200, 4600, 7400, 11000, 16200, 24600, 39400, 67000, 120200, 224600]

    heavy = EpochSchedule(10, 2000, 2000, 100)
    assert heavy.total_slots == 244_600
    assert list(heavy.epoch_ends()) == [
        4200, 8600, 13400, 19000, 26200, 36600, 53400, 83000, 138200, 244600]


def test_phase_lengths_polynomial_growth():
    sched = EpochSchedule(3, 1000, 500, 10, delta=0.5)
    assert sched.phase_lengths(2) == (math.ceil(1000 * 2 ** 0.5),
                                      math.ceil(500 * 2 ** 0.5), 40)


def test_phase1_stats_guarded_ratio():
    s = Phase1Stats(v=np.array([0.0, 2.0]), q=np.array([0.0, 1.0]))
    assert np.allclose(s.theta_hat(), [0.0, 0.5])


def test_beta_posterior_mean_guard():
    p = BetaPosterior.zeros(2)
    assert np.allclose(p.mean(), [0.0, 0.0])
    ts_update(p, 0, 1.0)
    ts_update(p, 0, 0.0)
    ts_update(p, 0, 1.0)
    assert p.alpha[0] == 2.0 and p.beta[0] == 1.0
    assert p.mean()[0] == pytest.approx(2.0 / 3.0)


def test_ts_select_single_arm_consumes_nothing():
    rng = np.random.default_rng(3)
    before = _state_of(rng)
    assert ts_select(BetaPosterior.zeros(1), np.array([1.0]), rng) == 0
    assert _state_of(rng) == before


def test_ts_select_rate_weighting():
    # a zero-rate arm can never win against a positive-rate arm
    post = BetaPosterior.zeros(2)
    rng = np.random.default_rng(4)
    picks = {ts_select(post, np.array([1.0, 0.0]), rng) for _ in range(50)}
    assert picks == {0}


def test_ts_select_tracks_posterior():
    post = BetaPosterior(alpha=np.array([60.0, 0.0]), beta=np.array([0.0, 60.0]))
    rng = np.random.default_rng(5)
    picks = [ts_select(post, np.array([1.0, 1.0]), rng) for _ in range(40)]
    assert picks.count(0) >= 38


def test_best_sf():
    assert best_sf(BetaPosterior.zeros(3), np.array([3.0, 2.0, 1.0])) == 0
    post = BetaPosterior(alpha=np.array([1.0, 9.0]), beta=np.array([9.0, 1.0]))
    assert best_sf(post, np.array([2.0, 1.0])) == 1


def _mini_state(n_ris=4, n_sf=1, joint=False, thompson=True, fixed_eps=None,
                game_epsilon=0.01, game_nu=1.4):
    sched = EpochSchedule(3, 2, 3, 1)
    rates = np.linspace(1.0, 0.4, n_sf) if n_sf > 1 else np.array([1.0])
    return E2BoostPlayerState(n_ris, n_sf, rates, sched, game_epsilon, game_nu,
                              joint_arms=joint, thompson=thompson, fixed_eps=fixed_eps)


def test_player_init_conventions():
    st_adapt = _mini_state()
    assert st_adapt.eps == 1.0 and st_adapt.n_arms == 4
    assert np.all(st_adapt.util_scale == 1.0)
    st_fixed = _mini_state(fixed_eps=0.3)
    assert st_fixed.eps == 0.3
    joint = _mini_state(n_ris=2, n_sf=3, joint=True)
    assert joint.n_arms == 6
    assert np.allclose(joint.util_scale, np.tile(joint.rates / joint.rates[0], 2))
    assert st_adapt.game_explore == pytest.approx(0.01 ** 1.4)


def test_game_step_content_sticks_to_baseline():
    state = _mini_state(game_epsilon=0.0)  # explore probability 0
    state.game.mood = CONTENT
    state.game.baseline = 2
    rng = np.random.default_rng(6)
    assert all(game_step(state, rng) == 2 for _ in range(20))


def test_game_step_experiment_skips_baseline():
    state = _mini_state(game_epsilon=1.0, game_nu=1.0)  # explore probability 1
    state.game.baseline = 1
    rng = np.random.default_rng(7)
    picks = {game_step(state, rng) for _ in range(200)}
    assert 1 not in picks
    assert picks == {0, 2, 3}


def test_game_step_discontent_plays_uniform():
    state = _mini_state()
    state.game.mood = DISCONTENT
    rng = np.random.default_rng(8)
    picks = {game_step(state, rng) for _ in range(200)}
    assert picks == {0, 1, 2, 3}


def test_game_transition_baseline_replay_is_inert():
    state = _mini_state()
    state.theta_hat = np.array([0.0, 0.5, 0.0, 0.0])
    state.u_max = 0.8
    state.game.baseline = 1
    state.game.mood = CONTENT
    rng = np.random.default_rng(9)
    before = _state_of(rng)
    game_transition(state, 1, 1, 1.0, rng)
    assert state.game.mood == CONTENT and state.game.baseline == 1
    assert _state_of(rng) == before


def test_game_transition_collision_means_discontent():
    state = _mini_state()
    state.theta_hat = np.array([0.9, 0.5, 0.0, 0.0])
    state.u_max = 0.9
    state.game.baseline = 1
    rng = np.random.default_rng(10)
    before = _state_of(rng)
    game_transition(state, 1, 0, 0.0, rng)  # eta = 0: utility 0
    assert state.game.mood == DISCONTENT
    assert state.game.baseline == 1
    assert _state_of(rng) == before


def test_game_transition_certain_acceptance_skips_coin():
    state = _mini_state()
    state.theta_hat = np.array([0.0, 0.7, 0.0, 0.0])
    state.u_max = 0.7  # u == u_max: acceptance probability 1
    state.game.baseline = 0
    state.game.mood = DISCONTENT
    rng = np.random.default_rng(11)
    before = _state_of(rng)
    game_transition(state, 1, 1, 1.0, rng)
    assert state.game.mood == CONTENT and state.game.baseline == 1
    assert _state_of(rng) == before


def test_game_transition_interior_probability_uses_one_coin():
    # u = 0.4, u_max = 0.8: acceptance 0.5 * 0.01^0.4
    p_accept = 0.5 * 0.01 ** 0.4
    for seed in range(12, 32):
        state = _mini_state()
        state.theta_hat = np.array([0.4, 0.0, 0.0, 0.0])
        state.u_max = 0.8
        state.game.baseline = 2
        rng = np.random.default_rng(seed)
        coin = np.random.default_rng(seed).random()
        game_transition(state, 0, 1, 1.0, rng)
        assert state.game.baseline == 0
        assert state.game.mood == (CONTENT if coin < p_accept else DISCONTENT)
        # exactly the one coin was consumed
        twin = np.random.default_rng(seed)
        twin.random()
        assert _state_of(rng) == _state_of(twin)


def test_game_transition_degenerate_umax():
    state = _mini_state()
    state.theta_hat = np.array([0.4, 0.0, 0.0, 0.0])
    state.u_max = 0.0
    state.game.baseline = 2  # avoid the inert baseline-replay branch
    rng = np.random.default_rng(13)
    before = _state_of(rng)
    game_transition(state, 0, 1, 1.0, rng)
    assert state.game.mood == DISCONTENT
    assert _state_of(rng) == before


def test_fhistory_window():
    f = FHistory(3)
    for z in (1, 2, 3, 4):
        f.new_epoch(z)
    f.counts[2][:] = [5.0, 0.0, 0.0]
    f.counts[3][:] = [0.0, 2.0, 0.0]
    f.counts[4][:] = [0.0, 0.0, 4.0]
    # z=3 window covers epochs 2..3, z=4 covers 2..4
    assert np.allclose(f.window_sum(3), [5.0, 2.0, 0.0])
    assert np.allclose(f.window_sum(4), [5.0, 2.0, 4.0])
    assert best_ris(f, 3) == 0
    assert best_ris(f, 4) == 0


def test_advance_explore_boundary_sets_game_up():
    state = _mini_state()  # lengths (2, 3, 2)
    state.stats.v[:] = [2.0, 0.0, 1.0, 0.0]
    state.stats.q[:] = [1.0, 0.0, 1.0, 0.0]
    rng = np.random.default_rng(14)
    advance(state, rng)
    assert state.phase == PHASE_EXPLORE and state.slot_in_phase == 1
    advance(state, rng)
    assert state.phase == PHASE_GAME and state.slot_in_phase == 0
    assert np.allclose(state.theta_hat, [0.5, 0.0, 1.0, 0.0])
    assert state.u_max == 1.0
    assert state.game.mood == CONTENT
    assert 1 in state.fhist.counts
    assert 0 <= state.game.baseline < 4


def test_advance_baseline_ancestor_rule():
    # at the start of epoch 3's game phase the baseline replays the arm last
    # chosen in epoch 3 - floor(3/2) - 1 = 1
    state = _mini_state()
    state.z = 3
    state.lengths = state.schedule.phase_lengths(3)
    state.game_last_choice[1] = 3
    state.stats.v[:] = 1.0
    state.stats.q[:] = 1.0
    rng = np.random.default_rng(15)
    state.slot_in_phase = state.lengths[0] - 1
    before = _state_of(rng)
    advance(state, rng)
    assert state.phase == PHASE_GAME
    assert state.game.baseline == 3
    assert _state_of(rng) == before  # ancestor known: no random fallback


def test_advance_game_boundary_sets_kstar_and_eps():
    state = _mini_state()
    state.z = 2
    state.lengths = state.schedule.phase_lengths(2)
    state.phase = PHASE_GAME
    state.fhist.new_epoch(1)
    state.fhist.new_epoch(2)
    state.fhist.counts[1][:] = [0.0, 4.0, 0.0, 0.0]
    state.fhist.counts[2][:] = [0.0, 1.0, 3.0, 0.0]
    state.slot_in_phase = state.lengths[1] - 1
    rng = np.random.default_rng(16)
    advance(state, rng)
    assert state.phase == PHASE_EXPLOIT
    # window z=2 covers epochs 1..2: [0, 5, 3, 0]
    assert state.k_star == 1
    assert state.eps == pytest.approx(
        adapt_epsilon(state.fhist.counts[2], state.fhist.counts[1]))


def test_advance_fixed_eps_never_adapts():
    state = _mini_state(fixed_eps=0.25)
    state.z = 2
    state.lengths = state.schedule.phase_lengths(2)
    state.phase = PHASE_GAME
    state.fhist.new_epoch(1)
    state.fhist.new_epoch(2)
    state.fhist.counts[1][:] = [4.0, 0.0, 0.0, 0.0]
    state.fhist.counts[2][:] = [0.0, 0.0, 0.0, 4.0]
    state.slot_in_phase = state.lengths[1] - 1
    advance(state, np.random.default_rng(17))
    assert state.eps == 0.25


def test_advance_exploit_boundary_rolls_epoch():
    state = _mini_state(n_sf=3)
    state.phase = PHASE_EXPLOIT
    state.slot_in_phase = state.lengths[2] - 1
    ts_update(state.post1, 1, 1.0)
    advance(state, np.random.default_rng(18))
    assert state.z == 2
    assert state.phase == PHASE_EXPLORE
    assert state.c_star == 1
    assert state.lengths == state.schedule.phase_lengths(2)
    assert not state.done
    state.z = state.schedule.epochs
    state.phase = PHASE_EXPLOIT
    state.slot_in_phase = state.schedule.phase_lengths(3)[2] - 1
    state.lengths = state.schedule.phase_lengths(3)
    advance(state, np.random.default_rng(19))
    assert state.done


def test_select_ranges_all_phases():
    rng = np.random.default_rng(20)
    for joint in (False, True):
        for phase in (PHASE_EXPLORE, PHASE_GAME, PHASE_EXPLOIT):
            state = _mini_state(n_ris=3, n_sf=2, joint=joint)
            state.phase = phase
            for _ in range(40):
                k, sf = state.select(rng)
                assert 0 <= k < 3
                assert 0 <= sf < 2
                m = state.busy_select(rng)
                assert 0 <= m < 2
