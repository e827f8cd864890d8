import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from osabandit.genie import genie_best_set_partial, genie_value_full
from osabandit.model import ChannelModel, reference_model
from osabandit.policies import (
    FitOptions,
    PartialSensingUCBPolicy,
    SetUCBPolicy,
    alg2_estimate,
    alg3_index,
    alg4_set_index,
    choose_access,
    init_partition,
    make_policy,
    random_pick,
)
from osabandit.simulate import simulate

FAST_FIT = FitOptions(starts=4, max_iter=100)


def run(name, model, k=1, m=None, slots=200, runs=8, seed=0, on_slot=None, trace=False, sweep_cap=None):
    genie = genie_value_full(model, k) if m is None else genie_best_set_partial(model, m, k)
    factory = lambda r: make_policy(name, model, k, m, r, FAST_FIT, sweep_cap)
    return simulate(model, factory, genie, slots, np.arange(runs), seed, [slots], record_trace=trace,
                    on_slot=on_slot)


class TestIndices:
    def test_alg3_hand_value(self):
        assert alg3_index(3, 4, 101, 0.8, 0.3) == pytest.approx(4.134854, abs=1e-6)
        bonus = alg3_index(3, 4, 101, 0.8, 0.3) - 1.1
        assert bonus == pytest.approx(2 * math.sqrt(2 * math.log(100) / 4), rel=1e-12)

    def test_alg3_no_bonus_at_slot_two(self):
        assert alg3_index(3, 4, 2, 0.8, 0.3) == pytest.approx(1.1)

    def test_alg3_index_unclamped(self):
        assert alg3_index(0, 10, 2, 0.8, 0.3) == pytest.approx(-0.4)

    def test_set_index_hand_value(self):
        assert alg4_set_index(10, 20, math.exp(2) + 1) == pytest.approx(0.947213, abs=1e-6)

    def test_set_index_full_mean(self):
        assert alg4_set_index(7, 7, 2) == 1.0

    def test_ln_guard_at_first_slot(self):
        assert alg4_set_index(1, 2, 1) == 0.5

    def test_alg2_estimate(self):
        assert alg2_estimate(0.65, 0.8, 0.3) == pytest.approx(0.9)
        assert alg2_estimate(0.95, 0.8, 0.3) == 1.0
        assert alg2_estimate(0.95, 0.8, 0.3, clamp=False) == pytest.approx(1.5)
        assert alg2_estimate(0.0, 0.8, 0.3) == 0.0

    def test_equal_indices_break_to_lower_channel(self):
        idx = alg3_index(np.array([[3, 3, 3]]), np.array([[4, 4, 4]]), 50, 0.8, 0.3)
        mask = choose_access(np.array([[0.5, 0.5, 0.5]]), np.ones((1, 3), bool), 1, 0.8, 0.3)
        assert idx[0, 0] == idx[0, 2]
        np.testing.assert_array_equal(mask, [[True, False, False]])

    @settings(max_examples=50)
    @given(st.lists(st.floats(0.0, 1.0), min_size=5, max_size=5), st.lists(st.booleans(), min_size=5, max_size=5),
           st.integers(1, 5))
    def test_choose_access_is_top_k_of_free(self, theta, free, k):
        theta, free = np.array([theta]), np.array([free])
        mask = choose_access(theta, free, k, 0.8, 0.3)
        assert not np.any(mask & ~free)
        assert mask.sum() == min(k, free.sum())


class TestInitPartition:
    def test_even_split(self):
        assert init_partition(8, 4) == [(0, 1, 2, 3), (4, 5, 6, 7)]

    def test_short_block_padded_with_lowest_channels(self):
        assert init_partition(5, 2) == [(0, 1), (2, 3), (4, 0)]
        assert init_partition(7, 3) == [(0, 1, 2), (3, 4, 5), (6, 0, 1)]

    @settings(max_examples=50)
    @given(st.integers(1, 12), st.integers(1, 12))
    def test_covers_every_channel(self, n, m):
        m = min(m, n)
        blocks = init_partition(n, m)
        assert len(blocks) == math.ceil(n / m)
        assert all(len(b) == m and len(set(b)) == m for b in blocks)
        assert set().union(*blocks) == set(range(n))


class TestRandomPick:
    def test_uniform_choice(self):
        eligible = np.tile([True, False, True, True], (30_000, 1))
        aux = np.random.default_rng(0).random(30_000)
        picks = random_pick(eligible, aux)
        assert np.all(picks.sum(axis=1) == 1)
        np.testing.assert_allclose(picks.mean(axis=0), [1 / 3, 0, 1 / 3, 1 / 3], atol=0.015)

    def test_nothing_eligible(self):
        assert not random_pick(np.zeros((2, 3), bool), np.array([0.2, 0.9])).any()


class TestSampleMeanPolicy:
    def test_full_width_accesses_every_free_channel(self):
        m = reference_model()

        def check(slot, policy, d):
            np.testing.assert_array_equal(d.access, d.sensed_free)
            assert d.sense.all()

        run("alg2", m, k=8, slots=100, on_slot=check)

    def test_estimate_converges(self):
        m = reference_model()
        seen = {}
        run("alg2", m, slots=20_000, runs=50, on_slot=lambda s, p, d: seen.update(theta=p.theta_hat))
        t = 20_000
        f = m.sensed_free
        tol = 5 * np.sqrt(f * (1 - f) / t) / 0.5
        ok = np.all(np.abs(seen["theta"] - m.theta) <= tol, axis=1)
        assert ok.mean() >= 0.95


class TestCandidateSetPolicy:
    def test_runs_and_estimates_near_truth(self):
        m = reference_model().truncated(4)
        seen = {}
        run("alg1", m, slots=3000, runs=4, on_slot=lambda s, p, d: seen.update(theta=p.theta_hat))
        assert np.max(np.abs(seen["theta"] - m.theta)) < 0.1

    def test_rejects_large_models(self):
        with pytest.raises(ValueError):
            make_policy("alg1", ChannelModel(np.full(17, 0.5), 0.8, 0.3))


class TestPartialSensingUCB:
    def test_init_takes_two_slots_and_covers_all(self):
        m = reference_model()
        counts = {}

        def check(slot, policy, d):
            if slot <= 2:
                assert d.sense.sum(axis=1).tolist() == [4] * d.sense.shape[0]
                assert np.all(d.access.sum(axis=1) <= 1)
            if slot == 2:
                counts["t"] = policy.stats.t_count.copy()

        run("alg3", m, m=4, slots=5, on_slot=check)
        assert np.all(counts["t"] >= 1)

    def test_counter_conservation(self):
        m = reference_model()
        state = {}

        def check(slot, policy, d):
            t = policy.stats.t_count
            if slot == policy.init_slots:
                state["base"] = t.sum(axis=1).copy()
            elif slot > policy.init_slots:
                np.testing.assert_array_equal(t.sum(axis=1) - state["base"], 4 * (slot - policy.init_slots))
            assert np.all(policy.stats.y_count <= t)

        run("alg3", m, k=2, m=4, slots=300, on_slot=check)

    def test_senses_top_indices(self):
        pol = PartialSensingUCBPolicy(5, 2, 1, 0.8, 0.3, runs=1)
        pol.stats.t_count[:] = 10
        pol.stats.y_count[:] = [[2, 9, 5, 7, 1]]
        mask = pol.sense(slot=50)
        np.testing.assert_array_equal(mask, [[False, True, False, True, False]])

    def test_perfect_sensing_all_free(self):
        m = ChannelModel(np.ones(6), 1.0, 0.0)
        run("alg3", m, m=3, slots=50, on_slot=lambda s, p, d: np.testing.assert_array_equal(d.access.sum(axis=1), 1))


class TestSetUCB:
    def test_sweep_visits_every_pair(self):
        m = reference_model().truncated(3)
        state = {}

        def check(slot, policy, d):
            if not policy.in_sweep.any() and "done" not in state:
                state["done"] = slot
                assert np.all(policy.stats.t_pair >= 1)

        run("alg4", m, m=2, slots=200, on_slot=check)
        assert "done" in state

    def test_counter_conservation(self):
        m = reference_model().truncated(5)
        prev = {}

        def check(slot, policy, d):
            st_ = policy.stats
            np.testing.assert_array_equal(st_.t_set.sum(axis=1), slot)
            np.testing.assert_array_equal(st_.y_set, st_.y_pair.sum(axis=2))
            assert np.all(st_.y_pair <= st_.t_pair)
            if "t_pair" in prev:
                assert np.all((st_.t_pair - prev["t_pair"]) <= 1)
            prev["t_pair"] = st_.t_pair.copy()

        run("alg4", m, m=2, slots=400, on_slot=check)

    def test_multi_access_counters(self):
        m = reference_model().truncated(4)

        def check(slot, policy, d):
            st_ = policy.stats
            np.testing.assert_array_equal(st_.t_set.sum(axis=1), slot)
            np.testing.assert_array_equal(st_.y_set, st_.y_pair.sum(axis=2))

        run("alg4", m, k=2, m=3, slots=300, on_slot=check)

    def test_no_free_channel_only_counts_set(self):
        pol = SetUCBPolicy(3, 2, 1, 0.8, 0.3, runs=1)
        pol.sweep_pos[:] = len(pol.sets)
        pol.stats.t_set[:] = 5
        pol.stats.t_pair[:] = 2
        before = pol.stats.t_pair.copy()
        sense = pol.sense(slot=20)
        none = np.zeros((1, 3), bool)
        access = pol.access(20, sense, none, np.zeros(1))
        pol.update(20, sense, none, access, none)
        assert not access.any()
        assert pol.stats.t_set.sum() == 16
        np.testing.assert_array_equal(pol.stats.t_pair, before)

    def test_ack_rate_matches_conditional_reward(self):
        m = reference_model().truncated(3)
        state = {}
        run("alg4", m, m=2, slots=20_000, runs=1, seed=3, on_slot=lambda s, p, d: state.update(p=p))
        st_ = state["p"].stats
        i, j = np.unravel_index(np.argmax(st_.t_pair[0]), st_.t_pair[0].shape)
        ch = state["p"].members[i, j]
        t, y = st_.t_pair[0, i, j], st_.y_pair[0, i, j]
        c = m.cond_rewards[ch]
        assert abs(y / t - c) <= 3 * math.sqrt(c * (1 - c) / t)

    def test_sweep_cap_marks_failure(self):
        m = ChannelModel([0.9, 1e-4, 1e-4], 1.0, 0.0)
        log = run("alg4", m, m=2, slots=50, runs=2, sweep_cap=30)
        assert log.failed.all()

    def test_uncapped_stall_is_not_failure(self):
        m = ChannelModel([0.9, 1e-4, 1e-4], 1.0, 0.0)
        log = run("alg4", m, m=2, slots=50, runs=2)
        assert not log.failed.any()


class TestRewardUnitInvariance:
    @pytest.mark.parametrize("name,k,m", [("alg1", 1, None), ("alg2", 3, None), ("alg3", 2, 4), ("alg4", 1, 2)])
    def test_identical_decisions(self, name, k, m):
        base = reference_model("heterogeneous") if name != "alg4" else reference_model("heterogeneous").truncated(5)
        slots = 300 if name == "alg1" else 1500
        a = run(name, base, k, m, slots=slots, runs=4, seed=11, trace=True)
        b = run(name, base.with_reward_unit(7.3), k, m, slots=slots, runs=4, seed=11, trace=True)
        np.testing.assert_array_equal(a.sense_trace, b.sense_trace)
        np.testing.assert_array_equal(a.access_trace, b.access_trace)


class TestMakePolicy:
    def test_unknown_name(self):
        with pytest.raises(ValueError):
            make_policy("alg9", reference_model())

    def test_partial_needs_m(self):
        with pytest.raises(ValueError):
            make_policy("alg3", reference_model())

    def test_width_checks(self):
        with pytest.raises(ValueError):
            make_policy("alg3", reference_model(), k=3, m=2)
        with pytest.raises(ValueError):
            make_policy("alg2", reference_model(), k=9)
