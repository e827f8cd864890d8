import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from osabandit.genie import (
    EnumerationLimitError,
    genie_access,
    genie_best_set_partial,
    genie_value_full,
    genie_value_monte_carlo,
    realized_genie_value,
)
from osabandit.model import ChannelModel, outcome_probs, reference_model

import oracles


def random_model(rng, n):
    pf = rng.uniform(0.0, 0.5, n)
    pd = rng.uniform(pf + 0.05, 1.0)
    theta = rng.uniform(0.05, 1.0, n)
    return ChannelModel(theta, pd, pf)


class TestFullSensing:
    def test_single_channel(self):
        m = ChannelModel([0.6], 0.8, 0.3)
        g = genie_value_full(m, 1)
        # f * c = (1 - p_f) * theta
        assert g.per_slot_value == pytest.approx(0.7 * 0.6)

    def test_all_channels_accessed_when_k_equals_n(self):
        m = reference_model()
        g = genie_value_full(m, 8)
        assert g.per_slot_value == pytest.approx(np.sum((1 - m.p_f) * m.theta))

    def test_value_grows_with_k(self):
        m = reference_model("heterogeneous")
        values = [genie_value_full(m, k).per_slot_value for k in range(1, 9)]
        assert np.all(np.diff(values) > 0)

    def test_reward_unit_scales(self):
        m = reference_model()
        assert genie_value_full(m.with_reward_unit(7.3), 3).per_slot_value == pytest.approx(
            7.3 * genie_value_full(m, 3).per_slot_value)

    def test_enumeration_cap(self):
        with pytest.raises(EnumerationLimitError):
            genie_value_full(reference_model(), 1, cap=4)

    def test_bad_k(self):
        with pytest.raises(ValueError):
            genie_value_full(reference_model(), 9)

    def test_choose_picks_best_free(self):
        g = genie_value_full(reference_model(), 2)
        assert g.choose([0, 1, 1, 1, 0, 0, 0, 0]) == (1, 2)
        assert g.choose([0] * 8) == ()

    def test_outcome_map(self):
        g = genie_value_full(reference_model().truncated(3), 1)
        choices = g.per_outcome_choice
        assert len(choices) == 8
        assert choices[(0, 1, 1)] == (1,)
        assert choices[(0, 0, 0)] == ()


class TestPartialSensing:
    def test_reference_model_senses_top_channels(self):
        g = genie_best_set_partial(reference_model(), 4, 1)
        assert g.optimal_sense_set == (0, 1, 2, 3)

    def test_ties_keep_lexicographic_first(self):
        m = ChannelModel([0.5] * 4, 0.8, 0.3)
        assert genie_best_set_partial(m, 2, 1).optimal_sense_set == (0, 1)

    def test_budget(self):
        with pytest.raises(EnumerationLimitError):
            genie_best_set_partial(reference_model(), 4, 1, budget=100)

    def test_full_set_matches_full_sensing(self):
        m = reference_model("heterogeneous").truncated(5)
        assert genie_best_set_partial(m, 5, 2).per_slot_value == pytest.approx(
            genie_value_full(m, 2).per_slot_value, rel=1e-14)


class TestOracleAgreement:
    @pytest.mark.parametrize("seed", range(10))
    def test_full_sensing(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 5))
        m = random_model(rng, n)
        for k in range(1, n + 1):
            want = oracles.genie_value(m.theta, m.p_d, m.p_f, tuple(range(n)), k)
            assert genie_value_full(m, k).per_slot_value == pytest.approx(want, rel=1e-12)

    @pytest.mark.parametrize("seed", range(10))
    def test_partial_sensing(self, seed):
        rng = np.random.default_rng(100 + seed)
        n = int(rng.integers(1, 5))
        m = random_model(rng, n)
        for size in range(1, n + 1):
            for k in range(1, size + 1):
                value, subset = oracles.best_sense_set(m.theta, m.p_d, m.p_f, size, k)
                g = genie_best_set_partial(m, size, k)
                assert g.optimal_sense_set == subset
                assert g.per_slot_value == pytest.approx(value, rel=1e-12)

    def test_monte_carlo(self):
        m = reference_model("heterogeneous")
        exact = genie_value_full(m, 2)
        mc = genie_value_monte_carlo(m, 2, samples=400_000, seed=5)
        assert abs(mc.per_slot_value - exact.per_slot_value) < 4 * mc.standard_error

    def test_monte_carlo_on_sense_set(self):
        m = reference_model()
        exact = genie_best_set_partial(m, 4, 1)
        mc = genie_value_monte_carlo(m, 1, samples=400_000, seed=6, sense_set=exact.optimal_sense_set)
        assert abs(mc.per_slot_value - exact.per_slot_value) < 4 * mc.standard_error


class TestRealized:
    def test_mean_of_realized_equals_value(self):
        m = reference_model().truncated(4)
        c = m.cond_rewards
        rows = np.array([[(code >> i) & 1 for i in range(4)] for code in range(16)], dtype=bool)
        vals = realized_genie_value(c, np.ones(4, bool), rows, 2)
        assert outcome_probs(m.sensed_free) @ vals == pytest.approx(genie_value_full(m, 2).per_slot_value)

    @settings(max_examples=50)
    @given(st.lists(st.booleans(), min_size=6, max_size=6), st.lists(st.booleans(), min_size=6, max_size=6),
           st.integers(1, 6))
    def test_access_respects_sensing(self, free, sense, k):
        c = reference_model().truncated(6).cond_rewards
        mask = genie_access(c, np.array(sense), np.array(free), k)
        assert not np.any(mask & ~(np.array(free) & np.array(sense)))
        assert mask.sum() == min(k, int(np.sum(np.array(free) & np.array(sense))))
