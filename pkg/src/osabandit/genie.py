"""Genie-aided benchmark: the best achievable per-slot reward when Theta is known."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .model import ChannelModel, outcome_matrix, outcome_probs, realize, slot_uniforms
from .selection import fixed_order_top_k, top_k_mask

ENUMERATION_CAP = 20
ENUMERATION_BUDGET = 1 << 24


class EnumerationLimitError(ValueError):
    pass


@dataclass(frozen=True)
class GenieValue:
    """Per-slot value of the genie and the rule it follows.

    ``per_slot_value`` is in units of ``reward_unit``. ``standard_error`` is
    zero for exact enumeration.
    """

    per_slot_value: float
    optimal_sense_set: tuple[int, ...]
    k: int
    cond_rewards: np.ndarray
    standard_error: float = 0.0

    def choose(self, u) -> tuple[int, ...]:
        """Access set for a sensing result ``u`` on ``optimal_sense_set`` (indexed by channel)."""
        u = np.asarray(u)
        eligible = np.zeros(self.cond_rewards.size, dtype=bool)
        for i in self.optimal_sense_set:
            eligible[i] = u[i] == 1
        mask = top_k_mask(self.cond_rewards, eligible, self.k)
        return tuple(int(i) for i in np.flatnonzero(mask))

    @cached_property
    def per_outcome_choice(self) -> dict:
        """Access set for every outcome of the sensed channels, keyed by the outcome tuple."""
        m = len(self.optimal_sense_set)
        if m > 16:
            raise EnumerationLimitError("outcome map is only materialized for at most 16 sensed channels")
        choices = {}
        full = np.zeros(self.cond_rewards.size, dtype=np.int8)
        for row in outcome_matrix(m):
            full[list(self.optimal_sense_set)] = row
            choices[tuple(int(b) for b in row)] = self.choose(full)
        return choices


def _top_k_values(c: np.ndarray, outcomes: np.ndarray, k: int) -> np.ndarray:
    """Sum of the top-k ``c`` among the free entries of each outcome row."""
    mask = top_k_mask(c, outcomes.astype(bool), k)
    return mask @ c


def _subset_value(model: ChannelModel, subset, k: int) -> float:
    idx = list(subset)
    c = model.cond_rewards[idx]
    outcomes = outcome_matrix(len(idx))
    probs = outcome_probs(model.sensed_free[idx])
    return float(probs @ _top_k_values(c, outcomes, k)) * model.reward_unit


def genie_value_full(model: ChannelModel, k: int, cap: int = ENUMERATION_CAP) -> GenieValue:
    """Exact genie value when every channel is sensed each slot."""
    n = model.n_channels
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= N")
    if n > cap:
        raise EnumerationLimitError(f"N={n} exceeds the enumeration cap {cap}; use genie_value_monte_carlo")
    value = _subset_value(model, range(n), k)
    return GenieValue(value, tuple(range(n)), k, model.cond_rewards)


def genie_best_set_partial(model: ChannelModel, m: int, k: int, budget: int = ENUMERATION_BUDGET) -> GenieValue:
    """Best size-``m`` sensing set for the genie, by exhaustive enumeration.

    Sets are visited in lexicographic order and only a strictly larger value
    replaces the incumbent, so ties keep the lexicographically smallest set.
    """
    n = model.n_channels
    if not 1 <= k <= m <= n:
        raise ValueError("need 1 <= k <= m <= N")
    if math.comb(n, m) * (1 << m) > budget:
        raise EnumerationLimitError(f"C({n},{m}) * 2^{m} exceeds the enumeration budget {budget}")
    c = model.cond_rewards
    f = model.sensed_free
    outcomes = outcome_matrix(m)
    best_value, best_set = -np.inf, None
    for subset in itertools.combinations(range(n), m):
        idx = list(subset)
        value = float(outcome_probs(f[idx]) @ _top_k_values(c[idx], outcomes, k)) * model.reward_unit
        if value > best_value:
            best_value, best_set = value, subset
    return GenieValue(best_value, best_set, k, c)


def genie_value_monte_carlo(model: ChannelModel, k: int, samples: int = 10**6, seed: int = 0,
                            sense_set=None) -> GenieValue:
    """Monte-Carlo estimate of the genie value, for models too large to enumerate."""
    n = model.n_channels
    sense_set = tuple(range(n)) if sense_set is None else tuple(sorted(sense_set))
    rng = np.random.default_rng(seed)
    c = model.cond_rewards
    sense_mask = np.zeros(n, dtype=bool)
    sense_mask[list(sense_set)] = True
    total = total_sq = 0.0
    done = 0
    chunk = 1 << 16
    while done < samples:
        size = min(chunk, samples - done)
        _, x, _ = realize(slot_uniforms(rng, n, size), model)
        values = realized_genie_value(c, sense_mask, x, k) * model.reward_unit
        total += values.sum()
        total_sq += (values**2).sum()
        done += size
    mean = total / samples
    var = max(total_sq / samples - mean**2, 0.0) * samples / max(samples - 1, 1)
    return GenieValue(mean, sense_set, k, c, standard_error=math.sqrt(var / samples))


def realized_genie_value(cond_rewards: np.ndarray, sense_mask, sensed_free, k: int) -> np.ndarray:
    """Genie's conditional expected reward on realized sensing results (unit reward).

    ``sensed_free`` holds sensing results for all channels, shape ``(..., N)``;
    only entries inside ``sense_mask`` count. The sum runs in channel order.
    """
    return genie_access(cond_rewards, sense_mask, sensed_free, k) @ cond_rewards


def genie_access(cond_rewards: np.ndarray, sense_mask, sensed_free, k: int) -> np.ndarray:
    """The genie's access mask on realized sensing results, shape ``(..., N)``."""
    eligible = np.asarray(sensed_free, dtype=bool) & np.asarray(sense_mask, dtype=bool)
    order = np.argsort(-np.asarray(cond_rewards), kind="stable")
    return fixed_order_top_k(order, eligible, k)
