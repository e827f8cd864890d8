"""Channel sensing/access learning rules.

Every policy is vectorized over a batch of independent runs: masks and
statistics carry a leading run axis of length ``runs``. A slot is processed as
``sense`` -> (environment realizes sensing results) -> ``observe`` ->
``access`` -> ``update``; :meth:`Policy.step` chains these.

Policies see the sensor quality (``p_d``, ``p_f``) but never Theta.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .model import ChannelModel, encode_outcomes
from .optimizer import THETA_FLOOR, local_search, moment_start, start_points, warm_step
from .selection import top_k_mask

POLICY_NAMES = ("alg1", "alg2", "alg3", "alg4")


def _log_slot(slot) -> float:
    return math.log(max(slot - 1, 1))


def alg2_estimate(sensed_free_rate, p_d, p_f, clamp: bool = True):
    """Invert the sensed-free rate into a free-probability estimate.

    With ``clamp`` the estimate is limited to [0, 1] for use in ``cond_reward``.
    """
    raw = (np.asarray(sensed_free_rate, dtype=float) + p_d - 1.0) / (np.asarray(p_d) - p_f)
    return np.clip(raw, 0.0, 1.0) if clamp else raw


def estimated_cond_reward(theta_hat, p_d, p_f) -> np.ndarray:
    """E[S | X=1] under an estimate in [0, 1]; 0 where the channel could never be sensed free."""
    num = (1.0 - p_f) * theta_hat
    f = num + (1.0 - p_d) * (1.0 - theta_hat)
    return np.divide(num, f, out=np.zeros_like(num), where=f > 0)


def choose_access(theta_hat, sensed_free, k: int, p_d, p_f) -> np.ndarray:
    """Mask of the (up to) ``k`` sensed-free channels with largest E[S | X=1] under ``theta_hat``."""
    scores = estimated_cond_reward(np.clip(theta_hat, 0.0, 1.0), p_d, p_f)
    return top_k_mask(scores, sensed_free, k)


alg2_choose_access = choose_access
alg1_choose_access = choose_access


def alg3_index(y, t_count, slot, p_d, p_f):
    """Optimistic index of a channel under homogeneous partial sensing (left unclamped)."""
    y = np.asarray(y, dtype=float)
    t_count = np.asarray(t_count, dtype=float)
    gap = np.asarray(p_d) - p_f
    theta_hat = (y / t_count + p_d - 1.0) / gap
    return theta_hat + np.sqrt(2.0 * _log_slot(slot) / t_count) / gap


def ucb_index(y, t_count, slot):
    """Sample mean plus sqrt(2 ln(t-1) / T)."""
    t_count = np.asarray(t_count, dtype=float)
    return np.asarray(y, dtype=float) / t_count + np.sqrt(2.0 * _log_slot(slot) / t_count)


alg4_set_index = ucb_index


@dataclass
class PolicyDecision:
    """Sensing and access masks for one slot, shape ``(runs, N)``."""

    sense: np.ndarray
    access: np.ndarray
    sensed_free: np.ndarray
    ack: np.ndarray

    def sense_set(self, run: int = 0) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.sense[run]))

    def access_set(self, run: int = 0) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.access[run]))


@dataclass
class ChannelStats:
    """Per-channel sensing counters: slots sensed and slots sensed free."""

    t_count: np.ndarray
    y_count: np.ndarray

    @classmethod
    def zeros(cls, runs: int, n: int) -> "ChannelStats":
        return cls(np.zeros((runs, n), dtype=np.int64), np.zeros((runs, n), dtype=np.int64))


@dataclass
class SetStats:
    """Counters at the sensing-set level and per (set, member) pair."""

    t_set: np.ndarray
    y_set: np.ndarray
    t_pair: np.ndarray
    y_pair: np.ndarray

    @classmethod
    def zeros(cls, runs: int, n_sets: int, m: int) -> "SetStats":
        return cls(
            np.zeros((runs, n_sets), dtype=np.int64),
            np.zeros((runs, n_sets), dtype=np.int64),
            np.zeros((runs, n_sets, m), dtype=np.int64),
            np.zeros((runs, n_sets, m), dtype=np.int64),
        )


class Policy:
    """Base class; subclasses fill in ``sense`` and ``access``."""

    def __init__(self, n_channels: int, k: int, p_d, p_f, runs: int = 1):
        if not 1 <= k <= n_channels:
            raise ValueError("need 1 <= k <= N")
        self.n = n_channels
        self.k = k
        self.runs = runs
        self.p_d = np.broadcast_to(np.asarray(p_d, dtype=float), (n_channels,)).copy()
        self.p_f = np.broadcast_to(np.asarray(p_f, dtype=float), (n_channels,)).copy()
        self.failed = np.zeros(runs, dtype=bool)

    def sense(self, slot: int) -> np.ndarray:
        raise NotImplementedError

    def observe(self, slot: int, sense: np.ndarray, sensed_free: np.ndarray) -> None:
        pass

    def access(self, slot: int, sense: np.ndarray, sensed_free: np.ndarray, aux: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def update(self, slot: int, sense, sensed_free, access, ack) -> None:
        pass

    def step(self, slot: int, states: np.ndarray, sensing_all: np.ndarray, aux: np.ndarray) -> PolicyDecision:
        """Run one slot given the realized states and the sensing results of all channels."""
        sense = self.sense(slot)
        x = sensing_all & sense
        self.observe(slot, sense, x)
        access = self.access(slot, sense, x, aux)
        ack = access & states
        self.update(slot, sense, x, access, ack)
        return PolicyDecision(sense, access, x, ack)


class _FullSensing(Policy):
    def sense(self, slot):
        if not hasattr(self, "_all"):
            self._all = np.ones((self.runs, self.n), dtype=bool)
            self._all.setflags(write=False)
        return self._all


class SampleMeanPolicy(_FullSensing):
    """Full sensing; estimates Theta from per-channel sensed-free rates."""

    def __init__(self, n_channels, k, p_d, p_f, runs=1):
        super().__init__(n_channels, k, p_d, p_f, runs)
        self.sensed_free_counts = np.zeros((runs, n_channels), dtype=np.int64)
        self.theta_hat = np.zeros((runs, n_channels))

    def observe(self, slot, sense, sensed_free):
        self.sensed_free_counts += sensed_free

    def access(self, slot, sense, sensed_free, aux):
        self.theta_hat = alg2_estimate(self.sensed_free_counts / slot, self.p_d, self.p_f)
        return choose_access(self.theta_hat, sensed_free, self.k, self.p_d, self.p_f)


@dataclass(frozen=True)
class FitOptions:
    """Candidate-set fit settings for :class:`CandidateSetPolicy`.

    Every slot takes ``warm_steps`` damped Gauss-Newton steps from the previous
    estimate; a full multi-start fit runs on slots ``1..8``, at powers of two
    and every ``refit_every`` slots.
    """

    starts: int = 8
    max_iter: int = 500
    gtol: float = 1e-9
    warm_steps: int = 1
    refit_every: int = 1000
    floor: float = THETA_FLOOR


class CandidateSetPolicy(_FullSensing):
    """Full sensing; Theta taken from the least-squares candidate set of the outcome table."""

    def __init__(self, n_channels, k, p_d, p_f, runs=1, fit: FitOptions | None = None):
        super().__init__(n_channels, k, p_d, p_f, runs)
        if n_channels > 16:
            raise ValueError("the batched candidate-set policy keeps dense outcome tables (N <= 16)")
        self.fit = fit or FitOptions()
        self.counts = np.zeros((runs, 1 << n_channels), dtype=np.int64)
        self.theta_hat = np.full((runs, n_channels), 0.5)
        self.objective_sq = np.zeros(runs)

    def _full_refit_due(self, slot):
        return slot <= 8 or (slot & (slot - 1)) == 0 or slot % self.fit.refit_every == 0

    def observe(self, slot, sense, sensed_free):
        self.counts[np.arange(self.runs), encode_outcomes(sensed_free)] += 1

    def access(self, slot, sense, sensed_free, aux):
        rates = self.counts / slot
        fit = self.fit
        if self._full_refit_due(slot):
            marg = rates @ ((np.arange(1 << self.n)[:, None] >> np.arange(self.n)) & 1)
            starts = np.stack([start_points(m, fit.starts, fit.floor)
                               for m in moment_start(marg, self.p_d, self.p_f, fit.floor)])
            # keep the current estimate as an extra start so a refit never worsens it
            starts = np.concatenate([starts, self.theta_hat[:, None, :]], axis=1)
            s = starts.shape[1]
            th, sq = local_search(starts.reshape(-1, self.n), np.repeat(rates, s, axis=0),
                                  self.p_d, self.p_f, fit.max_iter, fit.gtol, fit.floor)
            th, sq = th.reshape(self.runs, s, self.n), sq.reshape(self.runs, s)
            best = np.argmin(sq, axis=1)
            self.theta_hat = th[np.arange(self.runs), best]
            self.objective_sq = sq[np.arange(self.runs), best]
        else:
            for _ in range(fit.warm_steps):
                self.theta_hat, self.objective_sq = warm_step(self.theta_hat, rates, self.p_d, self.p_f, fit.floor)
        return choose_access(self.theta_hat, sensed_free, self.k, self.p_d, self.p_f)


def init_partition(n: int, m: int) -> list[tuple[int, ...]]:
    """Consecutive blocks of ``m`` channels covering all ``n``; a short last block is
    padded with the lowest-index channels."""
    blocks = []
    for start in range(0, n, m):
        block = list(range(start, min(start + m, n)))
        block += [c for c in range(n) if c not in block][: m - len(block)]
        blocks.append(tuple(block))
    return blocks


class PartialSensingUCBPolicy(Policy):
    """Partial sensing of ``m`` channels, optimistic per-channel indices from sensing outcomes."""

    def __init__(self, n_channels, m, k, p_d, p_f, runs=1):
        super().__init__(n_channels, k, p_d, p_f, runs)
        if not k <= m <= n_channels:
            raise ValueError("need k <= m <= N")
        self.m = m
        self.stats = ChannelStats.zeros(runs, n_channels)
        self.blocks = init_partition(n_channels, m)
        self.init_slots = len(self.blocks)
        self._index = None

    def sense(self, slot):
        if slot <= self.init_slots:
            mask = np.zeros((self.runs, self.n), dtype=bool)
            mask[:, list(self.blocks[slot - 1])] = True
            self._index = None
            return mask
        self._index = alg3_index(self.stats.y_count, self.stats.t_count, slot, self.p_d, self.p_f)
        return top_k_mask(self._index, np.ones_like(self._index, dtype=bool), self.m)

    def access(self, slot, sense, sensed_free, aux):
        if self._index is None:
            return random_pick(sensed_free, aux)
        return top_k_mask(self._index, sensed_free, self.k)

    def update(self, slot, sense, sensed_free, access, ack):
        self.stats.t_count += sense
        self.stats.y_count += sensed_free


def random_pick(eligible: np.ndarray, aux: np.ndarray) -> np.ndarray:
    """One uniformly chosen eligible entry per row, using one uniform per row."""
    count = eligible.sum(axis=1)
    pick = np.minimum((aux * count).astype(np.int64), np.maximum(count - 1, 0))
    rank = np.cumsum(eligible, axis=1) - 1
    return eligible & (rank == pick[:, None])


class SetUCBPolicy(Policy):
    """Partial sensing over all size-``m`` sets with a two-level UCB on ACK rewards.

    ``sweep_cap`` (slots) marks a run failed if its initial sweep has not
    finished by then; ``None`` leaves the sweep uncapped.
    """

    def __init__(self, n_channels, m, k, p_d, p_f, runs=1, sweep_cap: int | None = None):
        super().__init__(n_channels, k, p_d, p_f, runs)
        if not k <= m <= n_channels:
            raise ValueError("need k <= m <= N")
        self.m = m
        self.sets = list(itertools.combinations(range(n_channels), m))
        self.members = np.array(self.sets, dtype=np.int64)
        self.stats = SetStats.zeros(runs, len(self.sets), m)
        self.sweep_pos = np.zeros(runs, dtype=np.int64)
        self.sweep_cap = sweep_cap
        self._chosen = None
        self._pair_index = None

    @property
    def in_sweep(self) -> np.ndarray:
        return self.sweep_pos < len(self.sets)

    def sense(self, slot):
        sweeping = self.in_sweep
        chosen = np.minimum(self.sweep_pos, len(self.sets) - 1)
        if not sweeping.all():
            idx = ucb_index(self.stats.y_set, np.maximum(self.stats.t_set, 1), slot)
            chosen = np.where(sweeping, chosen, np.argmax(idx, axis=1))
        self._chosen = chosen
        mask = np.zeros((self.runs, self.n), dtype=bool)
        mask[np.arange(self.runs)[:, None], self.members[chosen]] = True
        return mask

    def access(self, slot, sense, sensed_free, aux):
        rows = np.arange(self.runs)
        members = self.members[self._chosen]
        free = sensed_free[rows[:, None], members]
        t_pair = self.stats.t_pair[rows, self._chosen]
        y_pair = self.stats.y_pair[rows, self._chosen]
        sweeping = self.in_sweep
        fresh = free & (t_pair == 0)
        first_fresh = fresh & (np.cumsum(fresh, axis=1) == 1)
        index = ucb_index(y_pair, np.maximum(t_pair, 1), slot)
        learned = top_k_mask(index, free, self.k)
        chosen_members = np.where(sweeping[:, None], first_fresh, learned)
        self._member_access = chosen_members
        out = np.zeros((self.runs, self.n), dtype=bool)
        out[rows[:, None], members] = chosen_members
        return out

    def update(self, slot, sense, sensed_free, access, ack):
        rows = np.arange(self.runs)
        chosen = self._chosen
        members = self.members[chosen]
        acked = ack[rows[:, None], members] & self._member_access
        st = self.stats
        st.t_set[rows, chosen] += 1
        st.y_set[rows, chosen] += acked.sum(axis=1)
        st.t_pair[rows, chosen] += self._member_access
        st.y_pair[rows, chosen] += acked
        sweeping = self.in_sweep
        if sweeping.any():
            done = sweeping & (st.t_pair[rows, chosen] > 0).all(axis=1)
            self.sweep_pos[done] += 1
            if self.sweep_cap is not None and slot >= self.sweep_cap:
                self.failed |= self.in_sweep


class GeniePolicy(Policy):
    """Knows Theta: senses the genie's optimal set and accesses by true E[S | X=1]."""

    def __init__(self, model: ChannelModel, k: int, m: int | None = None, runs: int = 1):
        from .genie import genie_best_set_partial, genie_value_full

        super().__init__(model.n_channels, k, model.p_d, model.p_f, runs)
        g = genie_value_full(model, k) if m is None else genie_best_set_partial(model, m, k)
        self.genie = g
        self._sense = np.zeros(model.n_channels, dtype=bool)
        self._sense[list(g.optimal_sense_set)] = True

    def sense(self, slot):
        return np.broadcast_to(self._sense, (self.runs, self.n)).copy()

    def access(self, slot, sense, sensed_free, aux):
        return top_k_mask(self.genie.cond_rewards, sensed_free, self.k)


def make_policy(name: str, model: ChannelModel, k: int = 1, m: int | None = None, runs: int = 1,
                fit: FitOptions | None = None, sweep_cap: int | None = None) -> Policy:
    """Build a policy by name: ``alg1`` .. ``alg4`` or ``genie``."""
    n, p_d, p_f = model.n_channels, model.p_d, model.p_f
    if name == "alg1":
        return CandidateSetPolicy(n, k, p_d, p_f, runs, fit)
    if name == "alg2":
        return SampleMeanPolicy(n, k, p_d, p_f, runs)
    if name in ("alg3", "alg4") and m is None:
        raise ValueError(f"{name} needs a sensing width m")
    if name == "alg3":
        return PartialSensingUCBPolicy(n, m, k, p_d, p_f, runs)
    if name == "alg4":
        return SetUCBPolicy(n, m, k, p_d, p_f, runs, sweep_cap)
    if name == "genie":
        return GeniePolicy(model, k, m, runs)
    raise ValueError(f"unknown policy {name!r}; expected one of {POLICY_NAMES}")
