"""Regret accounting against the genie and the logarithmic bound for the homogeneous UCB rule."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .genie import GenieValue, _subset_value
from .model import ChannelModel, SlotOutcome


class InconsistentDecisionError(ValueError):
    pass


def slot_expected_reward(access_set, outcome: SlotOutcome, model: ChannelModel) -> float:
    """Expected reward of accessing ``access_set`` given the slot's sensing results.

    Each accessed channel is worth E[S | X=1] reward units; the realized ACKs
    are not used.
    """
    access_set = tuple(access_set)
    if not set(access_set) <= set(outcome.sensed_free_set):
        raise InconsistentDecisionError("access set contains channels not sensed free")
    c = model.cond_rewards
    return model.reward_unit * float(sum(c[i] for i in sorted(access_set)))


def default_checkpoints(slots: int) -> np.ndarray:
    """Powers of two and powers of ten up to ``slots``, plus ``slots`` itself."""
    points = {slots}
    for base in (2, 10):
        p = base
        while p <= slots:
            points.add(p)
            p *= base
    return np.array(sorted(x for x in points if x >= 2), dtype=np.int64)


@dataclass
class RunLog:
    """Cumulative per-run sums sampled at checkpoints, shape ``(runs, checkpoints)``.

    ``policy_expected`` and ``genie_paired`` are in unit reward (multiply by
    ``reward_unit``); ``genie_paired`` is the genie's conditional reward on the
    same slots' sensing results. ``realized`` counts ACKs.
    """

    run_indices: np.ndarray
    checkpoints: np.ndarray
    policy_expected: np.ndarray
    genie_paired: np.ndarray
    realized: np.ndarray
    failed: np.ndarray
    reward_unit: float = 1.0
    sense_trace: np.ndarray | None = None
    access_trace: np.ndarray | None = None

    @staticmethod
    def concatenate(logs: list["RunLog"]) -> "RunLog":
        def cat(name):
            parts = [getattr(log, name) for log in logs]
            return None if any(p is None for p in parts) else np.concatenate(parts, axis=0 if name not in ("sense_trace", "access_trace") else 1)

        first = logs[0]
        return RunLog(cat("run_indices"), first.checkpoints, cat("policy_expected"), cat("genie_paired"),
                      cat("realized"), cat("failed"), first.reward_unit, cat("sense_trace"), cat("access_trace"))


@dataclass
class RegretTrace:
    """Regret at checkpoints, one row per run."""

    slots: np.ndarray
    regret: np.ndarray
    realized_reward: np.ndarray

    @property
    def runs(self) -> int:
        return self.regret.shape[0]

    @property
    def regret_over_log(self) -> np.ndarray:
        """R(t)/ln t; NaN (absent) where t <= 1."""
        logs = np.log(self.slots.astype(float))
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.slots >= 2, self.regret / np.where(self.slots >= 2, logs, 1.0), np.nan)

    @property
    def mean_regret(self) -> np.ndarray:
        if self.runs == 0:
            return np.full(self.slots.size, np.nan)
        return self.regret.mean(axis=0)

    @property
    def stderr_regret(self) -> np.ndarray:
        if self.runs < 2:
            return np.full(self.slots.size, np.nan if self.runs == 0 else 0.0)
        return self.regret.std(axis=0, ddof=1) / math.sqrt(self.runs)

    @property
    def mean_regret_over_log(self) -> np.ndarray:
        if self.runs == 0:
            return np.full(self.slots.size, np.nan)
        return self.regret_over_log.mean(axis=0)

    def at(self, slot: int) -> int:
        """Column of checkpoint ``slot``."""
        hits = np.flatnonzero(self.slots == slot)
        if hits.size == 0:
            raise KeyError(f"slot {slot} is not a checkpoint")
        return int(hits[0])


def regret_trace(log: RunLog, genie: GenieValue, checkpoints=None, benchmark: str = "paired") -> RegretTrace:
    """Cumulative regret of each logged run against the genie.

    ``benchmark="analytic"`` uses ``t * genie.per_slot_value``; ``"paired"``
    uses the genie's conditional reward on the same realized sensing results,
    which has the same expectation and far less variance. Failed runs are dropped.
    """
    keep = ~log.failed
    slots = log.checkpoints
    policy = log.policy_expected[keep] * log.reward_unit
    if benchmark == "analytic":
        regret = slots[None, :] * genie.per_slot_value - policy
    elif benchmark == "paired":
        regret = log.genie_paired[keep] * log.reward_unit - policy
    else:
        raise ValueError(f"unknown benchmark {benchmark!r}")
    realized = log.realized[keep] * log.reward_unit
    if checkpoints is not None:
        cols = np.searchsorted(slots, checkpoints)
        if np.any(cols >= slots.size) or np.any(slots[np.minimum(cols, slots.size - 1)] != checkpoints):
            raise KeyError("requested checkpoints were not logged")
        slots, regret, realized = slots[cols], regret[:, cols], realized[:, cols]
    return RegretTrace(np.asarray(slots), regret, realized)


@dataclass(frozen=True)
class BoundInputs:
    delta: float
    theta_sorted: np.ndarray
    p_d: float
    p_f: float
    m: int

    def __post_init__(self):
        theta = np.asarray(self.theta_sorted, dtype=float)
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if np.any(np.diff(theta) >= 0):
            raise ValueError("theta must be strictly decreasing")
        if not 1 <= self.m < theta.size:
            raise ValueError("need 1 <= m < N")
        object.__setattr__(self, "theta_sorted", theta)

    @classmethod
    def from_model(cls, model: ChannelModel, m: int) -> "BoundInputs":
        """Bound inputs for a homogeneous model whose channels are listed by decreasing theta."""
        if not model.homogeneous:
            raise ValueError("the bound applies to homogeneous sensing only")
        return cls(bound_delta(model, m), model.theta, float(model.p_d[0]), float(model.p_f[0]), m)


def bound_delta(model: ChannelModel, m: int) -> float:
    """Largest per-slot genie reward: E[max over the top-m channels of E[S|X=1] X]."""
    top = np.argsort(-model.theta, kind="stable")[:m]
    return _subset_value(model, sorted(top.tolist()), 1)


def alg3_bound_coefficients(inputs: BoundInputs) -> tuple[float, float]:
    """(coefficient of Delta ln t, constant term / Delta)."""
    th, m, gap2 = inputs.theta_sorted, inputs.m, (inputs.p_d - inputs.p_f) ** 2
    n = th.size
    outside = sum(8.0 / ((th[m - 1] - th[i]) ** 2 * gap2) for i in range(m, n))
    inside = sum(8.0 / ((th[i] - th[k]) ** 2 * gap2) for i in range(m) for k in range(i + 1, m))
    const = (n - m) * (m * math.pi**2 / 3 + 1) + math.comb(m, 2) * (math.pi**2 / 3 + 1)
    return outside + inside, const


def alg3_regret_bound(inputs: BoundInputs, t) -> float:
    """Finite-time regret bound for the homogeneous partial-sensing UCB rule at slot ``t``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 2):
        raise ValueError("bound needs t >= 2")
    slope, const = alg3_bound_coefficients(inputs)
    out = inputs.delta * (np.log(t) * slope + const)
    return out if out.ndim else float(out)
