"""Monte-Carlo engine: drives a batch of independently seeded runs slot by slot."""
from __future__ import annotations

from typing import Callable

import numpy as np

from .genie import GenieValue, genie_access
from .model import ChannelModel, realize, run_rng, slot_uniforms
from .policies import Policy
from .regret import RunLog

CHUNK_SLOTS = 1024


class InvariantViolation(AssertionError):
    pass


def check_decision(sense, sensed_free, access, k: int) -> None:
    """Access only sensed-free channels, at most ``k`` of them."""
    if np.any(access & ~sensed_free) or np.any(access & ~sense):
        raise InvariantViolation("accessed a channel that was not sensed free")
    if np.any(access.sum(axis=1) > k):
        raise InvariantViolation(f"accessed more than k={k} channels")


def weighted_counts(counts: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Row-wise ``counts @ weights`` summed in channel order.

    Elementwise accumulation keeps each run's value independent of the batch
    it is simulated in; a BLAS product may change summation order with shape.
    """
    out = np.zeros(counts.shape[0])
    for i, w in enumerate(weights):
        out += counts[:, i] * w
    return out


def simulate(model: ChannelModel, policy_factory: Callable[[int], Policy], genie: GenieValue, slots: int,
             run_indices, master_seed: int, checkpoints, record_trace: bool = False,
             check_invariants: bool = True, on_slot: Callable | None = None) -> RunLog:
    """Simulate ``slots`` slots for each run in ``run_indices``.

    Run ``r`` draws all of its randomness from ``run_rng(master_seed, r)``, so
    its result does not depend on which other runs share the batch.
    ``on_slot(slot, policy, decision)`` is called after every slot if given.
    """
    run_indices = np.asarray(run_indices, dtype=np.int64)
    runs = run_indices.size
    checkpoints = np.asarray(checkpoints, dtype=np.int64)
    if checkpoints.size and (checkpoints[0] < 1 or checkpoints[-1] > slots or np.any(np.diff(checkpoints) <= 0)):
        raise ValueError("checkpoints must be strictly increasing within [1, slots]")
    policy = policy_factory(runs)
    n = model.n_channels
    rngs = [run_rng(master_seed, r) for r in run_indices]
    c = model.cond_rewards
    genie_sense = np.zeros(n, dtype=bool)
    genie_sense[list(genie.optimal_sense_set)] = True

    # per-channel access counts; rewards are counts @ c, so equal counts give equal sums
    policy_counts = np.zeros((runs, n), dtype=np.int64)
    genie_counts = np.zeros((runs, n), dtype=np.int64)
    acks = np.zeros(runs, dtype=np.int64)
    shape = (runs, checkpoints.size)
    out_policy, out_genie, out_realized = np.zeros(shape), np.zeros(shape), np.zeros(shape)
    sense_trace = np.zeros((slots, runs, n), dtype=bool) if record_trace else None
    access_trace = np.zeros((slots, runs, n), dtype=bool) if record_trace else None

    col = 0
    slot = 0
    buf = np.empty((runs, CHUNK_SLOTS, 2 * n + 1), dtype=np.float32)
    while slot < slots:
        size = min(CHUNK_SLOTS, slots - slot)
        uniforms = buf[:, :size]
        for r, rng in enumerate(rngs):
            slot_uniforms(rng, n, size, out=uniforms[r])
        states, sensing, aux = realize(uniforms, model)
        genie_mask = genie_access(c, genie_sense, sensing, genie.k)
        seg_start = 0
        for j in range(size):
            slot += 1
            decision = policy.step(slot, states[:, j], sensing[:, j], aux[:, j])
            if check_invariants:
                check_decision(decision.sense, decision.sensed_free, decision.access, policy.k)
            policy_counts += decision.access
            acks += decision.ack.sum(axis=1)
            if record_trace:
                sense_trace[slot - 1] = decision.sense
                access_trace[slot - 1] = decision.access
            if on_slot is not None:
                on_slot(slot, policy, decision)
            if col < checkpoints.size and checkpoints[col] == slot:
                out_policy[:, col] = weighted_counts(policy_counts, c)
                genie_counts += genie_mask[:, seg_start : j + 1].sum(axis=1, dtype=np.int64)
                seg_start = j + 1
                out_genie[:, col] = weighted_counts(genie_counts, c)
                out_realized[:, col] = acks
                col += 1
        genie_counts += genie_mask[:, seg_start:size].sum(axis=1, dtype=np.int64)
    return RunLog(run_indices, checkpoints, out_policy, out_genie, out_realized, policy.failed.copy(),
                  model.reward_unit, sense_trace, access_trace)
