"""Channel occupancy and imperfect-sensing model.

Channels are indexed from 0 in code. A sensing outcome vector ``u`` over ``n``
channels is encoded as the integer ``sum(u[i] << i)``, so bit ``i`` is
channel ``i``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

REFERENCE_THETA = (0.9, 0.8, 0.657, 0.564, 0.5, 0.456, 0.404, 0.34)
REFERENCE_HOMOGENEOUS_PD = 0.8
REFERENCE_HOMOGENEOUS_PF = 0.3
REFERENCE_HETEROGENEOUS_PD = (0.8, 0.8, 0.7, 0.75, 0.9, 0.67, 0.85, 0.8)
REFERENCE_HETEROGENEOUS_PF = (0.3, 0.3, 0.2, 0.25, 0.36, 0.15, 0.32, 0.3)


class DegenerateChannelError(ValueError):
    """Raised when a channel is never sensed free, so E[S | X=1] is undefined."""


@dataclass(frozen=True)
class ChannelModel:
    """Ground-truth free probabilities and sensor quality for ``n`` channels.

    Scalar ``p_d``/``p_f`` are broadcast to every channel (homogeneous sensing).
    """

    theta: np.ndarray
    p_d: np.ndarray
    p_f: np.ndarray
    reward_unit: float = 1.0

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float).reshape(-1)
        n = theta.size
        p_d = np.broadcast_to(np.asarray(self.p_d, dtype=float), (n,)).copy()
        p_f = np.broadcast_to(np.asarray(self.p_f, dtype=float), (n,)).copy()
        if n == 0:
            raise ValueError("model needs at least one channel")
        if np.any(theta <= 0) or np.any(theta > 1):
            raise ValueError("theta must lie in (0, 1]")
        if np.any(p_f < 0) or np.any(p_d > 1) or np.any(p_d <= p_f):
            raise ValueError("need 0 <= p_f < p_d <= 1 on every channel")
        if not self.reward_unit > 0:
            raise ValueError("reward_unit must be positive")
        for name, arr in (("theta", theta), ("p_d", p_d), ("p_f", p_f)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "reward_unit", float(self.reward_unit))

    @property
    def n_channels(self) -> int:
        return self.theta.size

    @property
    def homogeneous(self) -> bool:
        return bool(np.all(self.p_d == self.p_d[0]) and np.all(self.p_f == self.p_f[0]))

    @property
    def sensed_free(self) -> np.ndarray:
        return sensed_free_prob(self.theta, self.p_d, self.p_f)

    @property
    def cond_rewards(self) -> np.ndarray:
        return cond_reward(self.theta, self.p_d, self.p_f)

    def truncated(self, n: int) -> "ChannelModel":
        """The model restricted to its first ``n`` channels."""
        return ChannelModel(self.theta[:n], self.p_d[:n], self.p_f[:n], self.reward_unit)

    def with_reward_unit(self, reward_unit: float) -> "ChannelModel":
        return ChannelModel(self.theta, self.p_d, self.p_f, reward_unit)


def reference_model(sensing: str = "homogeneous", reward_unit: float = 1.0) -> ChannelModel:
    """The 8-channel evaluation model, with ``homogeneous`` or ``heterogeneous`` sensing."""
    if sensing == "homogeneous":
        return ChannelModel(REFERENCE_THETA, REFERENCE_HOMOGENEOUS_PD, REFERENCE_HOMOGENEOUS_PF, reward_unit)
    if sensing == "heterogeneous":
        return ChannelModel(REFERENCE_THETA, REFERENCE_HETEROGENEOUS_PD, REFERENCE_HETEROGENEOUS_PF, reward_unit)
    raise ValueError(f"unknown sensing mode {sensing!r}")


def sensed_free_prob(theta, p_d, p_f):
    """Probability that a channel is sensed free: (1-p_f)*theta + (1-p_d)*(1-theta)."""
    theta = np.asarray(theta, dtype=float)
    out = (1.0 - np.asarray(p_f)) * theta + (1.0 - np.asarray(p_d)) * (1.0 - theta)
    return out if out.ndim else float(out)


def cond_reward(theta, p_d, p_f):
    """E[S | X=1], the chance a sensed-free channel is really free.

    Raises ``DegenerateChannelError`` where the channel is never sensed free
    (``theta == 0`` with ``p_d == 1``).
    """
    theta = np.asarray(theta, dtype=float)
    num = (1.0 - np.asarray(p_f)) * theta
    f = np.asarray(sensed_free_prob(theta, p_d, p_f))
    if np.any(f == 0):
        raise DegenerateChannelError("channel is never sensed free")
    out = num / f
    return out if out.ndim else float(out)


def outcome_matrix(n: int) -> np.ndarray:
    """All ``2**n`` outcome vectors as rows; row ``c`` has bit ``i`` of ``c`` in column ``i``."""
    codes = np.arange(1 << n)
    return ((codes[:, None] >> np.arange(n)) & 1).astype(np.uint8)


def encode_outcomes(x) -> np.ndarray:
    """Integer codes of binary outcome vectors along the last axis."""
    x = np.asarray(x)
    weights = np.left_shift(1, np.arange(x.shape[-1]), dtype=np.int64)
    return (x.astype(np.int64) * weights).sum(axis=-1)


def outcome_probs(f) -> np.ndarray:
    """Joint outcome distribution for independent channels with sensed-free probabilities ``f``.

    ``f`` has shape ``(..., n)``; the result has shape ``(..., 2**n)`` indexed by outcome code.
    """
    f = np.asarray(f, dtype=float)
    p = np.ones(f.shape[:-1] + (1,))
    for i in range(f.shape[-1]):
        fi = f[..., i : i + 1]
        p = np.concatenate([p * (1.0 - fi), p * fi], axis=-1)
    return p


def joint_outcome_prob(u, model: ChannelModel) -> float:
    """Probability that the full sensing result equals ``u``."""
    u = np.asarray(u)
    if u.shape != (model.n_channels,):
        raise ValueError("outcome vector length must equal the number of channels")
    f = model.sensed_free
    return float(np.prod(np.where(u == 1, f, 1.0 - f)))


@dataclass
class SlotOutcome:
    """One slot of the channel process.

    ``sensing_results`` is indexed by channel; entries for unsensed channels
    are -1 (absent). ``accessed_set`` and ``ack`` are filled by the policy step.
    """

    slot_index: int
    true_states: np.ndarray
    sensed_set: tuple[int, ...]
    sensing_results: np.ndarray
    accessed_set: tuple[int, ...] = ()
    ack: tuple[int, ...] = field(default_factory=tuple)

    @property
    def sensed_free_set(self) -> tuple[int, ...]:
        return tuple(int(i) for i in self.sensed_set if self.sensing_results[i] == 1)

    def record_access(self, accessed) -> None:
        accessed = tuple(sorted(int(i) for i in accessed))
        if not set(accessed) <= set(self.sensed_free_set):
            raise ValueError("can only access channels sensed free")
        self.accessed_set = accessed
        self.ack = tuple(int(self.true_states[i]) for i in accessed)


def run_rng(master_seed: int, run_index: int) -> np.random.Generator:
    """Stream owned by one simulation run, a hash of (master_seed, run_index)."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(run_index)]))


def slot_uniforms(rng: np.random.Generator, n: int, slots: int = 1, out: np.ndarray | None = None) -> np.ndarray:
    """Draw the float32 uniforms for ``slots`` consecutive slots.

    Each row holds, in order: n state uniforms (channel 0..n-1), n sensing
    uniforms (channel 0..n-1), and one auxiliary uniform for policy
    randomisation. Sensing uniforms are drawn for every channel so stream
    consumption does not depend on the decisions.
    """
    if out is None:
        return rng.random((slots, 2 * n + 1), dtype=np.float32)
    return rng.random(dtype=np.float32, out=out)


def realize(uniforms: np.ndarray, model: ChannelModel):
    """Map slot uniforms to (true states, sensing results for all channels, aux).

    Thresholds are compared in the uniforms' precision.
    """
    n = model.n_channels
    dt = uniforms.dtype
    states = uniforms[..., :n] < model.theta.astype(dt)
    miss = (1.0 - model.p_d).astype(dt)
    sensed = uniforms[..., n : 2 * n] < np.where(states, (1.0 - model.p_f).astype(dt), miss)
    return states, sensed, uniforms[..., 2 * n]


def sample_slot(model: ChannelModel, sensed_set, rng: np.random.Generator, slot_index: int = 1) -> SlotOutcome:
    """Draw one slot's channel states and the sensing results on ``sensed_set``."""
    sensed_set = tuple(sorted(int(i) for i in sensed_set))
    if not sensed_set:
        raise ValueError("sensed_set must be nonempty")
    states, x_all, _ = realize(slot_uniforms(rng, model.n_channels)[0], model)
    x = np.full(model.n_channels, -1, dtype=np.int8)
    idx = list(sensed_set)
    x[idx] = x_all[idx]
    return SlotOutcome(slot_index, states.astype(np.int8), sensed_set, x)
