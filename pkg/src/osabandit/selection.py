"""Deterministic top-k selection shared by the oracle and the learning rules."""
import numpy as np


def top_k_mask(scores, eligible, k: int) -> np.ndarray:
    """Mask of the ``k`` highest-scoring eligible entries along the last axis.

    Ties go to the lowest index. Fewer than ``k`` eligible entries selects all of them.
    """
    eligible = np.asarray(eligible, dtype=bool)
    key = np.where(eligible, scores, -np.inf)
    if k == 1:
        best = np.argmax(key, axis=-1)[..., None]
        return eligible & (np.arange(key.shape[-1]) == best)
    eligible = np.broadcast_to(eligible, key.shape)
    order = np.argsort(-key, axis=-1, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.broadcast_to(np.arange(order.shape[-1]), order.shape), axis=-1)
    return eligible & (ranks < k)



def fixed_order_top_k(order: np.ndarray, eligible, k: int) -> np.ndarray:
    """:func:`top_k_mask` for scores that are the same in every row.

    ``order`` lists the columns by decreasing score (lowest index first on ties).
    """
    eligible = np.asarray(eligible, dtype=bool)
    ranked = eligible[..., order]
    if k == 1:
        first = np.argmax(ranked, axis=-1)[..., None]
        picked = ranked & (np.arange(ranked.shape[-1]) == first)
        out = np.empty_like(picked)
        out[..., order] = picked
        return out
    picked = ranked & (np.cumsum(ranked, axis=-1) <= k)
    out = np.empty_like(picked)
    out[..., order] = picked
    return out
