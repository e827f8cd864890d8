"""
Channel model and the genie benchmark
=====================================

Eight channels, each free with its own probability. A sensor reads a free
channel as free with probability 1 - p_f, and a busy one as free with
probability 1 - p_d. We look at how much a "free" reading is worth on each
channel and what a fully informed user earns per slot.
"""

import numpy as np

from osabandit import genie_best_set_partial, genie_value_full, reference_model

hom = reference_model("homogeneous")
het = reference_model("heterogeneous")

# Probability of a free reading, and the chance the channel is really free given one.
print("theta         ", np.round(hom.theta, 3))
print("sensed free   ", np.round(hom.sensed_free, 3))
print("E[S|X=1] hom  ", np.round(hom.cond_rewards, 4))
print("E[S|X=1] het  ", np.round(het.cond_rewards, 4))

# With heterogeneous sensors the ranking by E[S|X=1] no longer follows theta.
print("rank by theta ", np.argsort(-het.theta))
print("rank by reward", np.argsort(-het.cond_rewards, kind="stable"))

# Per-slot value of the genie when every channel is sensed, as the access width grows.
for k in (1, 3, 5, 7, 8):
    print(f"full sensing, K={k}: {genie_value_full(hom, k).per_slot_value:.4f}")

# With only M channels sensed per slot the genie also picks which ones to sense.
for m in (2, 4, 6):
    g = genie_best_set_partial(het, m, 1)
    print(f"partial sensing, M={m}: set {g.optimal_sense_set}, value {g.per_slot_value:.4f}")
