"""
Beliefs, windows and decodability
=================================

How much history does an agent need? Enumerate every history of a small
POMDP, group the exact beliefs by their last-L window, and measure the spread.
"""

import numpy as np

from lvrep_pomdp.pomdp import (belief_init, belief_update, decodability_gaps, flip, gridmask, lock,
                               obs_prob)

# FLIP has two states; action 0 keeps the state, action 1 flips it. With
# eta < 1 the observation is a noisy copy of the state.
noisy = flip(eta=0.8, horizon=5)
b = belief_init(noisy, 1)
print("belief after o0=1:", b)
print("P(o1 | b, stay):", obs_prob(noisy, b, 0))
print("belief after stay, o1=1:", belief_update(noisy, b, 0, 1))

# Bayes consistency: averaging the updated beliefs over o' gives the pushed-forward belief.
po = obs_prob(noisy, b, 1)
mix = sum(po[o] * belief_update(noisy, b, 1, o) for o in range(2))
print("recomposed:", mix, " pushed:", b @ noisy.trans[:, 1, :])

# The decodability gap per depth: 0 means the last-L window pins down the belief.
for L in (1, 2, 3):
    print(f"noisy FLIP L={L}:", np.round(decodability_gaps(noisy, L, 4), 3))

# Deterministic emission makes FLIP 1-decodable.
print("clean FLIP L=1:", decodability_gaps(flip(1.0, 5), 1, 4))

# LOCK(L=2) hides progress behind ghost states that are only told apart by the
# previous observation, so one observation is not enough but two are.
lk = lock(L=2, code_length=3)
print("LOCK L=1:", np.round(decodability_gaps(lk, 1, lk.horizon - 1), 3))
print("LOCK L=2:", decodability_gaps(lk, 2, lk.horizon - 1))

# GRIDMASK shows position only; the velocity is recovered from two positions.
g = gridmask()
print("GRIDMASK L=1:", np.round(decodability_gaps(g, 1, 3), 3))
print("GRIDMASK L=2:", decodability_gaps(g, 2, 3))
