# ---
# jupyter:
#   jupytext:
#     text_representation:
#       extension: .py
#       format_name: light
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# # Why code across subchannels
#
# A linear deterministic model: each subchannel has a source-destination,
# relay-destination and source-eavesdropper capacity in bits. Coding across
# subchannels takes a min of sums; coding separately takes a sum of mins.

# +
import numpy as np

from secrelay import DeterministicSubchannel, deterministic_across, deterministic_separate

subs = [DeterministicSubchannel(4, 3, 2), DeterministicSubchannel(5, 7, 3)]
print("across  ", deterministic_across(subs))
print("separate", deterministic_separate(subs))
# -

# The gap is never negative. A quick check on random channels:

rng = np.random.default_rng(0)
gaps = []
for _ in range(1000):
    s = [DeterministicSubchannel(*rng.uniform(0, 10, 3)) for _ in range(rng.integers(1, 9))]
    gaps.append(deterministic_across(s) - deterministic_separate(s))
print("smallest gap %.3g, mean gap %.3f" % (min(gaps), np.mean(gaps)))
