"""
Tempered sampling instead of top-k
==================================

PowerBALD draws a batch without replacement with probability proportional
to score**alpha. alpha=0 is uniform and large alpha recovers top-k.
"""

from collections import Counter

import numpy as np

from infoacq.acquisition import ScoreVector, sample_power

scores = ScoreVector([0.40, 0.35, 0.10, 0.05, 0.01], np.arange(5))

for alpha in (0.0, 1.0, 5.0, 1e6):
    firsts = Counter(sample_power(scores, 2, alpha, rng=s).indices[0] for s in range(5000))
    share = [firsts[i] / 5000 for i in range(5)]
    print(f"alpha={alpha:<8g} share of first picks:", np.round(share, 3))

# Multiplying every score by a constant changes nothing.
a = sample_power(scores, 3, 5.0, rng=7).indices
b = sample_power(ScoreVector(scores.scores * 10, scores.pool_indices), 3, 5.0, rng=7).indices
print("scale invariant:", a == b)
