"""
Why batches need a joint score
==============================

Two candidates that carry the same information look equally good to BALD,
so top-k picks both. The joint mutual information discounts the copy by
what the first one already revealed.
"""

import numpy as np

from infoacq.acquisition import score_bald, select_batchbald, select_top_k
from infoacq.predictive import PosteriorPredictions, joint_entropy_exact, joint_entropy_mc

rng = np.random.default_rng(0)

# Three candidates, eight posterior samples, two classes. Candidate 1 is a copy of 0.
informative = rng.dirichlet([0.05, 0.05], size=8)
other = rng.dirichlet([0.5, 0.5], size=8)
preds = PosteriorPredictions.from_probs(np.stack([informative, informative, other]))

bald = score_bald(preds)
print("BALD per candidate:", np.round(bald.scores, 4))
print("top-2 BALD picks:  ", select_top_k(bald, 2).indices)

sel = select_batchbald(preds, 2)
print("BatchBALD picks:   ", sel.indices, "joint MI after each step", np.round(sel.step_scores, 4))

# %%
# The exact joint entropy enumerates C^B label configurations. Past the
# configuration limit the Monte Carlo estimator takes over; it agrees closely.
big = PosteriorPredictions.from_probs(rng.dirichlet(np.ones(3), size=(8, 20)))
members = [0, 1, 2, 3, 4]
print("exact H:", joint_entropy_exact(big, members))
print("MC H:   ", joint_entropy_mc(big, members, m=20_000, rng=1))
