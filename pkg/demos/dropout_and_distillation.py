"""
MC dropout, self-distillation and EIG
=====================================

Train a small dropout MLP on a handful of blob points, read its epistemic
uncertainty with BALD, then distill it on the pool and score with EIG and
EvaluationBALD, the scores that look at the pool as an evaluation set.
"""

import numpy as np

from infoacq.acquisition import score_bald, score_eig, score_evalbald, select_top_k
from infoacq.datasets import balanced_indices, make_blobs
from infoacq.model import (Architecture, SoftLabelSet, TrainSchedule, init_model, predict_mc,
                           train_distilled, train_supervised)

data = make_blobs(3, 100, 3, 3.0, rng=0)
train = balanced_indices(data.labels, 3, rng=0)
pool = np.setdiff1d(np.arange(len(data)), train)

arch = Architecture(3, (64,), 3, dropout=0.5)
parent = train_supervised(init_model(arch, 0), data.inputs[train], data.labels[train], TrainSchedule())
parent_preds = predict_mc(parent, data.inputs[pool], 50, rng=1)
print("five most BALD-uncertain pool points:", select_top_k(score_bald(parent_preds, pool), 5).indices)

# %%
# The evaluation model learns the parent's own marginal predictions on the pool.
soft = SoftLabelSet(data.inputs[pool], parent_preds.probs.mean(axis=1))
child = train_distilled(init_model(arch, 1), data.inputs[train], data.labels[train], soft, TrainSchedule())
child_preds = predict_mc(child, data.inputs[pool], 50, rng=2)

eig = score_eig(parent_preds, child_preds, pool)
evalbald = score_evalbald(parent_preds, child_preds, pool)
print("top EIG:           ", select_top_k(eig, 5).indices)
print("top EvaluationBALD:", select_top_k(evalbald, 5).indices)
print("mean |parent - child| marginal:",
      np.abs(parent_preds.probs.mean(axis=1) - child_preds.probs.mean(axis=1)).mean().round(4))
