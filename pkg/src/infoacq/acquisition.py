"""Acquisition: scoring the pool and turning scores into acquired batches.

Scorers (BALD, EIG, EvaluationBALD) produce a :class:`ScoreVector`. Greedy
joint selectors (BatchBALD, BatchEvaluationBALD) and the stochastic samplers
(power sampling, UniformTop, ThompsonBALD, random) produce a
:class:`BatchSelection`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .predictive import (
    DEFAULT_MC_SAMPLES,
    EXACT_CONFIG_LIMIT,
    JointMode,
    JointState,
    PosteriorPredictions,
    candidate_joint_entropies,
    expected_conditional_entropies,
    joint_extend,
    predictive_entropies,
    to_monte_carlo,
)

POWER_EPS = 1e-12
DEFAULT_ALPHA = 5.0
_MI_SLACK = 1e-9


@dataclass(frozen=True)
class ScoreVector:
    scores: np.ndarray
    pool_indices: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        pool = np.asarray(self.pool_indices, dtype=np.int64)
        if scores.shape != pool.shape or scores.ndim != 1:
            raise ValueError("scores and pool_indices must be aligned 1-d sequences")
        if np.any(np.isnan(scores)):
            raise ValueError("scores contain NaN")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "pool_indices", pool)

    def __len__(self):
        return len(self.scores)


@dataclass(frozen=True)
class BatchSelection:
    indices: tuple[int, ...]
    step_scores: tuple[float, ...]
    method_tag: str
    seed: int | None = None

    def __post_init__(self):
        if len(set(self.indices)) != len(self.indices):
            raise ValueError("selected indices must be distinct")


@dataclass(frozen=True)
class McConfig:
    """Joint-entropy settings for the greedy selectors."""

    m: int = DEFAULT_MC_SAMPLES
    exact_config_limit: int = EXACT_CONFIG_LIMIT


def _rng_and_seed(rng):
    if isinstance(rng, np.random.Generator):
        return rng, None
    seed = None if rng is None else int(rng)
    return np.random.default_rng(seed), seed


def _pool(pool_indices, n):
    if pool_indices is None:
        return np.arange(n, dtype=np.int64)
    pool = np.asarray(pool_indices, dtype=np.int64)
    if pool.shape != (n,):
        raise ValueError(f"pool_indices must have length {n}")
    return pool


def _argmax_lowest(values: np.ndarray, pool: np.ndarray) -> int:
    """Position of the maximum; ties go to the lowest pool index."""
    best = np.max(values)
    tied = np.flatnonzero(values == best)
    return int(tied[np.argmin(pool[tied])])


def _require_samples(preds: PosteriorPredictions, what: str):
    if preds.k < 2:
        raise ValueError(
            f"{what} needs K >= 2 posterior samples; with a point estimate the "
            "epistemic uncertainty is undefined"
        )


def _bald(preds: PosteriorPredictions) -> np.ndarray:
    scores = predictive_entropies(preds) - expected_conditional_entropies(preds)
    if scores.size and scores.min() < -_MI_SLACK:
        raise ArithmeticError(f"BALD score {scores.min()} below numerical slack")
    return np.maximum(scores, 0.0)


def score_bald(preds: PosteriorPredictions, pool_indices=None) -> ScoreVector:
    """Mutual information between each candidate's label and the parameters."""
    _require_samples(preds, "BALD")
    return ScoreVector(_bald(preds), _pool(pool_indices, preds.n))


def _check_pair(parent: PosteriorPredictions, evaluation: PosteriorPredictions):
    if parent.n != evaluation.n or parent.c != evaluation.c:
        raise ValueError(
            f"shape mismatch: parent N={parent.n}, C={parent.c}; "
            f"evaluation N={evaluation.n}, C={evaluation.c}"
        )


def score_eig(parent_preds: PosteriorPredictions, eval_preds: PosteriorPredictions,
              pool_indices=None) -> ScoreVector:
    """Evaluation information gain: predictive entropy drop from parent to evaluation model.

    Either model may be a point estimate (K = 1). Slightly negative values from
    imperfect distillation are passed through.
    """
    _check_pair(parent_preds, eval_preds)
    scores = predictive_entropies(parent_preds) - predictive_entropies(eval_preds)
    return ScoreVector(scores, _pool(pool_indices, parent_preds.n))


def score_evalbald(parent_preds: PosteriorPredictions, eval_preds: PosteriorPredictions,
                   pool_indices=None) -> ScoreVector:
    """BALD under the parent minus BALD under the evaluation model; may be negative."""
    _check_pair(parent_preds, eval_preds)
    _require_samples(parent_preds, "EvaluationBALD (parent)")
    _require_samples(eval_preds, "EvaluationBALD (evaluation model)")
    return ScoreVector(_bald(parent_preds) - _bald(eval_preds),
                       _pool(pool_indices, parent_preds.n))


def select_top_k(scores: ScoreVector, b: int) -> BatchSelection:
    if b < 1:
        raise ValueError("batch size must be >= 1")
    order = np.lexsort((scores.pool_indices, -scores.scores))[:b]
    tag = "top_k" if b <= len(scores) else "top_k[whole-pool]"
    return BatchSelection(
        indices=tuple(int(i) for i in scores.pool_indices[order]),
        step_scores=tuple(float(s) for s in scores.scores[order]),
        method_tag=tag,
    )


class _GreedyJoint:
    """Greedy joint-MI bookkeeping for one posterior."""

    def __init__(self, preds: PosteriorPredictions, mc: McConfig, rng):
        self.preds = preds
        self.mc = mc
        self.rng = rng
        self.cond = expected_conditional_entropies(preds)
        self.cond_sum = 0.0
        self.state = JointState.empty(preds.k)

    def candidate_mi(self, positions: np.ndarray) -> np.ndarray:
        st = self.state
        if st.mode is JointMode.EXACT and st.n_configs * self.preds.c > self.mc.exact_config_limit:
            st = self.state = to_monte_carlo(st, self.preds, self.mc.m, self.rng)
        joint = candidate_joint_entropies(st, self.preds, positions)
        return joint - (self.cond_sum + self.cond[positions])

    def add(self, position: int):
        self.state = joint_extend(self.state, self.preds, position, rng=self.rng,
                                  m=self.mc.m, limit=self.mc.exact_config_limit)
        self.cond_sum += self.cond[position]


def _greedy(objective, n: int, b: int, pool: np.ndarray, adders, tag: str, seed):
    remaining = np.ones(n, dtype=bool)
    chosen, steps = [], []
    for _ in range(min(b, n)):
        positions = np.flatnonzero(remaining)
        values = objective(positions)
        j = _argmax_lowest(values, pool[positions])
        pos = int(positions[j])
        chosen.append(pos)
        steps.append(float(values[j]))
        remaining[pos] = False
        for add in adders:
            add(pos)
    return BatchSelection(tuple(int(pool[p]) for p in chosen), tuple(steps), tag, seed)


def select_batchbald(preds: PosteriorPredictions, b: int, mc_config: McConfig | None = None,
                     rng=None, pool_indices=None) -> BatchSelection:
    """Greedy maximization of the joint mutual information between batch labels and parameters.

    ``step_scores[i]`` is the joint objective of the first ``i + 1`` members.
    Joint entropies are exact while the configuration count stays under
    ``mc_config.exact_config_limit`` and Monte Carlo estimates afterwards.
    """
    _require_samples(preds, "BatchBALD")
    if b < 1:
        raise ValueError("batch size must be >= 1")
    rng, seed = _rng_and_seed(rng)
    pool = _pool(pool_indices, preds.n)
    g = _GreedyJoint(preds, mc_config or McConfig(), rng)
    return _greedy(g.candidate_mi, preds.n, b, pool, [g.add], "batchbald", seed)


def select_batch_evalbald(parent_preds: PosteriorPredictions, eval_preds: PosteriorPredictions,
                          b: int, mc_config: McConfig | None = None, rng=None,
                          pool_indices=None) -> BatchSelection:
    """Greedy maximization of joint MI under the parent minus joint MI under the evaluation model.

    The difference is not submodular; plain greedy is applied regardless.
    """
    _check_pair(parent_preds, eval_preds)
    _require_samples(parent_preds, "BatchEvaluationBALD (parent)")
    _require_samples(eval_preds, "BatchEvaluationBALD (evaluation model)")
    if b < 1:
        raise ValueError("batch size must be >= 1")
    rng, seed = _rng_and_seed(rng)
    rng_parent, rng_eval = rng.spawn(2)
    mc = mc_config or McConfig()
    pool = _pool(pool_indices, parent_preds.n)
    gp = _GreedyJoint(parent_preds, mc, rng_parent)
    ge = _GreedyJoint(eval_preds, mc, rng_eval)

    def objective(positions):
        return gp.candidate_mi(positions) - ge.candidate_mi(positions)

    return _greedy(objective, parent_preds.n, b, pool, [gp.add, ge.add],
                   "batch_evalbald", seed)


def power_keys(scores: np.ndarray, alpha: float, rng: np.random.Generator) -> np.ndarray:
    """Gumbel-perturbed log-weights; sorting them descending samples without replacement."""
    log_w = alpha * np.log(np.maximum(scores, POWER_EPS)) if alpha > 0 else np.zeros(len(scores))
    return log_w + rng.gumbel(size=len(scores))


def sample_power(scores: ScoreVector, b: int, alpha: float = DEFAULT_ALPHA, rng=None) -> BatchSelection:
    """Draw ``b`` candidates without replacement with probability proportional to ``score**alpha``.

    Scores are clamped below at ``POWER_EPS``. The exponential race (Gumbel
    top-k) used here induces the same distribution as drawing one candidate
    at a time from the renormalized remaining weights.
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if b < 1 or b > len(scores):
        raise ValueError(f"batch size {b} must be in [1, {len(scores)}]")
    rng, seed = _rng_and_seed(rng)
    keys = power_keys(scores.scores, alpha, rng)
    order = np.argsort(-keys, kind="stable")[:b]
    return BatchSelection(
        indices=tuple(int(i) for i in scores.pool_indices[order]),
        step_scores=tuple(float(s) for s in scores.scores[order]),
        method_tag=f"power[alpha={alpha:g}]",
        seed=seed,
    )


def sample_uniform_top(scores: ScoreVector, b: int, class_count: int, rng=None) -> BatchSelection:
    """Uniformly pick ``b`` of the ``b * class_count`` top scorers."""
    if b < 1 or b > len(scores):
        raise ValueError(f"batch size {b} must be in [1, {len(scores)}]")
    rng, seed = _rng_and_seed(rng)
    top = select_top_k(scores, min(b * class_count, len(scores)))
    picks = rng.choice(len(top.indices), size=b, replace=False)
    return BatchSelection(
        indices=tuple(top.indices[i] for i in picks),
        step_scores=tuple(top.step_scores[i] for i in picks),
        method_tag="uniform_top",
        seed=seed,
    )


def sample_thompson(preds: PosteriorPredictions, b: int, rng=None, pool_indices=None) -> BatchSelection:
    """ThompsonBALD: each slot scores BALD on its own disjoint group of posterior samples.

    The K samples are shuffled and split into ``b`` groups; slot ``j`` takes the
    best not-yet-chosen candidate under group ``j``.
    """
    if b < 1 or b > preds.n:
        raise ValueError(f"batch size {b} must be in [1, {preds.n}]")
    if preds.k < 2 * b:
        raise ValueError(f"ThompsonBALD needs K >= 2b posterior samples (K={preds.k}, b={b})")
    rng, seed = _rng_and_seed(rng)
    pool = _pool(pool_indices, preds.n)
    groups = np.array_split(rng.permutation(preds.k), b)
    remaining = np.ones(preds.n, dtype=bool)
    chosen, steps = [], []
    for group in groups:
        scores = _bald(PosteriorPredictions(preds.log_probs[:, np.sort(group)]))
        positions = np.flatnonzero(remaining)
        j = _argmax_lowest(scores[positions], pool[positions])
        chosen.append(int(positions[j]))
        steps.append(float(scores[positions[j]]))
        remaining[positions[j]] = False
    return BatchSelection(tuple(int(pool[p]) for p in chosen), tuple(steps), "thompson_bald", seed)


def select_random(n: int, b: int, rng=None, pool_indices=None) -> BatchSelection:
    if b < 1 or b > n:
        raise ValueError(f"batch size {b} must be in [1, {n}]")
    rng, seed = _rng_and_seed(rng)
    pool = _pool(pool_indices, n)
    picks = rng.permutation(n)[:b]
    return BatchSelection(tuple(int(pool[p]) for p in picks), (0.0,) * b, "random", seed)
