"""The active-learning loop: train, score the pool, acquire, evaluate."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Iterator

import numpy as np

from . import acquisition as acq
from .datasets import LabeledDataset
from .model import (
    Architecture,
    ModelParams,
    SoftLabelSet,
    TrainSchedule,
    init_model,
    predict_log_probs,
    predict_mc,
    train_distilled,
    train_supervised,
)
from .predictive import DEFAULT_MC_SAMPLES, EXACT_CONFIG_LIMIT, PosteriorPredictions

log = logging.getLogger(__name__)

METHODS = (
    "Random",
    "BALD",
    "BatchBALD",
    "EIG",
    "EvaluationBALD",
    "BatchEvaluationBALD",
    "PowerBALD",
    "PowerEIG",
    "PowerEvaluationBALD",
    "ThompsonBALD",
    "UniformTopBALD",
)
EVAL_MODEL_METHODS = {"EIG", "EvaluationBALD", "BatchEvaluationBALD", "PowerEIG", "PowerEvaluationBALD"}
POINT_ESTIMATE_OK = {"Random", "EIG", "PowerEIG"}


class PoolExhausted(RuntimeError):
    pass


def default_k(tag: str) -> int:
    return 100 if tag.startswith("Batch") else 20


def method_problems(tag, batch_size, alpha, k, m, exact_config_limit) -> list[str]:
    """Every constraint violation of a method configuration."""
    out = []
    if tag not in METHODS:
        out.append(f"unknown method {tag!r}; choose from {', '.join(METHODS)}")
    k = default_k(tag) if k is None else k
    if batch_size < 1:
        out.append("batch_size must be >= 1")
    if alpha < 0:
        out.append(f"alpha must be >= 0, got {alpha}")
    if k < 1:
        out.append("k must be >= 1")
    elif k < 2 and tag not in POINT_ESTIMATE_OK:
        out.append(f"{tag} requires k >= 2 posterior samples, got k={k}")
    if tag == "ThompsonBALD" and k < 2 * batch_size:
        out.append(f"ThompsonBALD requires k >= 2 * batch_size, got k={k}")
    if m < 1:
        out.append("m must be >= 1")
    if exact_config_limit < 1:
        out.append("exact_config_limit must be >= 1")
    return out


@dataclass(frozen=True)
class MethodConfig:
    tag: str
    batch_size: int = 10
    alpha: float = acq.DEFAULT_ALPHA
    k: int | None = None
    m: int = DEFAULT_MC_SAMPLES
    exact_config_limit: int = EXACT_CONFIG_LIMIT

    def __post_init__(self):
        if self.k is None and self.tag in METHODS:
            object.__setattr__(self, "k", default_k(self.tag))
        problems = method_problems(self.tag, self.batch_size, self.alpha, self.k, self.m,
                                   self.exact_config_limit)
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def mc(self) -> acq.McConfig:
        return acq.McConfig(self.m, self.exact_config_limit)

    @property
    def needs_eval_model(self) -> bool:
        return self.tag in EVAL_MODEL_METHODS


@dataclass(frozen=True)
class ModelConfig:
    hidden_dims: tuple[int, ...] = (128, 128)
    dropout: float = 0.5
    schedule: TrainSchedule = field(default_factory=TrainSchedule)

    def architecture(self, data: LabeledDataset) -> Architecture:
        return Architecture(data.dim, self.hidden_dims, data.class_count, self.dropout)


@dataclass(frozen=True)
class PoolState:
    """Which dataset rows are labeled (train) and which are still unlabeled (pool)."""

    dataset: LabeledDataset
    train_indices: tuple[int, ...]
    pool_indices: tuple[int, ...]
    pseudo_labels: np.ndarray | None = None

    def __post_init__(self):
        train, pool = set(self.train_indices), set(self.pool_indices)
        if len(train) != len(self.train_indices) or len(pool) != len(self.pool_indices):
            raise ValueError("train and pool indices must be distinct")
        if train & pool:
            raise ValueError("train and pool indices overlap")
        if any(not 0 <= i < len(self.dataset) for i in train | pool):
            raise ValueError("indices fall outside the dataset")
        if self.pseudo_labels is not None:
            q = self.pseudo_labels
            if q.shape != (len(self.pool_indices), self.dataset.class_count):
                raise ValueError("pseudo_labels must be [pool, C]")
            if np.max(np.abs(q.sum(axis=1) - 1)) > 1e-6:
                raise ValueError("pseudo_labels rows must sum to 1")

    @classmethod
    def initial(cls, dataset: LabeledDataset, train_indices) -> "PoolState":
        train = tuple(int(i) for i in train_indices)
        chosen = set(train)
        pool = tuple(i for i in range(len(dataset)) if i not in chosen)
        return cls(dataset, train, pool)

    def train_inputs(self) -> np.ndarray:
        return self.dataset.inputs[list(self.train_indices)]

    def train_labels(self) -> np.ndarray:
        return self.dataset.labels[list(self.train_indices)]

    def pool_inputs(self) -> np.ndarray:
        return self.dataset.inputs[list(self.pool_indices)]

    def acquire(self, indices) -> "PoolState":
        """Oracle step: labels of ``indices`` become visible as training data."""
        picked = [int(i) for i in indices]
        pool = set(self.pool_indices)
        missing = [i for i in picked if i not in pool]
        if missing:
            raise ValueError(f"indices {missing} are not in the pool")
        taken = set(picked)
        return PoolState(
            self.dataset,
            self.train_indices + tuple(picked),
            tuple(i for i in self.pool_indices if i not in taken),
        )


@dataclass(frozen=True)
class RoundRecord:
    round: int
    train_size: int
    test_accuracy: float
    selected_indices: tuple[int, ...]
    method_tag: str
    seed: int
    wall_seconds: float

    FIELDS = ("round", "train_size", "test_accuracy", "selected_indices", "method_tag", "seed",
              "wall_seconds")

    def to_dict(self) -> dict:
        return {
            "round": self.round,
            "train_size": self.train_size,
            "test_accuracy": self.test_accuracy,
            "selected_indices": list(self.selected_indices),
            "method_tag": self.method_tag,
            "seed": self.seed,
            "wall_seconds": self.wall_seconds,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RoundRecord":
        if set(d) != set(cls.FIELDS):
            raise ValueError(f"record fields {sorted(d)} differ from {sorted(cls.FIELDS)}")
        return cls(
            round=int(d["round"]),
            train_size=int(d["train_size"]),
            test_accuracy=float(d["test_accuracy"]),
            selected_indices=tuple(int(i) for i in d["selected_indices"]),
            method_tag=str(d["method_tag"]),
            seed=int(d["seed"]),
            wall_seconds=float(d["wall_seconds"]),
        )


def evaluate_accuracy(params: ModelParams, test_set: LabeledDataset) -> float:
    """Argmax accuracy with dropout off; ties resolve to the lowest class id."""
    if len(test_set) == 0:
        raise ValueError("test set is empty")
    pred = np.argmax(predict_log_probs(params, test_set.inputs), axis=1)
    return float(np.mean(pred == test_set.labels))


@dataclass
class RoundArtifacts:
    """Everything a round computed before the oracle step; used for inspection and tests."""

    parent: ModelParams
    evaluation: ModelParams | None
    parent_preds: PosteriorPredictions | None
    eval_preds: PosteriorPredictions | None
    scores: acq.ScoreVector | None
    selection: acq.BatchSelection
    pseudo_labels: np.ndarray | None


def _round_seeds(rng: np.random.Generator):
    keys = ("init", "train", "eval_init", "eval_train", "parent_mc", "eval_mc", "select")
    return dict(zip(keys, rng.spawn(len(keys))))


def train_parent(state: PoolState, model_cfg: ModelConfig, init_rng, train_rng) -> ModelParams:
    arch = model_cfg.architecture(state.dataset)
    params = init_model(arch, int(init_rng.integers(2**63)))
    return train_supervised(params, state.train_inputs(), state.train_labels(),
                            model_cfg.schedule, train_rng)


def select_from_predictions(method: MethodConfig, b: int, parent_preds, eval_preds, pool,
                            class_count: int, rng) -> tuple[acq.ScoreVector | None, acq.BatchSelection]:
    """Apply ``method`` to posterior predictions over the pool rows ``pool``."""
    tag = method.tag
    if tag == "Random":
        return None, acq.select_random(len(pool), b, rng, pool_indices=pool)
    if tag == "BatchBALD":
        return None, acq.select_batchbald(parent_preds, b, method.mc, rng, pool_indices=pool)
    if tag == "BatchEvaluationBALD":
        return None, acq.select_batch_evalbald(parent_preds, eval_preds, b, method.mc, rng,
                                               pool_indices=pool)
    if tag == "ThompsonBALD":
        return None, acq.sample_thompson(parent_preds, b, rng, pool_indices=pool)
    if tag in ("BALD", "PowerBALD", "UniformTopBALD"):
        scores = acq.score_bald(parent_preds, pool)
    elif tag in ("EIG", "PowerEIG"):
        scores = acq.score_eig(parent_preds, eval_preds, pool)
    else:
        scores = acq.score_evalbald(parent_preds, eval_preds, pool)
    if tag.startswith("Power"):
        return scores, acq.sample_power(scores, b, method.alpha, rng)
    if tag == "UniformTopBALD":
        return scores, acq.sample_uniform_top(scores, b, class_count, rng)
    return scores, acq.select_top_k(scores, b)


def score_pool(state: PoolState, method: MethodConfig, model_cfg: ModelConfig, rng,
               parent: ModelParams | None = None) -> RoundArtifacts:
    """Train the models a method needs and select a batch; touches no pool labels."""
    if not state.pool_indices:
        raise PoolExhausted("the pool is empty")
    seeds = _round_seeds(np.random.default_rng(rng))
    if parent is None:
        parent = train_parent(state, model_cfg, seeds["init"], seeds["train"])
    b = min(method.batch_size, len(state.pool_indices))
    pool = np.asarray(state.pool_indices, dtype=np.int64)
    if method.tag == "Random":
        _, sel = select_from_predictions(method, b, None, None, pool, state.dataset.class_count,
                                         seeds["select"])
        return RoundArtifacts(parent, None, None, None, None, sel, None)

    x_pool = state.pool_inputs()
    parent_preds = predict_mc(parent, x_pool, method.k, seeds["parent_mc"])
    evaluation = eval_preds = pseudo = None
    if method.needs_eval_model:
        # The pool doubles as the evaluation set, labeled by the parent's own predictions.
        pseudo = parent_preds.probs.mean(axis=1)
        pseudo = pseudo / pseudo.sum(axis=1, keepdims=True)
        arch = model_cfg.architecture(state.dataset)
        evaluation = init_model(arch, int(seeds["eval_init"].integers(2**63)))
        evaluation = train_distilled(evaluation, state.train_inputs(), state.train_labels(),
                                     SoftLabelSet(x_pool, pseudo), model_cfg.schedule,
                                     seeds["eval_train"])
        eval_preds = predict_mc(evaluation, x_pool, method.k, seeds["eval_mc"])
    scores, sel = select_from_predictions(method, b, parent_preds, eval_preds, pool,
                                          state.dataset.class_count, seeds["select"])
    return RoundArtifacts(parent, evaluation, parent_preds, eval_preds, scores, sel, pseudo)


def run_round(state: PoolState, test_set: LabeledDataset, method: MethodConfig,
              model_cfg: ModelConfig, rng, round_index: int = 0,
              seed: int = 0) -> tuple[PoolState, RoundRecord]:
    """One acquisition round; the record's accuracy is that of the model that made the choice."""
    start = time.perf_counter()
    art = score_pool(state, method, model_cfg, rng)
    accuracy = evaluate_accuracy(art.parent, test_set)
    new_state = state.acquire(art.selection.indices)
    record = RoundRecord(
        round=round_index,
        train_size=len(state.train_indices),
        test_accuracy=accuracy,
        selected_indices=art.selection.indices,
        method_tag=method.tag,
        seed=seed,
        wall_seconds=time.perf_counter() - start,
    )
    log.info("seed %d round %d: %d labels, accuracy %.4f", seed, round_index,
             record.train_size, accuracy)
    return new_state, record


def final_record(state: PoolState, test_set: LabeledDataset, method: MethodConfig,
                 model_cfg: ModelConfig, rng, round_index: int, seed: int) -> RoundRecord:
    """Evaluation-only record for the last training set (no acquisition)."""
    start = time.perf_counter()
    seeds = _round_seeds(np.random.default_rng(rng))
    parent = train_parent(state, model_cfg, seeds["init"], seeds["train"])
    return RoundRecord(round_index, len(state.train_indices), evaluate_accuracy(parent, test_set),
                       (), method.tag, seed, time.perf_counter() - start)


def run_loop(state: PoolState, test_set: LabeledDataset, method: MethodConfig,
             model_cfg: ModelConfig, budget: int, seed: int) -> Iterator[RoundRecord]:
    """Acquire until ``budget`` labels are held, yielding one record per round.

    The final partial batch is shrunk to land exactly on the budget.
    """
    if budget < len(state.train_indices):
        raise ValueError(f"budget {budget} is below the initial training set size "
                         f"{len(state.train_indices)}")
    round_index = 0
    while len(state.train_indices) < budget and state.pool_indices:
        b = min(method.batch_size, budget - len(state.train_indices))
        rng = np.random.default_rng([seed, round_index])
        state, record = run_round(state, test_set, replace(method, batch_size=b), model_cfg,
                                  rng, round_index, seed)
        yield record
        round_index += 1
    yield final_record(state, test_set, method, model_cfg,
                       np.random.default_rng([seed, round_index]), round_index, seed)

