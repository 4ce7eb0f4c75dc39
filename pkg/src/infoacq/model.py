"""MC-dropout multilayer perceptron in plain numpy.

The network is ``input -> hidden (ReLU, dropout) ... -> logits``. Dropout uses
inverted scaling, so switching it off gives the weight-scaled deterministic
forward pass. Posterior samples share one dropout mask across all inputs of a
pass, which keeps the joint predictive distribution of several inputs
consistent under a single sampled parameter setting.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.special import log_softmax, softmax

from .predictive import PosteriorPredictions

CHECKPOINT_MAGIC = b"IAQM"
CHECKPOINT_VERSION = 1

_PREDICT_CHUNK = 4096


@dataclass(frozen=True)
class Architecture:
    input_dim: int
    hidden_dims: tuple[int, ...] = (128, 128)
    class_count: int = 10
    dropout: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        dims = (self.input_dim, *self.hidden_dims, self.class_count)
        if any(d < 1 for d in dims):
            raise ValueError(f"all layer sizes must be positive, got {dims}")
        if self.class_count < 2:
            raise ValueError("class_count must be >= 2")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_dims, self.class_count)


@dataclass(frozen=True)
class ModelParams:
    arch: Architecture
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        dims = self.arch.layer_dims
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ValueError("layer count does not match architecture")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i], dims[i + 1]) or b.shape != (dims[i + 1],):
                raise ValueError(f"layer {i} has shapes {w.shape}, {b.shape}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {i} has non-finite entries")

    def flat(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def with_arrays(self, arrays) -> "ModelParams":
        n = len(self.weights)
        return replace(self, weights=tuple(arrays[:n]), biases=tuple(arrays[n:]))


@dataclass(frozen=True)
class TrainSchedule:
    epochs: int = 10
    batch_size: int = 64
    learning_rate: float = 0.05
    oversample_target: int = 5096
    weight_decay: float = 5e-4
    momentum: float = 0.9
    replacement: bool = True
    seed: int = 0

    def __post_init__(self):
        problems = [f"{name} must be >= 1" for name in ("epochs", "batch_size", "oversample_target")
                    if getattr(self, name) < 1]
        if self.learning_rate <= 0:
            problems.append("learning_rate must be positive")
        if self.weight_decay < 0:
            problems.append("weight_decay must be >= 0")
        if not 0 <= self.momentum < 1:
            problems.append("momentum must be in [0, 1)")
        if problems:
            raise ValueError("; ".join(problems))


@dataclass(frozen=True)
class SoftLabelSet:
    inputs: np.ndarray
    soft_targets: np.ndarray = field(repr=False)

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=np.float64)
        q = np.asarray(self.soft_targets, dtype=np.float64)
        if x.ndim != 2 or q.ndim != 2 or len(x) != len(q):
            raise ValueError(f"inputs {x.shape} and soft_targets {q.shape} are inconsistent")
        if len(q) and (np.any(q < 0) or np.max(np.abs(q.sum(axis=1) - 1)) > 1e-6):
            raise ValueError("soft_targets rows must be probability distributions")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "soft_targets", q)

    @classmethod
    def empty(cls, input_dim: int, class_count: int) -> "SoftLabelSet":
        return cls(np.zeros((0, input_dim)), np.zeros((0, class_count)))

    def __len__(self):
        return len(self.inputs)


def init_model(arch: Architecture, seed: int) -> ModelParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases."""
    rng = np.random.default_rng(seed)
    dims = arch.layer_dims
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return ModelParams(arch, tuple(weights), tuple(biases))


def _forward(params: ModelParams, x: np.ndarray, masks=None):
    """Logits plus the cache needed for backprop. ``masks`` are already scaled by 1/(1-p)."""
    acts = [x]
    h = x
    n_hidden = len(params.arch.hidden_dims)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        if i < n_hidden:
            h = np.maximum(z, 0.0)
            if masks is not None:
                h = h * masks[i]
        else:
            h = z
        acts.append(h)
    return h, acts


def _backward(params: ModelParams, acts, masks, dlogits):
    n_layers = len(params.weights)
    gw, gb = [None] * n_layers, [None] * n_layers
    delta = dlogits
    for i in reversed(range(n_layers)):
        gw[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ params.weights[i].T
            if masks is not None:
                delta = delta * masks[i - 1]
            delta = delta * (acts[i] > 0)
    return gw, gb


def _loss_and_grads(params, x, targets, masks=None):
    """Mean cross-entropy against soft target rows, with gradients."""
    logits, acts = _forward(params, x, masks)
    logp = log_softmax(logits, axis=1)
    loss = -np.sum(targets * logp) / len(x)
    dlogits = (softmax(logits, axis=1) * targets.sum(axis=1, keepdims=True) - targets) / len(x)
    gw, gb = _backward(params, acts, masks, dlogits)
    return loss, gw, gb


def _dropout_masks(arch: Architecture, shape_prefix, rng):
    if arch.dropout == 0.0:
        return None
    keep = 1.0 - arch.dropout
    return [(rng.random((*shape_prefix, h)) < keep) / keep for h in arch.hidden_dims]


def _one_hot(labels: np.ndarray, c: int) -> np.ndarray:
    out = np.zeros((len(labels), c))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def _check_labeled(params: ModelParams, inputs, labels):
    x = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if len(x) == 0:
        raise ValueError("training data is empty")
    if x.ndim != 2 or x.shape[1] != params.arch.input_dim or len(y) != len(x):
        raise ValueError(f"inputs {x.shape} / labels {y.shape} do not fit the architecture")
    if y.min() < 0 or y.max() >= params.arch.class_count:
        raise ValueError(f"labels must lie in [0, {params.arch.class_count})")
    return x, y


def train_distilled(
    params: ModelParams,
    inputs,
    labels,
    soft: SoftLabelSet | None,
    schedule: TrainSchedule,
    rng: np.random.Generator | None = None,
    history: list | None = None,
) -> ModelParams:
    """Minibatch SGD on cross-entropy for hard labels plus KL to soft targets.

    Hard and soft examples form one stream, so each kind is drawn in
    proportion to its set size. Each epoch draws ``oversample_target``
    examples (with replacement unless ``schedule.replacement`` is off).
    Returns new parameters; ``history`` collects mean loss per epoch.
    """
    arch = params.arch
    x_hard, y_hard = _check_labeled(params, inputs, labels)
    if soft is None:
        soft = SoftLabelSet.empty(arch.input_dim, arch.class_count)
    if soft.inputs.shape[1] != arch.input_dim or soft.soft_targets.shape[1] != arch.class_count:
        raise ValueError("soft label set does not match the architecture")
    x_all = np.concatenate([x_hard, soft.inputs]) if len(soft) else x_hard
    t_all = _one_hot(y_hard, arch.class_count)
    if len(soft):
        t_all = np.concatenate([t_all, soft.soft_targets])
    # Subtracting target entropy turns the soft-target cross-entropy into KL.
    h_all = -np.sum(t_all * np.log(np.maximum(t_all, 1e-300)), axis=1)

    rng = np.random.default_rng(schedule.seed) if rng is None else rng
    arrays = [a.copy() for a in params.flat()]
    velocity = [np.zeros_like(a) for a in arrays]
    n_w = len(params.weights)
    total = len(x_all)
    for _ in range(schedule.epochs):
        if schedule.replacement:
            stream = rng.integers(0, total, size=schedule.oversample_target)
        else:
            reps = -(-schedule.oversample_target // total)
            stream = np.concatenate([rng.permutation(total) for _ in range(reps)])
            stream = stream[: schedule.oversample_target]
        epoch_loss = 0.0
        for start in range(0, len(stream), schedule.batch_size):
            idx = stream[start:start + schedule.batch_size]
            current = params.with_arrays(arrays)
            masks = _dropout_masks(arch, (len(idx),), rng)
            loss, gw, gb = _loss_and_grads(current, x_all[idx], t_all[idx], masks)
            epoch_loss += (loss - h_all[idx].mean()) * len(idx)
            for i, g in enumerate([*gw, *gb]):
                if i < n_w and schedule.weight_decay:
                    g = g + schedule.weight_decay * arrays[i]
                velocity[i] = schedule.momentum * velocity[i] - schedule.learning_rate * g
                arrays[i] = arrays[i] + velocity[i]
        if history is not None:
            history.append(epoch_loss / len(stream))
    return params.with_arrays(arrays)


def train_supervised(params: ModelParams, inputs, labels, schedule: TrainSchedule,
                     rng: np.random.Generator | None = None, history: list | None = None) -> ModelParams:
    return train_distilled(params, inputs, labels, None, schedule, rng, history)


def distillation_loss(params: ModelParams, inputs, labels, soft: SoftLabelSet) -> float:
    """Mean CE(hard) + KL(soft || model) over the combined set, dropout off."""
    arch = params.arch
    x = [np.asarray(inputs, dtype=np.float64).reshape(-1, arch.input_dim), soft.inputs]
    t = [_one_hot(np.asarray(labels, dtype=np.int64), arch.class_count), soft.soft_targets]
    x, t = np.concatenate(x), np.concatenate(t)
    if len(x) == 0:
        return 0.0
    logp = log_softmax(_forward(params, x)[0], axis=1)
    logt = np.log(np.maximum(t, 1e-300))
    return float(np.sum(t * (logt - logp)) / len(x))


def predict_log_probs(params: ModelParams, inputs) -> np.ndarray:
    x = np.asarray(inputs, dtype=np.float64)
    return log_softmax(_forward(params, x)[0], axis=1)


def predict_point(params: ModelParams, inputs) -> PosteriorPredictions:
    """Deterministic forward pass with dropout off, as a K = 1 posterior."""
    return PosteriorPredictions(predict_log_probs(params, inputs)[:, None, :])


def predict_mc(params: ModelParams, inputs, k: int, rng: np.random.Generator | None = None) -> PosteriorPredictions:
    """``k`` MC-dropout passes; pass ``j`` applies one mask to every input."""
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(rng)
    x = np.asarray(inputs, dtype=np.float64)
    arch = params.arch
    masks = _dropout_masks(arch, (k,), rng)
    out = np.empty((len(x), k, arch.class_count))
    n_hidden = len(arch.hidden_dims)
    for start in range(0, len(x), _PREDICT_CHUNK):
        xb = x[start:start + _PREDICT_CHUNK]
        # The first layer sits before any dropout, so it is shared by all passes.
        first = np.maximum(xb @ params.weights[0] + params.biases[0], 0.0)
        for j in range(k):
            h = first if masks is None else first * masks[0][j]
            for i in range(1, len(params.weights)):
                h = h @ params.weights[i] + params.biases[i]
                if i < n_hidden:
                    h = np.maximum(h, 0.0)
                    if masks is not None:
                        h = h * masks[i][j]
            out[start:start + len(xb), j] = log_softmax(h, axis=1)
    return PosteriorPredictions(out)


def analytic_gradients(params: ModelParams, inputs, labels):
    x, y = _check_labeled(params, inputs, labels)
    _, gw, gb = _loss_and_grads(params, x, _one_hot(y, params.arch.class_count))
    return [*gw, *gb]


def mean_cross_entropy(params: ModelParams, inputs, labels) -> float:
    x, y = _check_labeled(params, inputs, labels)
    return float(_loss_and_grads(params, x, _one_hot(y, params.arch.class_count))[0])


def check_gradients(params: ModelParams, inputs, labels, step: float = 1e-5) -> float:
    """Max relative error between backprop and central differences, dropout off.

    Relative error is ``|a - n| / max(|a| + |n|, 1e-8)`` per parameter entry.
    """
    x, y = _check_labeled(params, inputs, labels)
    if len(x) > 8:
        raise ValueError("gradient checks are limited to batches of at most 8")
    analytic = analytic_gradients(params, x, y)
    arrays = [a.copy() for a in params.flat()]
    worst = 0.0
    for a_idx, arr in enumerate(arrays):
        for pos in np.ndindex(arr.shape):
            orig = arr[pos]
            arr[pos] = orig + step
            up = mean_cross_entropy(params.with_arrays(arrays), x, y)
            arr[pos] = orig - step
            down = mean_cross_entropy(params.with_arrays(arrays), x, y)
            arr[pos] = orig
            numeric = (up - down) / (2 * step)
            a = analytic[a_idx][pos]
            worst = max(worst, abs(a - numeric) / max(abs(a) + abs(numeric), 1e-8))
    return worst


def save_checkpoint(params: ModelParams, path) -> None:
    """Binary layout, little-endian: magic, version u32, layer count u32, dims u32[],
    dropout f64, then each weight matrix (row-major) and bias vector in layer order."""
    arch = params.arch
    dims = arch.layer_dims
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(dims)))
        f.write(struct.pack(f"<{len(dims)}I", *dims))
        f.write(struct.pack("<d", arch.dropout))
        for w, b in zip(params.weights, params.biases):
            f.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_checkpoint(path) -> ModelParams:
    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a model checkpoint (bad magic {data[:4]!r})")
    version, n_dims = struct.unpack_from("<II", data, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    offset = 12
    dims = struct.unpack_from(f"<{n_dims}I", data, offset)
    offset += 4 * n_dims
    (dropout,) = struct.unpack_from("<d", data, offset)
    offset += 8
    arch = Architecture(dims[0], tuple(dims[1:-1]), dims[-1], dropout)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        for shape in ((fan_in, fan_out), (fan_out,)):
            count = int(np.prod(shape))
            if offset + 8 * count > len(data):
                raise ValueError(f"{path}: checkpoint is truncated")
            arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape)
            (weights if len(shape) == 2 else biases).append(arr.astype(np.float64))
            offset += 8 * count
    if offset != len(data):
        raise ValueError(f"{path}: {len(data) - offset} trailing bytes in checkpoint")
    return ModelParams(arch, tuple(weights), tuple(biases))
