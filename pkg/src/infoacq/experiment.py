"""Experiment configuration, record files and seed-level summaries.

Configs are YAML documents with the sections ``dataset``, ``method``, ``model``
and ``train`` plus top-level ``budget``, ``seeds``, ``output`` and ``timing``.
See ``configs/`` for complete examples; every key is optional except
``method.tag``. Unknown keys are rejected.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from collections import defaultdict
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np
import yaml
from scipy import stats

from . import datasets as ds
from .loop import MethodConfig, method_problems, ModelConfig, PoolState, RoundRecord, run_loop
from .model import TrainSchedule

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Raised with every violation found, not just the first."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid config:\n  " + "\n  ".join(self.problems))


@dataclass(frozen=True)
class DatasetConfig:
    source: str = "blobs"
    # idx source
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    subsample: int | None = None
    test_size: int | None = None
    # blobs source
    class_count: int = 2
    per_class: int = 100
    test_per_class: int = 100
    dim: int = 2
    separation: float = 6.0
    # perturbations
    copies: int = 1
    sigma: float = 0.1
    label_noise: float = 0.0
    keep_probs: tuple[float, ...] | None = None
    initial_per_class: int = 2


@dataclass(frozen=True)
class MethodSection:
    tag: str = ""
    batch_size: int = 10
    alpha: float = 5.0
    k: int | None = None
    m: int = 8192
    exact_config_limit: int = 10_000


@dataclass(frozen=True)
class ModelSection:
    hidden_dims: tuple[int, ...] = (128, 128)
    dropout: float = 0.5


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    method: MethodSection = field(default_factory=MethodSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSchedule = field(default_factory=TrainSchedule)
    budget: int = 100
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    output: str | None = None
    timing: bool = False

    def method_config(self) -> MethodConfig:
        return MethodConfig(**asdict(self.method))

    def model_config(self) -> ModelConfig:
        return ModelConfig(self.model.hidden_dims, self.model.dropout, self.train)


_SECTIONS = {"dataset": DatasetConfig, "method": MethodSection, "model": ModelSection,
             "train": TrainSchedule}
_TUPLE_FIELDS = {"keep_probs", "hidden_dims", "seeds"}


def _coerce(name, value, default, problems, where):
    """Type-check one scalar against its default's type."""
    if value is None:
        return None
    kind = type(default) if default is not None else None
    if name in _TUPLE_FIELDS:
        if not isinstance(value, (list, tuple)):
            problems.append(f"{where}{name}: expected a list, got {value!r}")
            return default
        return tuple(value)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            problems.append(f"{where}{name}: expected true/false, got {value!r}")
            return default
        return value
    if kind is int or name in ("k", "subsample", "test_size"):
        if isinstance(value, bool) or not isinstance(value, int):
            problems.append(f"{where}{name}: expected an integer, got {value!r}")
            return default
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            problems.append(f"{where}{name}: expected a number, got {value!r}")
            return default
        return float(value)
    if not isinstance(value, str):
        problems.append(f"{where}{name}: expected a string, got {value!r}")
        return default
    return value


def _section(cls, raw, problems, where):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        problems.append(f"{where.rstrip('.')}: expected a mapping")
        return cls()
    known = {f.name: f for f in fields(cls)}
    values = {}
    for key, value in raw.items():
        if key not in known:
            problems.append(f"{where}{key}: unknown key")
            continue
        default = cls.__dataclass_fields__[key].default
        values[key] = _coerce(key, value, default, problems, where)
    try:
        return cls(**values)
    except (TypeError, ValueError) as err:
        problems.extend(f"{where}{p}" for p in str(err).split("; "))
        return cls()


def _validate(cfg: ExperimentConfig, problems: list[str]):
    d = cfg.dataset
    if d.source not in ("blobs", "idx"):
        problems.append(f"dataset.source: must be 'blobs' or 'idx', got {d.source!r}")
    if d.source == "idx":
        for key in ("train_images", "train_labels"):
            if not getattr(d, key):
                problems.append(f"dataset.{key}: required for the idx source")
        if bool(d.test_images) != bool(d.test_labels):
            problems.append("dataset.test_images/test_labels: give both or neither")
        if not d.test_images and not d.test_size:
            problems.append("dataset.test_size: required when no test files are given")
    if d.subsample is not None and d.subsample < 1:
        problems.append("dataset.subsample: must be >= 1")
    if d.test_size is not None and d.test_size < 1:
        problems.append("dataset.test_size: must be >= 1")
    if d.class_count < 2:
        problems.append("dataset.class_count: must be >= 2")
    for key in ("per_class", "test_per_class", "dim", "copies"):
        if getattr(d, key) < 1:
            problems.append(f"dataset.{key}: must be >= 1")
    if d.source == "blobs" and d.dim < d.class_count:
        problems.append("dataset.dim: must be >= class_count for blobs")
    if d.separation < 0:
        problems.append("dataset.separation: must be >= 0")
    if d.sigma < 0:
        problems.append("dataset.sigma: must be >= 0")
    if not 0 <= d.label_noise <= 1:
        problems.append("dataset.label_noise: must be in [0, 1]")
    if d.keep_probs is not None:
        if any(not 0 <= p <= 1 for p in d.keep_probs):
            problems.append("dataset.keep_probs: entries must be in [0, 1]")
        elif not any(p > 0 for p in d.keep_probs):
            problems.append("dataset.keep_probs: must not be all zero")
    if d.initial_per_class < 0:
        problems.append("dataset.initial_per_class: must be >= 0")

    if not cfg.method.tag:
        problems.append("method.tag: required")
    else:
        problems.extend(f"method: {p}" for p in method_problems(**asdict(cfg.method)))
    if any(h < 1 for h in cfg.model.hidden_dims):
        problems.append("model.hidden_dims: entries must be >= 1")
    if not 0 <= cfg.model.dropout < 1:
        problems.append("model.dropout: must be in [0, 1)")
    if cfg.budget < 1:
        problems.append("budget: must be >= 1")
    if not cfg.seeds:
        problems.append("seeds: need at least one seed")
    elif len(set(cfg.seeds)) != len(cfg.seeds):
        problems.append("seeds: must be distinct")
    initial = d.initial_per_class * d.class_count
    if cfg.budget < initial:
        problems.append(f"budget: {cfg.budget} is smaller than the initial training set ({initial})")


def parse_config(text: str, base_dir: str | os.PathLike | None = None) -> ExperimentConfig:
    """Parse and validate a YAML experiment config.

    Relative dataset and output paths are resolved against ``base_dir`` when given.
    Raises :class:`ConfigError` listing every problem found.
    """
    try:
        raw = yaml.safe_load(text) or {}
    except yaml.YAMLError as err:
        raise ConfigError([f"not valid YAML: {err}"]) from err
    if not isinstance(raw, dict):
        raise ConfigError(["top level must be a mapping"])
    problems: list[str] = []
    sections = {}
    for name, cls in _SECTIONS.items():
        sections[name] = _section(cls, raw.get(name), problems, f"{name}.")
    top_defaults = ExperimentConfig()
    top = {}
    for key, value in raw.items():
        if key in _SECTIONS:
            continue
        if key not in ("budget", "seeds", "output", "timing"):
            problems.append(f"{key}: unknown key")
            continue
        top[key] = _coerce(key, value, getattr(top_defaults, key), problems, "")
    cfg = ExperimentConfig(**sections, **top)
    if base_dir is not None:
        d = cfg.dataset
        paths = {}
        for key in ("train_images", "train_labels", "test_images", "test_labels"):
            value = getattr(d, key)
            if value and not os.path.isabs(value):
                paths[key] = os.path.normpath(Path(base_dir) / value)
        cfg = replace(cfg, dataset=replace(d, **paths))
        if cfg.output and not os.path.isabs(cfg.output):
            cfg = replace(cfg, output=os.path.normpath(Path(base_dir) / cfg.output))
    _validate(cfg, problems)
    if problems:
        raise ConfigError(problems)
    return cfg


def _plain(value):
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


def render_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(_plain(asdict(cfg)), sort_keys=False)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)


# --------------------------------------------------------------------------
# datasets per seed


def build_data(cfg: DatasetConfig, seed: int) -> tuple[ds.LabeledDataset, ds.LabeledDataset, np.ndarray]:
    """Pool dataset, test set and initial training indices for one seed."""
    streams = np.random.default_rng([seed, 0xDA7A]).spawn(6)
    if cfg.source == "blobs":
        per = cfg.per_class + cfg.test_per_class
        full = ds.make_blobs(cfg.class_count, per, cfg.dim, cfg.separation, streams[0])
        is_test = np.zeros(len(full), dtype=bool)
        for c in range(cfg.class_count):
            members = np.flatnonzero(full.labels == c)
            is_test[streams[1].choice(members, size=cfg.test_per_class, replace=False)] = True
        source, test = full.subset(np.flatnonzero(~is_test)), full.subset(np.flatnonzero(is_test))
    else:
        source = ds.load_idx(cfg.train_images, cfg.train_labels, cfg.class_count)
        if cfg.test_images:
            test = ds.load_idx(cfg.test_images, cfg.test_labels, cfg.class_count)
        else:
            order = streams[1].permutation(len(source))
            test = source.subset(np.sort(order[: cfg.test_size]))
            source = source.subset(np.sort(order[cfg.test_size:]))
    if cfg.subsample is not None and cfg.subsample < len(source):
        source = ds.subsample(source, cfg.subsample, streams[2])
    if cfg.label_noise > 0:
        source = ds.apply_label_noise(source, cfg.label_noise, streams[3])
    if cfg.keep_probs is not None:
        source = ds.apply_class_imbalance(source, cfg.keep_probs, streams[4])
    pool = ds.make_repeated(source, cfg.copies, cfg.sigma, streams[5])
    initial = ds.balanced_indices(pool.labels, cfg.initial_per_class,
                                  np.random.default_rng([seed, 0x1417]),
                                  class_count=pool.class_count) if cfg.initial_per_class else np.array([], dtype=np.int64)
    return pool, test, initial


# --------------------------------------------------------------------------
# record files


def _record_line(record: RoundRecord, timing: bool) -> str:
    d = record.to_dict()
    if not timing:
        d["wall_seconds"] = 0.0
    return json.dumps(d, separators=(",", ":")) + "\n"


def write_records(records: Iterable[RoundRecord], path, timing: bool = True) -> None:
    """Append records as JSON lines, flushing each one to disk."""
    try:
        with open(path, "a", encoding="utf-8") as f:
            for record in records:
                f.write(_record_line(record, timing))
                f.flush()
                os.fsync(f.fileno())
    except OSError as err:
        raise OSError(f"cannot write records to {path}: {err}") from err


class RecordFile(NamedTuple):
    records: list[RoundRecord]
    partial_tail: bool


def read_records(path) -> RecordFile:
    """Parse a record file; an incomplete final line is reported, not raised."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.split("\n")
    tail = lines.pop()  # empty when the file ends with a newline
    records = [RoundRecord.from_dict(json.loads(line)) for line in lines if line.strip()]
    partial = bool(tail.strip())
    if partial:
        log.warning("%s: ignoring incomplete trailing record (%d bytes)", path, len(tail))
    return RecordFile(records, partial)


def run_experiment(cfg: ExperimentConfig, seed_offset: int = 0, out=None) -> dict[int, list[RoundRecord]]:
    """Run every seed of ``cfg``; records are appended to ``out`` as they complete.

    ``out`` (or ``cfg.output``) is truncated first so a rerun reproduces the file.
    """
    out = out if out is not None else cfg.output
    if out is not None:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text("")
    method, model_cfg = cfg.method_config(), cfg.model_config()
    results = {}
    for base in cfg.seeds:
        seed = base + seed_offset
        pool, test, initial = build_data(cfg.dataset, seed)
        state = PoolState.initial(pool, initial)
        schedule = replace(model_cfg.schedule, seed=seed)
        records = []
        for record in run_loop(state, test, method, replace(model_cfg, schedule=schedule),
                               cfg.budget, seed):
            records.append(record)
            if out is not None:
                write_records([record], out, timing=cfg.timing)
        results[seed] = records
    return results


# --------------------------------------------------------------------------
# summaries


@dataclass(frozen=True)
class SummaryRow:
    method_tag: str
    train_size: int
    mean_accuracy: float
    ci95_half_width: float
    n_seeds: int


def summarize(records: Iterable[RoundRecord]) -> list[SummaryRow]:
    """Mean accuracy and Student-t 95% half-width per (method, training-set size)."""
    cells: dict[tuple[str, int], list[float]] = defaultdict(list)
    for r in records:
        cells[(r.method_tag, r.train_size)].append(r.test_accuracy)
    if not cells:
        raise ValueError("no records to summarize")
    rows = []
    for (method, size), values in sorted(cells.items()):
        n = len(values)
        mean = math.fsum(values) / n
        if n == 1:
            log.warning("%s at %d labels has a single seed; CI half-width set to 0", method, size)
            half = 0.0
        else:
            var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
            half = float(stats.t.ppf(0.975, n - 1) * math.sqrt(var / n))
        rows.append(SummaryRow(method, size, mean, half, n))
    return rows


def summary_csv(rows: Iterable[SummaryRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "train_size", "mean", "ci95", "n"])
    for r in rows:
        w.writerow([r.method_tag, r.train_size, f"{r.mean_accuracy:.6g}",
                    f"{r.ci95_half_width:.6g}", r.n_seeds])
    return buf.getvalue()
