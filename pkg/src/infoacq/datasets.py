"""Dataset construction: IDX parsing, repeated copies, label noise, class imbalance, blobs."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledDataset:
    inputs: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2 or y.ndim != 1 or len(x) != len(y):
            raise ValueError(f"inputs {x.shape} and labels {y.shape} are inconsistent")
        if self.class_count < 2:
            raise ValueError("class_count must be >= 2")
        if len(y) and (y.min() < 0 or y.max() >= self.class_count):
            raise ValueError(f"labels must lie in [0, {self.class_count})")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "labels", y)

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def subset(self, indices) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.inputs[idx], self.labels[idx], self.class_count)

    def with_labels(self, labels) -> "LabeledDataset":
        return LabeledDataset(self.inputs, labels, self.class_count)


def _read(path) -> bytes:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _parse_idx(raw: bytes, expected_magic: int, path) -> np.ndarray:
    if len(raw) < 8:
        raise IdxFormatError(f"{path}: file too short for an IDX header")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise IdxFormatError(
            f"{path}: magic mismatch, expected 0x{expected_magic:08x}, got 0x{magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    size = int(np.prod(dims))
    if len(raw) - header != size:
        raise IdxFormatError(
            f"{path}: payload has {len(raw) - header} bytes, header promises {size}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def load_idx(images_path, labels_path, class_count: int = 10) -> LabeledDataset:
    """Read an IDX image/label file pair (optionally gzipped); pixels scaled to [0, 1]."""
    images = _parse_idx(_read(images_path), IDX_IMAGES_MAGIC, images_path)
    labels = _parse_idx(_read(labels_path), IDX_LABELS_MAGIC, labels_path)
    if len(images) != len(labels):
        raise IdxFormatError(
            f"{images_path} has {len(images)} images but {labels_path} has {len(labels)} labels")
    x = images.reshape(len(images), -1).astype(np.float64) / 255.0
    return LabeledDataset(x, labels.astype(np.int64), class_count)


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    """Write uint8 images ``[M, rows, cols]`` and labels ``[M]`` as IDX files."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, *images.shape))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, len(labels)))
        f.write(labels.tobytes())


def make_repeated(data: LabeledDataset, copies: int, sigma: float, rng) -> LabeledDataset:
    """``copies`` stacked copies; every copy after the first gets N(0, sigma^2) pixel noise, clamped to [0, 1]."""
    if copies < 1:
        raise ValueError("copies must be >= 1")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    rng = np.random.default_rng(rng)
    parts = [data.inputs]
    for _ in range(copies - 1):
        noisy = data.inputs + sigma * rng.standard_normal(data.inputs.shape)
        parts.append(np.clip(noisy, 0.0, 1.0))
    return LabeledDataset(np.concatenate(parts), np.tile(data.labels, copies), data.class_count)


def apply_label_noise(data: LabeledDataset, rate: float, rng) -> LabeledDataset:
    """Replace each label with probability ``rate`` by a uniformly drawn different class."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must be in [0, 1]")
    rng = np.random.default_rng(rng)
    flip = rng.random(len(data)) < rate
    shift = rng.integers(1, data.class_count, size=len(data))
    labels = np.where(flip, (data.labels + shift) % data.class_count, data.labels)
    return data.with_labels(labels)


def apply_class_imbalance(data: LabeledDataset, keep_probs, rng) -> LabeledDataset:
    keep_probs = np.asarray(keep_probs, dtype=np.float64)
    if keep_probs.shape != (data.class_count,):
        raise ValueError(f"keep_probs needs {data.class_count} entries")
    if np.any(keep_probs < 0) or np.any(keep_probs > 1):
        raise ValueError("keep_probs must lie in [0, 1]")
    if not np.any(keep_probs > 0):
        raise ValueError("keep_probs are all zero; nothing would survive")
    rng = np.random.default_rng(rng)
    keep = rng.random(len(data)) < keep_probs[data.labels]
    return data.subset(np.flatnonzero(keep))


def make_blobs(class_count: int, per_class: int, dim: int, separation: float, rng) -> LabeledDataset:
    """Unit-variance Gaussian blobs with pairwise center distance ``separation``.

    Centers are ``separation / sqrt(2)`` times the first ``class_count`` basis
    vectors. The whole set is then mapped into [0, 1] by one affine map, which
    keeps the blobs isotropic.
    """
    if class_count < 2 or per_class < 1 or dim < 1:
        raise ValueError("class_count >= 2, per_class >= 1 and dim >= 1 are required")
    if dim < class_count:
        raise ValueError(f"dim ({dim}) must be >= class_count ({class_count})")
    rng = np.random.default_rng(rng)
    centers = np.zeros((class_count, dim))
    centers[np.arange(class_count), np.arange(class_count)] = separation / np.sqrt(2)
    labels = np.repeat(np.arange(class_count), per_class)
    x = centers[labels] + rng.standard_normal((len(labels), dim))
    lo, hi = x.min(), x.max()
    x = (x - lo) / (hi - lo)
    return LabeledDataset(x, labels, class_count)


def balanced_indices(labels, per_class: int, rng, class_count: int | None = None) -> np.ndarray:
    """Draw ``per_class`` indices of every class present (sorted)."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(rng)
    classes = range(class_count) if class_count is not None else np.unique(labels)
    picked = []
    for c in classes:
        members = np.flatnonzero(labels == c)
        if len(members) < per_class:
            raise ValueError(f"class {c} has {len(members)} examples, need {per_class}")
        picked.append(rng.choice(members, size=per_class, replace=False))
    return np.sort(np.concatenate(picked))


def subsample(data: LabeledDataset, size: int, rng) -> LabeledDataset:
    """Uniform random subset of ``size`` rows, kept in original order."""
    if not 1 <= size <= len(data):
        raise ValueError(f"size must be in [1, {len(data)}]")
    rng = np.random.default_rng(rng)
    return data.subset(np.sort(rng.choice(len(data), size=size, replace=False)))


def duplicate_pairs(inputs: np.ndarray) -> list[tuple[int, int]]:
    """All index pairs ``(i, j), i < j`` whose rows are bit-identical."""
    inputs = np.ascontiguousarray(inputs)
    groups: dict[bytes, list[int]] = {}
    for i, row in enumerate(inputs):
        groups.setdefault(row.tobytes(), []).append(i)
    pairs = []
    for members in groups.values():
        pairs.extend((a, b) for n, a in enumerate(members) for b in members[n + 1:])
    return sorted(pairs)
