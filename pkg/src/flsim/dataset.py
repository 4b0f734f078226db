"""Labeled datasets, IDX I/O and Dirichlet non-IID partitioning."""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass
from typing import BinaryIO

import numpy as np

from .errors import ConsistencyError, FormatError, InfeasiblePartitionError, TruncatedStreamError
from .rng import stream

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    features: np.ndarray  # (n, D) float64
    labels: np.ndarray  # (n,) int64
    num_classes: int

    def __post_init__(self):
        if self.features.ndim != 2:
            raise ConsistencyError("features must be a 2-D matrix")
        if len(self.features) != len(self.labels):
            raise ConsistencyError(
                f"{len(self.features)} feature rows but {len(self.labels)} labels"
            )
        if self.num_classes < 1:
            raise ConsistencyError("num_classes must be positive")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ConsistencyError("label outside [0, num_classes)")
        if not np.all(np.isfinite(self.features)):
            raise ConsistencyError("features contain NaN or Inf")

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return len(self.labels)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LabeledDataset):
            return NotImplemented
        return (
            self.num_classes == other.num_classes
            and self.features.shape == other.features.shape
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )

    def subset(self, indices) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.features[idx], self.labels[idx], self.num_classes)


@dataclass(frozen=True, eq=False)
class ClientShard:
    client_id: int
    sample_indices: np.ndarray
    class_histogram: np.ndarray

    def __len__(self) -> int:
        return len(self.sample_indices)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ClientShard):
            return NotImplemented
        return (
            self.client_id == other.client_id
            and np.array_equal(self.sample_indices, other.sample_indices)
            and np.array_equal(self.class_histogram, other.class_histogram)
        )

    def to_bytes(self) -> bytes:
        head = struct.pack("<qqq", self.client_id, len(self.sample_indices), len(self.class_histogram))
        return (
            head
            + self.sample_indices.astype("<i8").tobytes()
            + self.class_histogram.astype("<i8").tobytes()
        )


@dataclass(frozen=True)
class PartitionConfig:
    num_clients: int = 15
    alpha: float = 0.1
    min_samples_per_client: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.num_clients < 1:
            raise ValueError("num_clients must be >= 1")
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if self.min_samples_per_client < 0:
            raise ValueError("min_samples_per_client must be >= 0")


# ---------------------------------------------------------------------------
# IDX

def _read_exact(src: BinaryIO, n: int, what: str) -> bytes:
    buf = src.read(n)
    if buf is None or len(buf) != n:
        got = 0 if buf is None else len(buf)
        raise TruncatedStreamError(f"{what}: expected {n} bytes, got {got}")
    return buf


def _read_header(src: BinaryIO, magic: int, ndim: int, what: str) -> tuple[int, ...]:
    (found,) = struct.unpack(">I", _read_exact(src, 4, what))
    if found != magic:
        raise FormatError(f"{what}: bad magic 0x{found:08x}, expected 0x{magic:08x}")
    return struct.unpack(">" + "I" * ndim, _read_exact(src, 4 * ndim, what))


def load_idx(images_source: BinaryIO, labels_source: BinaryIO, num_classes: int = 10) -> LabeledDataset:
    """Read an IDX image/label pair; pixels are scaled to [0, 1] by /255."""
    n_img, rows, cols = _read_header(images_source, IMAGES_MAGIC, 3, "images")
    (n_lab,) = _read_header(labels_source, LABELS_MAGIC, 1, "labels")
    if n_img != n_lab:
        raise ConsistencyError(f"{n_img} images but {n_lab} labels")
    dim = rows * cols
    raw = _read_exact(images_source, n_img * dim, "images")
    lab = _read_exact(labels_source, n_lab, "labels")
    features = np.frombuffer(raw, dtype=np.uint8).reshape(n_img, dim).astype(np.float64) / 255.0
    labels = np.frombuffer(lab, dtype=np.uint8).astype(np.int64)
    return LabeledDataset(features, labels, num_classes)


def load_idx_files(images_path, labels_path, num_classes: int = 10) -> LabeledDataset:
    with open(images_path, "rb") as fi, open(labels_path, "rb") as fl:
        return load_idx(fi, fl, num_classes)


def dump_idx(dataset: LabeledDataset) -> tuple[bytes, bytes]:
    """Serialize to (images, labels) IDX bytes.

    Features are clipped to [0, 1] and rounded to the nearest 1/255 step.
    Square feature dims are written as side x side images, others as 1 x D.
    """
    n, d = dataset.features.shape
    side = math.isqrt(d)
    rows, cols = (side, side) if side * side == d else (1, d)
    pixels = np.rint(np.clip(dataset.features, 0.0, 1.0) * 255.0).astype(np.uint8)
    images = struct.pack(">IIII", IMAGES_MAGIC, n, rows, cols) + pixels.tobytes()
    if dataset.num_classes > 256:
        raise FormatError("IDX labels are single bytes")
    labels = struct.pack(">II", LABELS_MAGIC, n) + dataset.labels.astype(np.uint8).tobytes()
    return images, labels


def roundtrip_idx(dataset: LabeledDataset) -> LabeledDataset:
    images, labels = dump_idx(dataset)
    return load_idx(io.BytesIO(images), io.BytesIO(labels), dataset.num_classes)


# ---------------------------------------------------------------------------
# synthetic data

def synth_dataset(num_classes: int, samples_per_class: int, feature_dim: int, seed: int,
                  separation: float = 4.0) -> LabeledDataset:
    """Gaussian class clusters: one mean per class, unit-variance noise around it.

    Mean entries are drawn with std ``separation / sqrt(2 * feature_dim)`` so
    the expected distance between two class means is about ``separation``
    whatever the dimension.
    """
    if min(num_classes, samples_per_class, feature_dim) < 1:
        raise ValueError("num_classes, samples_per_class and feature_dim must be positive")
    scale = separation / np.sqrt(2.0 * feature_dim)
    means = stream(seed, "synth-means").normal(0.0, scale, size=(num_classes, feature_dim))
    noise = stream(seed, "synth-noise").standard_normal((num_classes * samples_per_class, feature_dim))
    labels = np.repeat(np.arange(num_classes, dtype=np.int64), samples_per_class)
    return LabeledDataset(means[labels] + noise, labels, num_classes)


def train_test_split(dataset: LabeledDataset, test_fraction: float, seed: int
                     ) -> tuple[LabeledDataset, LabeledDataset]:
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    order = stream(seed, "train-test-split").permutation(len(dataset))
    n_test = int(round(test_fraction * len(dataset)))
    return dataset.subset(np.sort(order[n_test:])), dataset.subset(np.sort(order[:n_test]))


def subsample(dataset: LabeledDataset, size: int, seed: int) -> LabeledDataset:
    if size <= 0 or size >= len(dataset):
        return dataset
    idx = stream(seed, "subsample").choice(len(dataset), size=size, replace=False)
    return dataset.subset(np.sort(idx))


# ---------------------------------------------------------------------------
# partitioning

def class_histogram(shard: ClientShard | np.ndarray, dataset: LabeledDataset) -> np.ndarray:
    idx = shard.sample_indices if isinstance(shard, ClientShard) else np.asarray(shard, dtype=np.int64)
    if len(idx) and (idx.min() < 0 or idx.max() >= len(dataset)):
        raise ConsistencyError("shard index out of range for dataset")
    return np.bincount(dataset.labels[idx], minlength=dataset.num_classes).astype(np.int64)


def dirichlet_partition(dataset: LabeledDataset, cfg: PartitionConfig) -> list[ClientShard]:
    """Split sample indices across clients with per-class Dirichlet(alpha) proportions.

    Each class's indices are shuffled and cut contiguously at the cumulative
    proportions. Clients left below ``min_samples_per_client`` are then topped
    up one sample at a time from the largest shard (lowest id on ties).
    """
    n = len(dataset)
    if n == 0:
        raise InfeasiblePartitionError("cannot partition an empty dataset")
    if n < cfg.num_clients * cfg.min_samples_per_client:
        raise InfeasiblePartitionError(
            f"{n} samples cannot give {cfg.num_clients} clients "
            f"{cfg.min_samples_per_client} samples each"
        )
    rng = stream(cfg.seed, "partition")
    buckets: list[list[int]] = [[] for _ in range(cfg.num_clients)]
    for c in range(dataset.num_classes):
        idx = np.flatnonzero(dataset.labels == c)
        props = rng.dirichlet(np.full(cfg.num_clients, cfg.alpha))
        rng.shuffle(idx)
        cuts = (np.cumsum(props) * len(idx)).astype(np.int64)[:-1]
        for client, part in enumerate(np.split(idx, cuts)):
            buckets[client].extend(part.tolist())

    sizes = [len(b) for b in buckets]
    while True:
        short = [i for i, s in enumerate(sizes) if s < cfg.min_samples_per_client]
        if not short:
            break
        donor = max(range(cfg.num_clients), key=lambda i: (sizes[i], -i))
        taker = short[0]
        buckets[taker].append(buckets[donor].pop())
        sizes[donor] -= 1
        sizes[taker] += 1

    shards = []
    for client, b in enumerate(buckets):
        idx = np.array(sorted(b), dtype=np.int64)
        shards.append(ClientShard(client, idx, class_histogram(idx, dataset)))
    return shards


def label_entropy(histogram: np.ndarray) -> float:
    """Shannon entropy in nats of a count vector (0 for an empty vector)."""
    total = histogram.sum()
    if total == 0:
        return 0.0
    p = histogram[histogram > 0] / total
    return float(-(p * np.log(p)).sum())
