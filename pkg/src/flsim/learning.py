"""Numeric core: flat-vector models, local SGD, quantization, filtering and FedAvg.

Parameters live in one flat float64 vector. Layouts:

* ``logistic``: ``W (D x C)`` row-major, then ``b (C)``.
* ``mlp1``: ``W1 (D x H)``, ``b1 (H)``, ``W2 (H x C)``, ``b2 (C)``; tanh hidden layer.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .dataset import ClientShard, LabeledDataset
from .errors import AggregationError, ConsistencyError, DivergenceError, FormatError
from .rng import stream

MODEL_KINDS = ("logistic", "mlp1")
QUANT_LEVELS = (32, 16, 8)
SCALE_BITS = 32
_KIND_TAGS = {"logistic": b"logi", "mlp1": b"mlp1"}


@dataclass(frozen=True)
class ModelDims:
    features: int
    classes: int
    hidden: int = 0


def param_count(kind: str, dims: ModelDims) -> int:
    d, c, h = dims.features, dims.classes, dims.hidden
    if kind == "logistic":
        return (d + 1) * c
    if kind == "mlp1":
        if h < 1:
            raise ValueError("mlp1 needs hidden width >= 1")
        return (d + 1) * h + (h + 1) * c
    raise ValueError(f"unknown model kind {kind!r}")


@dataclass(frozen=True, eq=False)
class ModelParams:
    values: np.ndarray
    model_kind: str
    dims: ModelDims

    def __post_init__(self):
        if len(self.values) != param_count(self.model_kind, self.dims):
            raise ConsistencyError(
                f"{self.model_kind} with {self.dims} needs {param_count(self.model_kind, self.dims)} "
                f"values, got {len(self.values)}"
            )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ModelParams):
            return NotImplemented
        return (self.model_kind == other.model_kind and self.dims == other.dims
                and np.array_equal(self.values, other.values))

    def with_values(self, values: np.ndarray) -> "ModelParams":
        return ModelParams(np.asarray(values, dtype=np.float64), self.model_kind, self.dims)

    def to_bytes(self) -> bytes:
        """Checkpoint encoding: header (kind, D, C, H) then little-endian float64 values."""
        head = struct.pack("<4sIII", _KIND_TAGS[self.model_kind], self.dims.features,
                           self.dims.classes, self.dims.hidden)
        return head + self.values.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "ModelParams":
        if len(data) < 16:
            raise FormatError("checkpoint shorter than its header")
        tag, d, c, h = struct.unpack("<4sIII", data[:16])
        kinds = {v: k for k, v in _KIND_TAGS.items()}
        if tag not in kinds:
            raise FormatError(f"unknown model tag {tag!r}")
        values = np.frombuffer(data[16:], dtype="<f8").astype(np.float64)
        return cls(values, kinds[tag], ModelDims(d, c, h))


@dataclass(frozen=True)
class Hyperparams:
    learning_rate: float = 0.05
    batch_size: int = 32
    local_epochs: int = 1

    def __post_init__(self):
        if self.learning_rate < 0 or self.batch_size < 1 or self.local_epochs < 1:
            raise ValueError(f"invalid hyperparameters {self}")


@dataclass(frozen=True)
class ModelUpdate:
    client_id: int
    new_params: ModelParams = field(compare=False)
    num_samples: int
    train_loss: float
    payload_bits: int
    quant_bits: int = 32


def payload_bits_for(num_values: int, bits: int) -> int:
    return num_values * bits + (SCALE_BITS if bits < 32 else 0)


# ---------------------------------------------------------------------------
# forward / backward

def init_model(model_kind: str, dims: ModelDims, seed: int = 0) -> ModelParams:
    n = param_count(model_kind, dims)
    if model_kind == "logistic":
        return ModelParams(np.zeros(n), model_kind, dims)
    d, c, h = dims.features, dims.classes, dims.hidden
    rng = stream(seed, "init")
    a1 = math.sqrt(6.0 / (d + h))
    a2 = math.sqrt(6.0 / (h + c))
    w1 = rng.uniform(-a1, a1, size=d * h)
    w2 = rng.uniform(-a2, a2, size=h * c)
    values = np.concatenate([w1, np.zeros(h), w2, np.zeros(c)])
    return ModelParams(values, model_kind, dims)


def _unpack(params: ModelParams):
    v, d, c, h = params.values, params.dims.features, params.dims.classes, params.dims.hidden
    if params.model_kind == "logistic":
        return v[: d * c].reshape(d, c), v[d * c:]
    o = 0
    w1 = v[o:o + d * h].reshape(d, h); o += d * h
    b1 = v[o:o + h]; o += h
    w2 = v[o:o + h * c].reshape(h, c); o += h * c
    return w1, b1, w2, v[o:o + c]


def logits(params: ModelParams, x: np.ndarray) -> np.ndarray:
    if params.model_kind == "logistic":
        w, b = _unpack(params)
        return x @ w + b
    w1, b1, w2, b2 = _unpack(params)
    return np.tanh(x @ w1 + b1) @ w2 + b2


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def cross_entropy(params: ModelParams, x: np.ndarray, y: np.ndarray) -> float:
    lp = _log_softmax(logits(params, x))
    return float(-lp[np.arange(len(y)), y].mean())


def loss_and_gradient(params: ModelParams, x: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy over the batch and its exact gradient."""
    n = len(y)
    rows = np.arange(n)
    if params.model_kind == "logistic":
        w, b = _unpack(params)
        lp = _log_softmax(x @ w + b)
        g = np.exp(lp)
        g[rows, y] -= 1.0
        g /= n
        grad = np.concatenate([(x.T @ g).ravel(), g.sum(axis=0)])
    else:
        w1, b1, w2, b2 = _unpack(params)
        hid = np.tanh(x @ w1 + b1)
        lp = _log_softmax(hid @ w2 + b2)
        g = np.exp(lp)
        g[rows, y] -= 1.0
        g /= n
        dz = (g @ w2.T) * (1.0 - hid * hid)
        grad = np.concatenate([(x.T @ dz).ravel(), dz.sum(axis=0), (hid.T @ g).ravel(), g.sum(axis=0)])
    return float(-lp[rows, y].mean()), grad


def gradient(params: ModelParams, batch: tuple[np.ndarray, np.ndarray]) -> np.ndarray:
    x, y = batch
    if len(y) == 0:
        raise ValueError("batch must be non-empty")
    return loss_and_gradient(params, x, y)[1]


# ---------------------------------------------------------------------------
# client side

def local_train(params: ModelParams, shard: ClientShard, dataset: LabeledDataset, hyper: Hyperparams,
                seed: int) -> ModelUpdate:
    """Mini-batch SGD on the shard for ``hyper.local_epochs`` passes.

    Batch order is reshuffled every epoch from a stream keyed by
    ``(seed, client_id, epoch)``; the trailing partial batch is kept. The
    reported loss is the sample-weighted mean of the batch losses seen during
    the last epoch, each taken before its step.
    """
    n = len(shard)
    if n == 0:
        raise ValueError(f"client {shard.client_id} has an empty shard")
    x_all = dataset.features[shard.sample_indices]
    y_all = dataset.labels[shard.sample_indices]
    w = params.values.copy()
    current = params
    epoch_loss = 0.0
    for epoch in range(hyper.local_epochs):
        order = stream(seed, "local-shuffle", shard.client_id, epoch).permutation(n)
        epoch_loss = 0.0
        for b, start in enumerate(range(0, n, hyper.batch_size)):
            idx = order[start:start + hyper.batch_size]
            with np.errstate(over="ignore", invalid="ignore"):  # checked explicitly below
                loss, grad = loss_and_gradient(current, x_all[idx], y_all[idx])
            if not math.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise DivergenceError("non-finite training loss", client_id=shard.client_id,
                                      epoch=epoch, batch=b)
            epoch_loss += loss * len(idx)
            with np.errstate(over="ignore", invalid="ignore"):
                w = w - hyper.learning_rate * grad
            if not np.all(np.isfinite(w)):
                raise DivergenceError("parameters overflowed", client_id=shard.client_id,
                                      epoch=epoch, batch=b)
            current = params.with_values(w)
    return ModelUpdate(
        client_id=shard.client_id,
        new_params=current,
        num_samples=n,
        train_loss=epoch_loss / n,
        payload_bits=payload_bits_for(len(w), 32),
        quant_bits=32,
    )


def quantize_values(values: np.ndarray, bits: int) -> tuple[np.ndarray, float]:
    """Symmetric uniform per-vector quantization. Returns (dequantized, step)."""
    if bits not in QUANT_LEVELS:
        raise ValueError(f"bits must be one of {QUANT_LEVELS}")
    if bits == 32:
        return values, 0.0
    max_abs = float(np.max(np.abs(values))) if len(values) else 0.0
    if max_abs == 0.0:
        return values.copy(), 0.0
    levels = 2 ** (bits - 1) - 1
    step = max_abs / levels
    q = np.rint(values / step)
    return (q / levels) * max_abs, step


def quantize_roundtrip(update: ModelUpdate, bits: int) -> tuple[ModelUpdate, int]:
    deq, _ = quantize_values(update.new_params.values, bits)
    payload = payload_bits_for(len(deq), bits)
    params = update.new_params if bits == 32 else update.new_params.with_values(deq)
    return replace(update, new_params=params, payload_bits=payload, quant_bits=bits), payload


# ---------------------------------------------------------------------------
# server side

def delta_norm(update: ModelUpdate, global_params: ModelParams) -> float:
    return float(np.linalg.norm(update.new_params.values - global_params.values))


def filter_updates(updates: Sequence[ModelUpdate], global_params: ModelParams, multiplier: float = 3.0
                   ) -> tuple[list[ModelUpdate], list[ModelUpdate]]:
    """Drop updates whose distance from the global model exceeds ``multiplier`` x median.

    At least two updates (or all of them, if fewer) always survive; when the
    threshold would leave fewer, the smallest-norm ones are kept.
    """
    if not updates:
        return [], []
    if multiplier <= 0:
        raise ValueError("multiplier must be > 0")
    norms = [delta_norm(u, global_params) for u in updates]
    threshold = multiplier * float(np.median(norms))
    keep = [norm <= threshold for norm in norms]
    floor = min(2, len(updates))
    if sum(keep) < floor:
        by_norm = sorted(range(len(updates)), key=lambda i: (norms[i], i))
        keep = [False] * len(updates)
        for i in by_norm[:floor]:
            keep[i] = True
    kept = [u for u, k in zip(updates, keep) if k]
    dropped = [u for u, k in zip(updates, keep) if not k]
    return kept, dropped


def fedavg_weights(updates: Sequence[ModelUpdate]) -> np.ndarray:
    counts = np.array([u.num_samples for u in updates], dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise AggregationError("updates carry zero samples in total")
    return counts / total


def fedavg(updates: Sequence[ModelUpdate]) -> ModelParams:
    if not updates:
        raise AggregationError("nothing to aggregate")
    lengths = {len(u.new_params.values) for u in updates}
    if len(lengths) != 1:
        raise AggregationError("updates have different parameter lengths")
    weights = fedavg_weights(updates)
    if len(updates) == 1:
        return updates[0].new_params
    stacked = np.stack([u.new_params.values for u in updates])
    return updates[0].new_params.with_values(weights @ stacked)


def evaluate(params: ModelParams, test_set: LabeledDataset) -> tuple[float, float]:
    """Accuracy (argmax, lowest class on ties) and mean cross-entropy."""
    if len(test_set) == 0:
        return 0.0, 0.0
    z = logits(params, test_set.features)
    lp = _log_softmax(z)
    acc = float(np.mean(np.argmax(z, axis=1) == test_set.labels))
    loss = float(-lp[np.arange(len(test_set)), test_set.labels].mean())
    return acc, loss
