"""Simulation configuration: the flat ``key = value`` file format and data resolution.

Blank lines and ``#`` comments are ignored. Every key of :class:`SimConfig` may
appear at most once; unknown keys are rejected and missing keys take the
defaults below, which are the standard experiment settings.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, fields
from pathlib import Path

from .control_plane import POLICIES, ControlConfig
from .dataset import (LabeledDataset, PartitionConfig, load_idx_files, synth_dataset,
                      train_test_split)
from .errors import ConfigError
from .learning import MODEL_KINDS, QUANT_LEVELS, Hyperparams, ModelDims
from .rng import derive_seed
from .wireless import WirelessConfig

DATA_DIR_ENV = "FLSIM_DATA_DIR"

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


@dataclass(frozen=True)
class SimConfig:
    # data
    dataset: str = "synthetic"
    data_dir: str = ""
    subsample_size: int = 0
    synth_num_classes: int = 10
    synth_samples_per_class: int = 500
    synth_feature_dim: int = 784
    synth_separation: float = 5.0
    synth_test_fraction: float = 0.2
    synth_seed: int = 0
    # partition
    num_clients: int = 15
    alpha: float = 0.1
    min_samples_per_client: int = 1
    # wireless
    bandwidth_hz_per_channel: float = 5e6
    num_channels: int = 5
    snr_db_min: float = 10.0
    snr_db_max: float = 25.0
    dropout_prob: float = 0.3
    header_bits: int = 0
    # model and training
    model_kind: str = "logistic"
    hidden_width: int = 64
    learning_rate: float = 0.05
    batch_size: int = 32
    local_epochs: int = 1
    max_local_epochs: int = 5
    # control plane
    rounds: int = 10
    policy: str = "random"
    k: int | None = None
    quant_bits: int = 32
    filter_multiplier: float = 3.0
    plateau_epsilon: float = 0.002
    patience: int = 2
    latency_budget_s: float = 1.0
    coverage_threshold: int | None = 1
    unit_reward: float = 1.0
    compute_speed_min: float = 500.0
    compute_speed_max: float = 2000.0
    master_seed: int = 0

    def __post_init__(self):
        def need(ok: bool, name: str, msg: str):
            if not ok:
                raise ConfigError(f"{msg} (got {getattr(self, name)!r})", field=name)

        need(self.dataset in ("synthetic", "mnist"), "dataset", "must be 'synthetic' or 'mnist'")
        need(self.subsample_size >= 0, "subsample_size", "must be >= 0")
        for name in ("synth_num_classes", "synth_samples_per_class", "synth_feature_dim",
                     "num_clients", "num_channels", "batch_size", "local_epochs", "max_local_epochs",
                     "hidden_width"):
            need(getattr(self, name) >= 1, name, "must be >= 1")
        need(self.synth_separation > 0, "synth_separation", "must be > 0")
        need(0 < self.synth_test_fraction < 1, "synth_test_fraction", "must be in (0, 1)")
        need(self.alpha > 0, "alpha", "must be > 0")
        need(self.min_samples_per_client >= 0, "min_samples_per_client", "must be >= 0")
        need(self.bandwidth_hz_per_channel > 0, "bandwidth_hz_per_channel", "must be > 0")
        need(self.snr_db_min <= self.snr_db_max, "snr_db_min", "must not exceed snr_db_max")
        need(0 <= self.dropout_prob <= 1, "dropout_prob", "must be in [0, 1]")
        need(self.header_bits >= 0, "header_bits", "must be >= 0")
        need(self.model_kind in MODEL_KINDS, "model_kind", f"must be one of {MODEL_KINDS}")
        need(self.learning_rate >= 0, "learning_rate", "must be >= 0")
        need(self.local_epochs <= self.max_local_epochs, "local_epochs", "must not exceed max_local_epochs")
        need(self.rounds >= 0, "rounds", "must be >= 0")
        need(self.policy in POLICIES, "policy", f"must be one of {POLICIES}")
        need(self.k is None or self.k >= 1, "k", "must be >= 1 or auto")
        need(self.coverage_threshold is None or self.coverage_threshold >= 1, "coverage_threshold",
             "must be >= 1 or auto")
        need(self.quant_bits in QUANT_LEVELS, "quant_bits", f"must be one of {QUANT_LEVELS}")
        need(self.filter_multiplier > 0, "filter_multiplier", "must be > 0")
        need(self.plateau_epsilon >= 0, "plateau_epsilon", "must be >= 0")
        need(self.patience >= 1, "patience", "must be >= 1")
        need(self.latency_budget_s > 0, "latency_budget_s", "must be > 0")
        need(self.unit_reward >= 0, "unit_reward", "must be >= 0")
        need(0 < self.compute_speed_min <= self.compute_speed_max, "compute_speed_min",
             "must satisfy 0 < compute_speed_min <= compute_speed_max")
        need(0 <= self.master_seed < 2**64, "master_seed", "must be a 64-bit unsigned integer")
        need(0 <= self.synth_seed < 2**64, "synth_seed", "must be a 64-bit unsigned integer")

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    # sub-configs; their seeds are labeled children of master_seed
    def partition_config(self) -> PartitionConfig:
        return PartitionConfig(self.num_clients, self.alpha, self.min_samples_per_client,
                               derive_seed(self.master_seed, "partition"))

    def wireless_config(self) -> WirelessConfig:
        return WirelessConfig(self.bandwidth_hz_per_channel, self.num_channels, self.snr_db_min,
                              self.snr_db_max, self.dropout_prob, self.header_bits,
                              derive_seed(self.master_seed, "wireless"))

    def hyperparams(self) -> Hyperparams:
        return Hyperparams(self.learning_rate, self.batch_size, self.local_epochs)

    def control_config(self) -> ControlConfig:
        return ControlConfig(
            policy=self.policy, k=self.k, hyper=self.hyperparams(), max_local_epochs=self.max_local_epochs,
            quant_bits=self.quant_bits, plateau_epsilon=self.plateau_epsilon, patience=self.patience,
            latency_budget_s=self.latency_budget_s, coverage_threshold=self.coverage_threshold,
            unit_reward=self.unit_reward,
        )

    def model_dims(self, feature_dim: int, num_classes: int) -> ModelDims:
        return ModelDims(feature_dim, num_classes, self.hidden_width if self.model_kind == "mlp1" else 0)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown keys {sorted(unknown)}")
        return cls(**d)


_FIELD_TYPES = {f.name: f.type for f in fields(SimConfig)}


def _coerce(name: str, raw: str, line: int):
    kind = _FIELD_TYPES[name]
    try:
        if kind == "str":
            return raw
        if kind == "int | None":
            return None if raw.lower() in ("auto", "none", "") else int(raw)
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"cannot read {raw!r} as {kind}", line=line, field=name) from None
    raise AssertionError(f"unhandled field type {kind} for {name}")


def parse_config_text(text: str) -> SimConfig:
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown key {key!r}", line=lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", line=lineno)
        values[key] = _coerce(key, value, lineno)
    return SimConfig(**values)


def parse_config(path) -> SimConfig:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def serialize_config(cfg: SimConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if v is None:
            v = "auto"
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"


def _find_idx(directory: Path, stem: str) -> Path:
    for candidate in (stem, stem.replace("-idx", ".idx")):
        p = directory / candidate
        if p.exists():
            return p
    raise FileNotFoundError(f"{stem} not found in {directory}")


def resolve_data(cfg: SimConfig, data_dir: str | os.PathLike | None = None
                 ) -> tuple[LabeledDataset, LabeledDataset]:
    """Load (train, test) as the config describes.

    MNIST files are looked up in ``data_dir``, then ``cfg.data_dir``, then
    ``$FLSIM_DATA_DIR``. Synthetic data is split into train and test once,
    from ``synth_seed``, so it stays fixed across master seeds.
    """
    if cfg.dataset == "synthetic":
        full = synth_dataset(cfg.synth_num_classes, cfg.synth_samples_per_class, cfg.synth_feature_dim,
                             cfg.synth_seed, cfg.synth_separation)
        return train_test_split(full, cfg.synth_test_fraction, cfg.synth_seed)
    where = data_dir or cfg.data_dir or os.environ.get(DATA_DIR_ENV)
    if not where:
        raise ConfigError(f"dataset = mnist needs --data-dir, data_dir or ${DATA_DIR_ENV}", field="data_dir")
    root = Path(where)
    out = []
    for split in ("train", "test"):
        images, labels = MNIST_FILES[split]
        out.append(load_idx_files(_find_idx(root, images), _find_idx(root, labels)))
    return out[0], out[1]
