"""Records exchanged between telemetry, planner, evaluator and memory.

Everything here is frozen and serializes to plain JSON-compatible dicts, so a
record's bytes can be hashed once it enters memory.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

from ..learning import Hyperparams
from ..wireless import LinkReport

POLICIES = ("random", "latency", "largest_data", "class_diversity")


@dataclass(frozen=True)
class ClientProfile:
    client_id: int
    num_samples: int
    class_histogram: tuple[int, ...]
    compute_speed: float
    current_snr_db: float
    cumulative_participation: int = 0
    cumulative_reward: float = 0.0

    def __post_init__(self):
        if self.num_samples != sum(self.class_histogram):
            raise ValueError(f"client {self.client_id}: histogram does not sum to num_samples")
        if not self.compute_speed > 0:
            raise ValueError(f"client {self.client_id}: compute_speed must be > 0")


@dataclass(frozen=True)
class TelemetrySnapshot:
    round_idx: int
    profiles: tuple[ClientProfile, ...]
    num_channels: int
    bandwidth_hz: float
    global_accuracy_so_far: float


@dataclass(frozen=True)
class ControlConfig:
    """Knobs the planner and evaluator read."""

    policy: str = "random"
    k: int | None = None
    hyper: Hyperparams = field(default_factory=Hyperparams)
    max_local_epochs: int = 5
    quant_bits: int = 32
    plateau_epsilon: float = 0.002
    patience: int = 2
    latency_budget_s: float = 1.0
    coverage_threshold: int | None = 1  # None: scale to the data, see auto_coverage_threshold
    unit_reward: float = 1.0

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")


@dataclass(frozen=True)
class RoundPlan:
    round_idx: int
    policy: str
    selected_clients: tuple[int, ...]
    hyper: Hyperparams
    quant_bits: int
    k: int

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RoundPlan":
        return cls(
            round_idx=d["round_idx"],
            policy=d["policy"],
            selected_clients=tuple(d["selected_clients"]),
            hyper=Hyperparams(**d["hyper"]),
            quant_bits=d["quant_bits"],
            k=d["k"],
        )


@dataclass(frozen=True)
class Feedback:
    accuracy_delta: float
    plateau: bool
    latency_over_budget: bool
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Feedback":
        return cls(d["accuracy_delta"], d["plateau"], d["latency_over_budget"], tuple(d["notes"]))


@dataclass(frozen=True)
class RoundMetrics:
    test_accuracy: float
    test_loss: float
    mean_train_loss: float
    avg_selected_snr_db: float
    round_comm_latency_s: float
    round_compute_latency_s: float
    uplink_payload_bits: int


@dataclass(frozen=True)
class RoundDraft:
    """Everything about a round except the evaluator's verdict."""

    plan: RoundPlan
    channel_queues: tuple[tuple[int, ...], ...]
    link_reports: tuple[LinkReport, ...]
    survivors: tuple[int, ...]
    kept: tuple[int, ...]
    discarded: tuple[int, ...]
    no_update: bool
    mean_train_loss: float
    avg_selected_snr_db: float
    round_comm_latency_s: float
    round_compute_latency_s: float
    uplink_payload_bits: int
    env_snr_db: tuple[float, ...]
    env_dropped: tuple[int, ...]


@dataclass(frozen=True)
class RoundRecord:
    plan: RoundPlan
    channel_queues: tuple[tuple[int, ...], ...]
    link_reports: tuple[LinkReport, ...]
    survivors: tuple[int, ...]
    kept: tuple[int, ...]
    discarded: tuple[int, ...]
    no_update: bool
    metrics: RoundMetrics
    feedback: Feedback
    # environment log for every client, independent of who was selected
    env_snr_db: tuple[float, ...]
    env_dropped: tuple[int, ...]

    @property
    def round_idx(self) -> int:
        return self.plan.round_idx

    def to_dict(self) -> dict:
        return {
            "round_idx": self.plan.round_idx,
            "plan": self.plan.to_dict(),
            "channel_queues": [list(q) for q in self.channel_queues],
            "link_reports": [asdict(r) for r in self.link_reports],
            "survivors": list(self.survivors),
            "kept": list(self.kept),
            "discarded": list(self.discarded),
            "no_update": self.no_update,
            "metrics": asdict(self.metrics),
            "feedback": self.feedback.to_dict(),
            "env_snr_db": list(self.env_snr_db),
            "env_dropped": list(self.env_dropped),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RoundRecord":
        return cls(
            plan=RoundPlan.from_dict(d["plan"]),
            channel_queues=tuple(tuple(q) for q in d["channel_queues"]),
            link_reports=tuple(LinkReport(**r) for r in d["link_reports"]),
            survivors=tuple(d["survivors"]),
            kept=tuple(d["kept"]),
            discarded=tuple(d["discarded"]),
            no_update=d["no_update"],
            metrics=RoundMetrics(**d["metrics"]),
            feedback=Feedback.from_dict(d["feedback"]),
            env_snr_db=tuple(d["env_snr_db"]),
            env_dropped=tuple(d["env_dropped"]),
        )
