"""Information retrieval: assemble what the planner is allowed to see."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from ..dataset import ClientShard
from ..wireless import WirelessConfig, sample_snr
from .types import ClientProfile, TelemetrySnapshot


@dataclass
class WorldState:
    """Static client facts plus the running participation ledger.

    The orchestrator is the only writer; telemetry only reads.
    """

    shards: Sequence[ClientShard]
    compute_speeds: Sequence[float]
    wireless: WirelessConfig
    global_accuracy: float = 0.0
    participation: dict[int, int] = field(default_factory=dict)
    unit_reward: float = 1.0

    @property
    def client_ids(self) -> list[int]:
        return [s.client_id for s in self.shards]

    def record_participation(self, client_ids) -> None:
        for cid in client_ids:
            self.participation[cid] = self.participation.get(cid, 0) + 1


def collect_telemetry(world: WorldState, round_idx: int) -> TelemetrySnapshot:
    snr = sample_snr(world.client_ids, world.wireless, round_idx)
    profiles = []
    for shard, speed in zip(world.shards, world.compute_speeds):
        count = world.participation.get(shard.client_id, 0)
        profiles.append(ClientProfile(
            client_id=shard.client_id,
            num_samples=len(shard),
            class_histogram=tuple(int(c) for c in shard.class_histogram),
            compute_speed=float(speed),
            current_snr_db=snr[shard.client_id],
            cumulative_participation=count,
            cumulative_reward=count * world.unit_reward,
        ))
    return TelemetrySnapshot(
        round_idx=round_idx,
        profiles=tuple(profiles),
        num_channels=world.wireless.num_channels,
        bandwidth_hz=world.wireless.bandwidth_hz_per_channel,
        global_accuracy_so_far=world.global_accuracy,
    )
