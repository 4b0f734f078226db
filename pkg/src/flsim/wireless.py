"""Bandwidth-constrained cell: SNR draws, Shannon rates, TDMA slot scheduling, dropout."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .errors import ConsistencyError, DomainError
from .rng import stream


@dataclass(frozen=True)
class WirelessConfig:
    bandwidth_hz_per_channel: float = 5e6
    num_channels: int = 5
    snr_db_min: float = 10.0
    snr_db_max: float = 25.0
    dropout_prob: float = 0.30
    header_bits: int = 0
    seed: int = 0

    def __post_init__(self):
        if not self.bandwidth_hz_per_channel > 0:
            raise ValueError("bandwidth_hz_per_channel must be > 0")
        if self.num_channels < 1:
            raise ValueError("num_channels must be >= 1")
        if self.snr_db_min > self.snr_db_max:
            raise ValueError("snr_db_min must not exceed snr_db_max")
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ValueError("dropout_prob must be in [0, 1]")
        if self.header_bits < 0:
            raise ValueError("header_bits must be >= 0")


@dataclass(frozen=True)
class ChannelAssignment:
    """Per-channel TDMA queues; ``queues[k]`` lists clients in slot order."""

    queues: tuple[tuple[int, ...], ...]

    @property
    def num_channels(self) -> int:
        return len(self.queues)

    def clients(self) -> list[int]:
        return [c for q in self.queues for c in q]

    def channel_of(self, client_id: int) -> int:
        for k, q in enumerate(self.queues):
            if client_id in q:
                return k
        raise KeyError(client_id)


@dataclass(frozen=True)
class LinkReport:
    client_id: int
    snr_db: float
    rate_bps: float
    uplink_latency_s: float
    downlink_latency_s: float
    dropped: bool


def sample_snr(client_ids: Iterable[int], cfg: WirelessConfig, round_idx: int) -> dict[int, float]:
    out = {}
    for cid in client_ids:
        u = stream(cfg.seed, "snr", round_idx, cid).random()
        out[cid] = cfg.snr_db_min + (cfg.snr_db_max - cfg.snr_db_min) * u
    return out


def achievable_rate(bandwidth_hz: float, snr_db: float) -> float:
    """Shannon capacity ``B * log2(1 + 10**(snr_db/10))`` in bit/s."""
    if not bandwidth_hz > 0:
        raise DomainError("bandwidth must be positive")
    return bandwidth_hz * math.log2(1.0 + 10.0 ** (snr_db / 10.0))


def transfer_latency(payload_bits: int, rate_bps: float, header_bits: int = 0) -> float:
    if not rate_bps > 0:
        raise DomainError(f"rate must be positive, got {rate_bps}")
    if payload_bits < 0:
        raise DomainError("payload_bits must be >= 0")
    return (payload_bits + header_bits) / rate_bps


def lpt_assign(latencies: Mapping[int, float], order: Sequence[int], num_channels: int) -> ChannelAssignment:
    """Longest-processing-time-first list scheduling onto ``num_channels`` queues.

    Clients are taken by descending latency (ties keep ``order``) and each
    goes to the channel with the smallest queued latency sum, lowest index
    on ties.
    """
    rank = {cid: i for i, cid in enumerate(order)}
    jobs = sorted(order, key=lambda c: (-latencies[c], rank[c]))
    loads = [0.0] * num_channels
    queues: list[list[int]] = [[] for _ in range(num_channels)]
    for cid in jobs:
        k = min(range(num_channels), key=lambda j: (loads[j], j))
        queues[k].append(cid)
        loads[k] += latencies[cid]
    return ChannelAssignment(tuple(tuple(q) for q in queues))


def assign_channels(selected: Sequence[int], snr: Mapping[int, float], cfg: WirelessConfig,
                    payload_bits: int) -> ChannelAssignment:
    if not selected:
        raise ValueError("selected must be non-empty")
    est = {
        cid: transfer_latency(payload_bits, achievable_rate(cfg.bandwidth_hz_per_channel, snr[cid]),
                              cfg.header_bits)
        for cid in selected
    }
    # tie order falls back to client id, not selection order
    return lpt_assign(est, sorted(selected), cfg.num_channels)


def channel_loads(assignment: ChannelAssignment, reports: Mapping[int, LinkReport]) -> list[float]:
    """Uplink time queued on each channel; dropped clients never transmit."""
    loads = []
    for q in assignment.queues:
        total = 0.0
        for cid in q:
            if cid not in reports:
                raise ConsistencyError(f"no link report for client {cid}")
            if not reports[cid].dropped:
                total += reports[cid].uplink_latency_s
        loads.append(total)
    return loads


def round_comm_latency(assignment: ChannelAssignment, reports: Mapping[int, LinkReport]) -> float:
    """Downlink phase (slowest unicast) followed by the uplink makespan."""
    loads = channel_loads(assignment, reports)
    clients = assignment.clients()
    downlink = max((reports[c].downlink_latency_s for c in clients), default=0.0)
    return downlink + max(loads, default=0.0)


def dropout_draws(client_ids: Iterable[int], cfg: WirelessConfig, round_idx: int) -> dict[int, bool]:
    return {cid: bool(stream(cfg.seed, "dropout", round_idx, cid).random() < cfg.dropout_prob)
            for cid in client_ids}


def apply_dropout(selected: Sequence[int], cfg: WirelessConfig, round_idx: int) -> list[int]:
    drops = dropout_draws(selected, cfg, round_idx)
    return [cid for cid in selected if not drops[cid]]


def link_reports(selected: Sequence[int], snr: Mapping[int, float], dropped: Iterable[int],
                 payload_bits: int, downlink_bits: int, cfg: WirelessConfig) -> dict[int, LinkReport]:
    dropped = set(dropped)
    out = {}
    for cid in selected:
        rate = achievable_rate(cfg.bandwidth_hz_per_channel, snr[cid])
        out[cid] = LinkReport(
            client_id=cid,
            snr_db=float(snr[cid]),
            rate_bps=rate,
            uplink_latency_s=transfer_latency(payload_bits, rate, cfg.header_bits),
            downlink_latency_s=transfer_latency(downlink_bits, rate, cfg.header_bits),
            dropped=cid in dropped,
        )
    return out


def makespan_lower_bound(latencies: Sequence[float], num_channels: int) -> float:
    return max(sum(latencies) / num_channels, max(latencies, default=0.0))

