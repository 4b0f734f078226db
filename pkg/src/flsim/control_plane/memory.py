"""Append-only round memory, persisted as newline-delimited JSON."""

from __future__ import annotations

import hashlib
import json
from statistics import fmean
from typing import Iterable, Iterator

from ..errors import ConsistencyError
from .types import RoundRecord


def record_bytes(record: RoundRecord) -> bytes:
    return json.dumps(record.to_dict(), sort_keys=True, separators=(",", ":"), allow_nan=False).encode()


class MemoryStore:
    """Ordered by round index. One writer, any number of readers."""

    def __init__(self, records: Iterable[RoundRecord] = ()):
        self._records: list[RoundRecord] = []
        self._digests: list[str] = []
        for r in records:
            self.append(r)

    def append(self, record: RoundRecord) -> "MemoryStore":
        if any(r.round_idx == record.round_idx for r in self._records):
            raise ConsistencyError(f"round {record.round_idx} already in memory")
        if self._records and record.round_idx < self._records[-1].round_idx:
            raise ConsistencyError(
                f"round {record.round_idx} appended after round {self._records[-1].round_idx}"
            )
        self._records.append(record)
        self._digests.append(hashlib.sha256(record_bytes(record)).hexdigest())
        return self

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[RoundRecord]:
        return iter(tuple(self._records))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MemoryStore):
            return NotImplemented
        return self._digests == other._digests

    @property
    def records(self) -> tuple[RoundRecord, ...]:
        return tuple(self._records)

    def last_n(self, n: int) -> tuple[RoundRecord, ...]:
        return tuple(self._records[-n:]) if n > 0 else ()

    def latest(self) -> RoundRecord | None:
        return self._records[-1] if self._records else None

    def best_round(self) -> int | None:
        """Round with the highest test accuracy, earliest on ties."""
        best = None
        for r in self._records:
            if best is None or r.metrics.test_accuracy > best.metrics.test_accuracy:
                best = r
        return None if best is None else best.round_idx

    def policy_stats(self) -> dict[str, dict[str, float]]:
        out: dict[str, dict[str, float]] = {}
        for policy in sorted({r.plan.policy for r in self._records}):
            rs = [r for r in self._records if r.plan.policy == policy]
            out[policy] = {
                "rounds": len(rs),
                "mean_test_accuracy": fmean(r.metrics.test_accuracy for r in rs),
                "mean_round_comm_latency_s": fmean(r.metrics.round_comm_latency_s for r in rs),
                "mean_avg_selected_snr_db": fmean(r.metrics.avg_selected_snr_db for r in rs),
            }
        return out

    def verify(self) -> bool:
        """True iff no stored record's bytes changed since it was appended."""
        return all(hashlib.sha256(record_bytes(r)).hexdigest() == d
                   for r, d in zip(self._records, self._digests))

    def to_ndjson(self) -> bytes:
        return b"".join(record_bytes(r) + b"\n" for r in self._records)

    @classmethod
    def from_ndjson(cls, data: bytes) -> "MemoryStore":
        lines = [ln for ln in data.decode().split("\n") if ln.strip()]
        return cls(RoundRecord.from_dict(json.loads(ln)) for ln in lines)
