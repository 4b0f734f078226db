"""Client-selection policies.

All policies return an ordered list of client ids of length ``min(k, N)``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..dataset import label_entropy
from .types import ClientProfile


def _top_k(profiles: Sequence[ClientProfile], k: int, key) -> list[int]:
    ranked = sorted(profiles, key=lambda p: (-key(p), p.client_id))
    return [p.client_id for p in ranked[:k]]


def select_random(profiles: Sequence[ClientProfile], k: int, rng: np.random.Generator) -> list[int]:
    ids = [p.client_id for p in profiles]
    k = min(k, len(ids))
    picks = rng.choice(len(ids), size=k, replace=False)
    return [ids[i] for i in picks]


def select_latency(profiles: Sequence[ClientProfile], k: int) -> list[int]:
    """Best channels first: descending current SNR."""
    return _top_k(profiles, k, lambda p: p.current_snr_db)


def select_largest_data(profiles: Sequence[ClientProfile], k: int) -> list[int]:
    return _top_k(profiles, k, lambda p: p.num_samples)


def coverage(histograms: Sequence[Sequence[int]], threshold: int = 1) -> int:
    """Number of classes whose pooled count reaches ``threshold``."""
    if not histograms:
        return 0
    pooled = np.sum(np.asarray(histograms, dtype=np.int64), axis=0)
    return int(np.count_nonzero(pooled >= threshold))


def select_class_diversity(profiles: Sequence[ClientProfile], k: int, threshold: int = 1) -> list[int]:
    """Greedy max class coverage.

    Each step adds the client that brings the most classes over the coverage
    threshold. Ties go to the client with the more even own label histogram
    (higher entropy), then the larger shard, then the lower id.
    """
    remaining = list(profiles)
    if not remaining:
        return []
    pooled = np.zeros(len(remaining[0].class_histogram), dtype=np.int64)
    chosen: list[int] = []
    entropy = {p.client_id: label_entropy(np.asarray(p.class_histogram)) for p in remaining}
    base = int(np.count_nonzero(pooled >= threshold))
    while remaining and len(chosen) < k:
        scores = []
        for p in remaining:
            gain = int(np.count_nonzero(pooled + np.asarray(p.class_histogram) >= threshold)) - base
            scores.append(((-gain, -entropy[p.client_id], -p.num_samples, p.client_id), p))
        best = min(scores, key=lambda t: t[0])[1]
        remaining.remove(best)
        chosen.append(best.client_id)
        pooled = pooled + np.asarray(best.class_histogram)
        base = int(np.count_nonzero(pooled >= threshold))
    return chosen
