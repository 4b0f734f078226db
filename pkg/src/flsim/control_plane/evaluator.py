"""Round evaluation: turn metrics into a finalized record and planner feedback."""

from __future__ import annotations

from .memory import MemoryStore
from .types import ControlConfig, Feedback, RoundDraft, RoundMetrics, RoundRecord


def is_plateau(deltas: list[float], epsilon: float, patience: int) -> bool:
    """True when the last ``patience`` accuracy gains are all below ``epsilon``."""
    if patience < 1 or len(deltas) < patience:
        return False
    return all(d < epsilon for d in deltas[-patience:])


def evaluate_round(draft: RoundDraft, test_metrics: tuple[float, float], cfg: ControlConfig,
                   memory: MemoryStore, baseline_accuracy: float) -> tuple[RoundRecord, Feedback]:
    accuracy, loss = test_metrics
    last = memory.latest()
    previous = last.metrics.test_accuracy if last is not None else baseline_accuracy
    delta = accuracy - previous
    deltas = [r.feedback.accuracy_delta for r in memory] + [delta]
    plateau = is_plateau(deltas, cfg.plateau_epsilon, cfg.patience)
    over = draft.round_comm_latency_s > cfg.latency_budget_s

    notes = []
    if plateau:
        notes.append("plateau")
    if over:
        notes.append("latency_over_budget")
    if draft.no_update:
        notes.append("no_update")
    if draft.discarded:
        notes.append(f"discarded:{len(draft.discarded)}")
    feedback = Feedback(delta, plateau, over, tuple(notes))

    metrics = RoundMetrics(
        test_accuracy=accuracy,
        test_loss=loss,
        mean_train_loss=draft.mean_train_loss,
        avg_selected_snr_db=draft.avg_selected_snr_db,
        round_comm_latency_s=draft.round_comm_latency_s,
        round_compute_latency_s=draft.round_compute_latency_s,
        uplink_payload_bits=draft.uplink_payload_bits,
    )
    record = RoundRecord(
        plan=draft.plan,
        channel_queues=draft.channel_queues,
        link_reports=draft.link_reports,
        survivors=draft.survivors,
        kept=draft.kept,
        discarded=draft.discarded,
        no_update=draft.no_update,
        metrics=metrics,
        feedback=feedback,
        env_snr_db=draft.env_snr_db,
        env_dropped=draft.env_dropped,
    )
    return record, feedback
