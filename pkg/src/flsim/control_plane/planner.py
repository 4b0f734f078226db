"""Rule-based planning: choose participants, hyperparameters and payload precision."""

from __future__ import annotations

from dataclasses import replace
from typing import Protocol

from ..learning import QUANT_LEVELS
from ..rng import stream
from .memory import MemoryStore
from .selection import select_class_diversity, select_largest_data, select_latency, select_random
from .types import ControlConfig, Feedback, RoundPlan, TelemetrySnapshot


class Planner(Protocol):
    """Anything that turns telemetry + history into a round plan.

    Adapters (e.g. a language-model planner) implement this; the orchestrator
    only depends on the protocol.
    """

    def plan(self, telemetry: TelemetrySnapshot, memory: MemoryStore,
             feedback: Feedback | None) -> RoundPlan: ...


def _lower_precision(bits: int) -> int:
    i = QUANT_LEVELS.index(bits)
    return QUANT_LEVELS[min(i + 1, len(QUANT_LEVELS) - 1)]


def auto_coverage_threshold(telemetry: TelemetrySnapshot) -> int:
    """Mean samples per (client, class) cell, rounded up.

    A class then only counts as covered once the chosen set holds about as
    much of it as a typical client holds of a typical class, so a handful of
    stray samples does not satisfy coverage.
    """
    total = sum(p.num_samples for p in telemetry.profiles)
    cells = len(telemetry.profiles) * len(telemetry.profiles[0].class_histogram)
    return max(1, -(-total // cells))


def plan_round(telemetry: TelemetrySnapshot, memory: MemoryStore, prev_feedback: Feedback | None,
               cfg: ControlConfig, select_seed: int = 0) -> RoundPlan:
    """Build the plan for ``telemetry.round_idx``.

    Adaptations carry over from the previous plan in memory: a plateau adds a
    local epoch (up to ``max_local_epochs``), an over-budget round drops the
    uplink precision one level (32 -> 16 -> 8).
    """
    last = memory.latest()
    hyper = last.plan.hyper if last is not None else cfg.hyper
    bits = last.plan.quant_bits if last is not None else cfg.quant_bits
    if prev_feedback is not None:
        if prev_feedback.plateau and hyper.local_epochs < cfg.max_local_epochs:
            hyper = replace(hyper, local_epochs=hyper.local_epochs + 1)
        if prev_feedback.latency_over_budget:
            bits = _lower_precision(bits)

    k = cfg.k if cfg.k is not None else telemetry.num_channels
    profiles = telemetry.profiles
    if cfg.policy == "random":
        selected = select_random(profiles, k, stream(select_seed, "select", telemetry.round_idx))
    elif cfg.policy == "latency":
        selected = select_latency(profiles, k)
    elif cfg.policy == "largest_data":
        selected = select_largest_data(profiles, k)
    else:
        threshold = cfg.coverage_threshold or auto_coverage_threshold(telemetry)
        selected = select_class_diversity(profiles, k, threshold)

    return RoundPlan(
        round_idx=telemetry.round_idx,
        policy=cfg.policy,
        selected_clients=tuple(selected),
        hyper=hyper,
        quant_bits=bits,
        k=k,
    )


class RuleBasedPlanner:
    def __init__(self, cfg: ControlConfig, select_seed: int = 0):
        self.cfg = cfg
        self.select_seed = select_seed

    def plan(self, telemetry: TelemetrySnapshot, memory: MemoryStore,
             feedback: Feedback | None) -> RoundPlan:
        return plan_round(telemetry, memory, feedback, self.cfg, self.select_seed)
