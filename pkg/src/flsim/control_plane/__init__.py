from .evaluator import evaluate_round, is_plateau
from .memory import MemoryStore
from .planner import Planner, RuleBasedPlanner, plan_round
from .selection import (coverage, select_class_diversity, select_largest_data, select_latency,
                        select_random)
from .telemetry import WorldState, collect_telemetry
from .types import (POLICIES, ClientProfile, ControlConfig, Feedback, RoundDraft, RoundMetrics,
                    RoundPlan, RoundRecord, TelemetrySnapshot)

__all__ = [
    "POLICIES", "ClientProfile", "ControlConfig", "Feedback", "MemoryStore", "Planner", "RoundDraft",
    "RoundMetrics", "RoundPlan", "RoundRecord", "RuleBasedPlanner", "TelemetrySnapshot", "WorldState",
    "collect_telemetry", "coverage", "evaluate_round", "is_plateau", "plan_round",
    "select_class_diversity", "select_largest_data", "select_latency", "select_random",
]
