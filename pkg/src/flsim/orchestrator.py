"""The seeded round loop, the policy comparison harness and replay."""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from statistics import fmean, median
from typing import Sequence

from .config import SimConfig, resolve_data
from .control_plane import (MemoryStore, Planner, RoundDraft, RoundRecord, RuleBasedPlanner, WorldState,
                            collect_telemetry, evaluate_round)
from .dataset import LabeledDataset, dirichlet_partition, subsample
from .errors import DivergenceError, ReproducibilityError
from .learning import (evaluate, fedavg, filter_updates, init_model, local_train, payload_bits_for,
                       quantize_roundtrip)
from .rng import derive_seed, stream
from .wireless import assign_channels, dropout_draws, link_reports, round_comm_latency

log = logging.getLogger(__name__)


def summarize(records: Sequence[RoundRecord], initial_accuracy: float) -> dict:
    """Summary block of a report; every field is recomputable from the records."""
    if not records:
        return {
            "final_accuracy": initial_accuracy,
            "mean_selected_snr_db": None,
            "mean_round_comm_latency_s": None,
            "mean_round_compute_latency_s": None,
            "total_payload_bits": 0,
        }
    return {
        "final_accuracy": records[-1].metrics.test_accuracy,
        "mean_selected_snr_db": fmean(r.metrics.avg_selected_snr_db for r in records),
        "mean_round_comm_latency_s": fmean(r.metrics.round_comm_latency_s for r in records),
        "mean_round_compute_latency_s": fmean(r.metrics.round_compute_latency_s for r in records),
        "total_payload_bits": sum(r.metrics.uplink_payload_bits for r in records),
    }


@dataclass(frozen=True)
class SimulationReport:
    config: SimConfig
    initial_accuracy: float
    initial_loss: float
    records: tuple[RoundRecord, ...]
    summary: dict
    wall_time_s: float = 0.0

    def to_dict(self) -> dict:
        return {
            "kind": "simulation",
            "config": self.config.to_dict(),
            "initial_accuracy": self.initial_accuracy,
            "initial_loss": self.initial_loss,
            "records": [r.to_dict() for r in self.records],
            "summary": self.summary,
            "wall_time_s": self.wall_time_s,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationReport":
        records = tuple(RoundRecord.from_dict(r) for r in d["records"])
        report = cls(SimConfig.from_dict(d["config"]), d["initial_accuracy"], d["initial_loss"],
                     records, d["summary"], d.get("wall_time_s", 0.0))
        if summarize(records, report.initial_accuracy) != report.summary:
            raise ReproducibilityError("summary does not match records", path="summary")
        return report


def _run_loop(cfg: SimConfig, train: LabeledDataset, test: LabeledDataset, planner: Planner | None,
              partial: list) -> tuple[float, float]:
    seed = cfg.master_seed
    train = subsample(train, cfg.subsample_size, derive_seed(seed, "subsample"))
    shards = dirichlet_partition(train, cfg.partition_config())
    wcfg = cfg.wireless_config()
    lo, hi = cfg.compute_speed_min, cfg.compute_speed_max
    speeds = [float(lo + (hi - lo) * stream(seed, "compute-speed", s.client_id).random()) for s in shards]
    control = cfg.control_config()
    planner = planner or RuleBasedPlanner(control, derive_seed(seed, "select"))
    world = WorldState(shards, speeds, wcfg, unit_reward=cfg.unit_reward)
    by_id = {s.client_id: s for s in shards}

    params = init_model(cfg.model_kind, cfg.model_dims(train.feature_dim, train.num_classes),
                        derive_seed(seed, "init"))
    init_acc, init_loss = evaluate(params, test)
    world.global_accuracy = init_acc
    memory = MemoryStore()
    feedback = None
    n_values = len(params.values)
    downlink_bits = payload_bits_for(n_values, 32)

    for r in range(cfg.rounds):
        telemetry = collect_telemetry(world, r)
        plan = planner.plan(telemetry, memory, feedback)
        selected = list(plan.selected_clients)
        snr = {p.client_id: p.current_snr_db for p in telemetry.profiles}
        uplink_bits = payload_bits_for(n_values, plan.quant_bits)
        assignment = assign_channels(selected, snr, wcfg, uplink_bits)

        updates = {}
        for cid in sorted(selected):
            try:
                updates[cid] = local_train(params, by_id[cid], train, plan.hyper,
                                           derive_seed(seed, f"shuffle/{r}"))
            except DivergenceError as exc:
                exc.round_idx = r
                raise
        compute_latency = max(plan.hyper.local_epochs * len(by_id[c]) / speeds[c] for c in selected)
        total_n = sum(u.num_samples for u in updates.values())
        train_loss = sum(u.train_loss * u.num_samples for u in updates.values()) / total_n

        env_drops = dropout_draws(world.client_ids, wcfg, r)
        survivors = [c for c in selected if not env_drops[c]]
        dropped = [c for c in selected if env_drops[c]]
        uploaded = [quantize_roundtrip(updates[c], plan.quant_bits)[0] for c in sorted(survivors)]
        reports = link_reports(selected, snr, dropped, uplink_bits, downlink_bits, wcfg)
        comm_latency = round_comm_latency(assignment, reports)

        kept, discarded = filter_updates(uploaded, params, cfg.filter_multiplier)
        if kept:
            params = fedavg(kept)
        acc, loss = evaluate(params, test)

        draft = RoundDraft(
            plan=plan,
            channel_queues=assignment.queues,
            link_reports=tuple(reports[c] for c in selected),
            survivors=tuple(survivors),
            kept=tuple(u.client_id for u in kept),
            discarded=tuple(u.client_id for u in discarded),
            no_update=not kept,
            mean_train_loss=train_loss,
            avg_selected_snr_db=fmean(snr[c] for c in selected),
            round_comm_latency_s=comm_latency,
            round_compute_latency_s=compute_latency,
            uplink_payload_bits=sum(u.payload_bits for u in uploaded),
            env_snr_db=tuple(snr[c] for c in world.client_ids),
            env_dropped=tuple(c for c in world.client_ids if env_drops[c]),
        )
        record, feedback = evaluate_round(draft, (acc, loss), control, memory, init_acc)
        memory.append(record)
        partial.append(record)
        world.global_accuracy = acc
        world.record_participation(survivors)
        log.debug("round %d policy=%s acc=%.4f comm=%.4fs", r, plan.policy, acc, comm_latency)
    return init_acc, init_loss


def run_simulation(cfg: SimConfig, train_data: LabeledDataset, test_data: LabeledDataset,
                   planner: Planner | None = None) -> SimulationReport:
    """Run ``cfg.rounds`` federated rounds and return the full report.

    On divergence the raised :class:`DivergenceError` carries the rounds
    completed so far in ``partial_records``.
    """
    start = time.perf_counter()
    partial: list[RoundRecord] = []
    try:
        init_acc, init_loss = _run_loop(cfg, train_data, test_data, planner, partial)
    except DivergenceError as exc:
        exc.partial_records = tuple(partial)
        raise
    records = tuple(partial)
    return SimulationReport(cfg, init_acc, init_loss, records, summarize(records, init_acc),
                            time.perf_counter() - start)


# ---------------------------------------------------------------------------
# comparison

@dataclass(frozen=True)
class ComparisonRow:
    policy: str
    seed: int
    num_channels: int
    avg_selected_snr_db: float
    avg_comm_latency_s: float
    final_test_accuracy: float
    initial_accuracy: float
    avg_compute_latency_s: float
    total_payload_bits: int


@dataclass(frozen=True)
class ComparisonReport:
    config: SimConfig
    rows: tuple[ComparisonRow, ...]
    per_policy: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": "comparison",
            "config": self.config.to_dict(),
            "rows": [vars(r) for r in self.rows],
            "per_policy": self.per_policy,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ComparisonReport":
        return cls(SimConfig.from_dict(d["config"]), tuple(ComparisonRow(**r) for r in d["rows"]),
                   d["per_policy"])

    def median(self, policy: str, metric: str, num_channels: int | None = None) -> float:
        vals = [getattr(r, metric) for r in self.rows
                if r.policy == policy and (num_channels is None or r.num_channels == num_channels)]
        return median(vals)


_METRICS = ("avg_selected_snr_db", "avg_comm_latency_s", "final_test_accuracy")


def _aggregate(rows: Sequence[ComparisonRow]) -> dict:
    out: dict = {}
    for policy in dict.fromkeys(r.policy for r in rows):
        for k in sorted({r.num_channels for r in rows}):
            sel = [r for r in rows if r.policy == policy and r.num_channels == k]
            if not sel:
                continue
            out.setdefault(policy, {})[str(k)] = {
                **{f"mean_{m}": fmean(getattr(r, m) for r in sel) for m in _METRICS},
                **{f"median_{m}": median(getattr(r, m) for r in sel) for m in _METRICS},
                "runs": len(sel),
            }
    return out


def comparison_row(report: SimulationReport) -> ComparisonRow:
    s, cfg = report.summary, report.config
    return ComparisonRow(
        policy=cfg.policy,
        seed=cfg.master_seed,
        num_channels=cfg.num_channels,
        avg_selected_snr_db=s["mean_selected_snr_db"] if s["mean_selected_snr_db"] is not None else 0.0,
        avg_comm_latency_s=s["mean_round_comm_latency_s"] if s["mean_round_comm_latency_s"] is not None else 0.0,
        final_test_accuracy=s["final_accuracy"],
        initial_accuracy=report.initial_accuracy,
        avg_compute_latency_s=(s["mean_round_compute_latency_s"]
                               if s["mean_round_compute_latency_s"] is not None else 0.0),
        total_payload_bits=s["total_payload_bits"],
    )


def _run_one(args) -> ComparisonRow:
    cfg, train, test = args
    return comparison_row(run_simulation(cfg, train, test))


def run_comparison(cfg: SimConfig, policies: Sequence[str], seeds: Sequence[int],
                   train_data: LabeledDataset, test_data: LabeledDataset,
                   channels: Sequence[int] | None = None, workers: int = 1) -> ComparisonReport:
    """Run every (policy, seed, K) on the same data and environment streams.

    Rows come back ordered by (policy, seed, K) in the order given, whatever
    ``workers`` is.
    """
    if not policies or not seeds:
        raise ValueError("need at least one policy and one seed")
    channels = list(channels) if channels else [cfg.num_channels]
    jobs = [(cfg.replace(policy=p, master_seed=s, num_channels=k), train_data, test_data)
            for p in policies for s in seeds for k in channels]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_one, jobs))
    else:
        rows = [_run_one(j) for j in jobs]
    return ComparisonReport(cfg, tuple(rows), _aggregate(rows))


# ---------------------------------------------------------------------------
# replay

def _normalize(obj):
    return json.loads(json.dumps(obj, allow_nan=False))


def first_difference(expected, actual, path: str = "") -> str | None:
    """Path of the first field where two JSON-like trees differ, or None."""
    if isinstance(expected, dict) and isinstance(actual, dict):
        for key in sorted(set(expected) | set(actual)):
            if key not in expected or key not in actual:
                return f"{path}.{key}".lstrip(".")
            found = first_difference(expected[key], actual[key], f"{path}.{key}")
            if found:
                return found
        return None
    if isinstance(expected, list) and isinstance(actual, list):
        for i, (a, b) in enumerate(zip(expected, actual)):
            found = first_difference(a, b, f"{path}[{i}]")
            if found:
                return found
        if len(expected) != len(actual):
            return f"{path}[{min(len(expected), len(actual))}]".lstrip(".")
        return None
    if type(expected) is not type(actual) or expected != actual:
        return path.lstrip(".") or "<root>"
    return None


def replay_dict(stored: dict, train: LabeledDataset | None = None, test: LabeledDataset | None = None,
                data_dir=None) -> SimulationReport:
    cfg = SimConfig.from_dict(stored["config"])
    if train is None or test is None:
        train, test = resolve_data(cfg, data_dir)
    fresh = run_simulation(cfg, train, test)
    a = {k: v for k, v in _normalize(stored).items() if k != "wall_time_s"}
    b = {k: v for k, v in _normalize(fresh.to_dict()).items() if k != "wall_time_s"}
    where = first_difference(a, b)
    if where is not None:
        raise ReproducibilityError("replayed run diverges from the stored report", path=where)
    return fresh


def replay(report_path, train: LabeledDataset | None = None, test: LabeledDataset | None = None,
           data_dir=None) -> SimulationReport:
    """Re-run a stored simulation report from its embedded config and demand identical records."""
    with open(report_path, "r", encoding="utf-8") as fh:
        stored = json.load(fh)
    return replay_dict(stored, train, test, data_dir)


def env_log(report: SimulationReport) -> list[tuple[int, tuple[float, ...], tuple[int, ...]]]:
    """(round, SNR of every client, dropped clients) per round."""
    return [(r.round_idx, r.env_snr_db, r.env_dropped) for r in report.records]

