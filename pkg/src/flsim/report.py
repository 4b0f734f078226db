"""Byte-stable report emission: JSON reports, comparison CSV and partition statistics.

Floats are written with ``repr``, the shortest decimal that round-trips, and
never through locale-aware formatting.
"""

from __future__ import annotations

import csv
import io
import json

from .config import SimConfig
from .dataset import LabeledDataset, dirichlet_partition, label_entropy, subsample
from .errors import FormatError
from .orchestrator import ComparisonReport, SimulationReport, comparison_row
from .rng import derive_seed

CSV_COLUMNS = ("policy", "seed", "num_channels", "avg_selected_snr_db", "avg_comm_latency_s",
               "final_test_accuracy")

Report = SimulationReport | ComparisonReport


def _cell(value) -> str:
    return repr(float(value)) if isinstance(value, float) else str(value)


def _csv(rows: list[list]) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue().encode("utf-8")


def emit_report(report: Report, fmt: str = "json") -> bytes:
    """Serialize a report.

    ``json`` gives the full report with sorted keys. ``csv`` gives one
    comparison row per (policy, seed, K); a single simulation becomes one row.
    """
    if fmt == "json":
        text = json.dumps(report.to_dict(), sort_keys=True, indent=2, allow_nan=False)
        return (text + "\n").encode("utf-8")
    if fmt == "csv":
        rows = report.rows if isinstance(report, ComparisonReport) else (comparison_row(report),)
        return _csv([list(CSV_COLUMNS)] + [[getattr(r, c) for c in CSV_COLUMNS] for r in rows])
    raise ValueError(f"unknown format {fmt!r}; expected json or csv")


def load_report(source) -> Report:
    """Load a JSON report from a path or from bytes/str already in memory."""
    if isinstance(source, (bytes, str)) and not _looks_like_path(source):
        data = json.loads(source)
    else:
        with open(source, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    kind = data.get("kind") if isinstance(data, dict) else None
    if kind == "simulation":
        return SimulationReport.from_dict(data)
    if kind == "comparison":
        return ComparisonReport.from_dict(data)
    raise FormatError(f"not a report file (kind={kind!r})")


def _looks_like_path(source) -> bool:
    text = source.decode("utf-8", "replace") if isinstance(source, bytes) else source
    return not text.lstrip().startswith("{")


def partition_stats(cfg: SimConfig, train: LabeledDataset) -> bytes:
    """Per-client size, label entropy (nats) and class histogram as CSV.

    The partition is the one a simulation with ``cfg`` would use.
    """
    train = subsample(train, cfg.subsample_size, derive_seed(cfg.master_seed, "subsample"))
    shards = dirichlet_partition(train, cfg.partition_config())
    header = ["client_id", "num_samples", "entropy_nats"] + [f"class_{c}" for c in range(train.num_classes)]
    rows = [header]
    for s in shards:
        rows.append([s.client_id, len(s), label_entropy(s.class_histogram)]
                    + [int(c) for c in s.class_histogram])
    return _csv(rows)
