"""Command-line entry point.

Exit codes: 0 success, 2 usage error, 3 configuration error, 4 runtime error
(divergence, replay mismatch, unreadable data).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import DATA_DIR_ENV, SimConfig, parse_config, resolve_data
from .control_plane import POLICIES, MemoryStore
from .errors import ConfigError, DivergenceError, FlsimError, ReproducibilityError
from .orchestrator import replay, run_comparison, run_simulation
from .report import emit_report, load_report, partition_stats

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3, 4

log = logging.getLogger("flsim")


class UsageError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    """'0,1,2', '0-4' or a mix like '1,3-5'."""
    out: list[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if "-" in part:
                lo, hi = part.split("-", 1)
                out.extend(range(int(lo), int(hi) + 1))
            elif part:
                out.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers like 0,1,2 or 0-4, got {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _policy_list(text: str) -> list[str]:
    names = [p.strip() for p in text.split(",") if p.strip()]
    bad = [p for p in names if p not in POLICIES]
    if bad or not names:
        raise argparse.ArgumentTypeError(f"unknown policies {bad}; choose from {', '.join(POLICIES)}")
    return names


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flsim", description="Wireless federated learning simulator.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def data_flag(p):
        p.add_argument("--data-dir", help=f"directory with MNIST IDX files (else ${DATA_DIR_ENV})")

    def out_flags(p, default_fmt="json"):
        p.add_argument("-o", "--out", help="write here instead of stdout")
        p.add_argument("--format", choices=("json", "csv"), default=default_fmt)

    p = sub.add_parser("simulate", help="run one simulation")
    p.add_argument("config")
    p.add_argument("--seed", type=int, help="override master_seed")
    p.add_argument("--policy", choices=POLICIES, help="override policy")
    p.add_argument("--memory", help="also write the round memory as NDJSON")
    data_flag(p)
    out_flags(p)

    p = sub.add_parser("compare", help="run every policy on every seed")
    p.add_argument("config")
    p.add_argument("--policies", type=_policy_list, default=list(POLICIES))
    p.add_argument("--seeds", type=_int_list, default=list(range(5)))
    p.add_argument("--channels", type=_int_list, help="sweep K, e.g. 3-7 (default: config value)")
    p.add_argument("--workers", type=int, default=1)
    data_flag(p)
    out_flags(p, "csv")

    p = sub.add_parser("partition-stats", help="per-client sizes, entropies and histograms")
    p.add_argument("config")
    p.add_argument("-o", "--out")
    data_flag(p)

    p = sub.add_parser("replay", help="re-run a simulation report and check it matches")
    p.add_argument("report")
    data_flag(p)

    p = sub.add_parser("report", help="re-emit a stored report")
    p.add_argument("report")
    out_flags(p)
    return parser


def _write(data: bytes, out: str | None) -> None:
    if out:
        Path(out).write_bytes(data)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()


def _load_config(path: str) -> SimConfig:
    try:
        return parse_config(path)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None


def _simulate(args) -> int:
    cfg = _load_config(args.config)
    changes = {k: v for k, v in (("master_seed", args.seed), ("policy", args.policy)) if v is not None}
    cfg = cfg.replace(**changes)
    train, test = resolve_data(cfg, args.data_dir)
    try:
        report = run_simulation(cfg, train, test)
    except DivergenceError as exc:
        log.error("%s (%d rounds completed)", exc, len(getattr(exc, "partial_records", ())))
        return EXIT_RUNTIME
    _write(emit_report(report, args.format), args.out)
    if args.memory:
        Path(args.memory).write_bytes(MemoryStore(report.records).to_ndjson())
    s = report.summary
    log.info("init acc %.4f -> final acc %.4f in %.2fs", report.initial_accuracy, s["final_accuracy"],
             report.wall_time_s)
    return EXIT_OK


def _compare(args) -> int:
    cfg = _load_config(args.config)
    if args.workers < 1:
        raise UsageError("--workers must be >= 1")
    if args.channels and min(args.channels) < 1:
        raise UsageError("--channels must be positive")
    train, test = resolve_data(cfg, args.data_dir)
    report = run_comparison(cfg, args.policies, args.seeds, train, test, args.channels, args.workers)
    _write(emit_report(report, args.format), args.out)
    for policy in args.policies:
        log.info("%-16s median final acc %.4f", policy, report.median(policy, "final_test_accuracy"))
    return EXIT_OK


def _partition_stats(args) -> int:
    cfg = _load_config(args.config)
    train, _ = resolve_data(cfg, args.data_dir)
    _write(partition_stats(cfg, train), args.out)
    return EXIT_OK


def _replay(args) -> int:
    report = replay(args.report, data_dir=args.data_dir)
    log.info("replay ok: %d rounds identical", len(report.records))
    print(f"replay ok: {len(report.records)} rounds identical")
    return EXIT_OK


def _report(args) -> int:
    _write(emit_report(load_report(args.report), args.format), args.out)
    return EXIT_OK


COMMANDS = {
    "simulate": _simulate,
    "compare": _compare,
    "partition-stats": _partition_stats,
    "replay": _replay,
    "report": _report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"flsim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"flsim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ReproducibilityError as exc:
        print(f"flsim: replay mismatch: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (FlsimError, OSError, ValueError) as exc:
        print(f"flsim: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
