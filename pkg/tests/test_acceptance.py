"""Acceptance suite: one test and one PASS/FAIL line per criterion.

Lines are printed as each test finishes (visible with ``-s``) and repeated in
the terminal summary.
"""

import dataclasses
import itertools
import json
import math
import time

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES
from test_dataset import _labels_only
from test_learning import fd_gradient, random_instance, rel_err
from test_wireless import _report, brute_force_makespan, event_replay

from flsim.control_plane import POLICIES, ClientProfile, coverage, select_class_diversity
from flsim.dataset import PartitionConfig, dirichlet_partition, label_entropy
from flsim.errors import ReproducibilityError
from flsim.learning import gradient, quantize_values
from flsim.orchestrator import env_log, replay_dict, run_comparison, run_simulation
from flsim.report import emit_report
from flsim.wireless import WirelessConfig, dropout_draws, lpt_assign, round_comm_latency

SEEDS = [0, 1, 2, 3, 4]


def record(n: int, ok: bool, detail: str) -> None:
    line = f"AC-{n:02d} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def default_comparison(default_cfg, default_data):
    start = time.perf_counter()
    comp = run_comparison(default_cfg, list(POLICIES), SEEDS, *default_data)
    return comp, time.perf_counter() - start


def _medians(comp, metric):
    return {p: comp.median(p, metric) for p in POLICIES}


def _fmt(d):
    return ", ".join(f"{k}={v:.4g}" for k, v in d.items())


def test_ac01_diversity_highest_accuracy(default_comparison):
    comp, elapsed = default_comparison
    med = _medians(comp, "final_test_accuracy")
    others = [v for p, v in med.items() if p != "class_diversity"]
    ok = med["class_diversity"] > max(others) and elapsed < 300
    record(1, ok, f"median final accuracy {_fmt(med)} ({elapsed:.1f}s for 20 runs)")


def test_ac02_latency_best_snr_and_delay(default_comparison):
    comp, _ = default_comparison
    snr = _medians(comp, "avg_selected_snr_db")
    lat = _medians(comp, "avg_comm_latency_s")
    ok = (all(snr["latency"] > v for p, v in snr.items() if p != "latency")
          and all(lat["latency"] < v for p, v in lat.items() if p != "latency"))
    record(2, ok, f"median SNR dB {_fmt(snr)}; median comm latency s {_fmt(lat)}")


def test_ac03_net_improvement(default_comparison):
    comp, _ = default_comparison
    wins = {p: sum(r.final_test_accuracy > r.initial_accuracy for r in comp.rows if r.policy == p)
            for p in POLICIES}
    record(3, all(w >= 4 for w in wins.values()), f"seeds improved out of 5: {wins}")


def test_ac04_gradients():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for kind in ("logistic", "mlp1"):
        for _ in range(10):
            params, x, y = random_instance(rng, kind)
            worst = max(worst, rel_err(gradient(params, (x, y)), fd_gradient(params, x, y)))
    elapsed = time.perf_counter() - start
    record(4, worst < 1e-5 and elapsed < 10, f"worst relative error {worst:.2e} in {elapsed:.2f}s")


def test_ac05_partition():
    ds = _labels_only([120] * 10)
    covers = 0

    def mean_entropy(alpha):
        nonlocal covers
        vals = []
        for seed in range(20):
            shards = dirichlet_partition(ds, PartitionConfig(15, alpha, 1, seed=seed))
            allidx = np.sort(np.concatenate([s.sample_indices for s in shards]))
            assert np.array_equal(allidx, np.arange(len(ds)))
            covers += 1
            vals.append(np.mean([label_entropy(s.class_histogram) for s in shards]))
        return float(np.mean(vals))

    low, high = mean_entropy(0.1), mean_entropy(10.0)
    record(5, low < high, f"{covers} exact covers; mean client entropy a=0.1: {low:.3f} < a=10: {high:.3f}")


def test_ac06_quantization():
    rng = np.random.default_rng(6)
    worst = {8: 0.0, 16: 0.0}
    for _ in range(1000):
        v = rng.normal(0, rng.uniform(0.01, 50), int(rng.integers(1, 200)))
        for bits in (8, 16):
            deq, step = quantize_values(v, bits)
            worst[bits] = max(worst[bits], float(np.max(np.abs(deq - v))) / (step / 2))
        deq32, _ = quantize_values(v, 32)
        assert deq32.tobytes() == v.tobytes()
    ok = all(w <= 1 + 1e-12 for w in worst.values())
    record(6, ok, f"max error / (step/2): 8-bit {worst[8]:.6f}, 16-bit {worst[16]:.6f}; 32-bit bit-exact")


def test_ac07_scheduling():
    rng = np.random.default_rng(77)
    ratio, checked = 0.0, 0
    for n in range(1, 9):
        for k in (1, 2, 3):
            for _ in range(5):
                lat = {i: float(rng.uniform(0.05, 5)) for i in range(n)}
                a = lpt_assign(lat, list(range(n)), k)
                mk = round_comm_latency(a, {c: _report(c, lat[c]) for c in lat})
                ratio = max(ratio, mk / brute_force_makespan(list(lat.values()), k))
                checked += 1
    replay_ok = True
    for _ in range(20):
        n, k = int(rng.integers(1, 12)), int(rng.integers(1, 6))
        lat = {i: float(rng.uniform(0.01, 3)) for i in range(n)}
        a = lpt_assign(lat, list(range(n)), k)
        reports = {i: _report(i, lat[i], float(rng.uniform(0, 1)), bool(rng.random() < 0.3)) for i in range(n)}
        replay_ok &= math.isclose(round_comm_latency(a, reports), event_replay(a, reports), rel_tol=1e-12)
    record(7, ratio <= 4 / 3 + 1e-12 and replay_ok,
           f"worst LPT/optimal {ratio:.4f} over {checked} instances; event replay match on 20: {replay_ok}")


def test_ac08_greedy_coverage():
    rng = np.random.default_rng(88)
    worst, checked = 1.0, 0
    for n in range(1, 11):
        for k in range(1, 5):
            for _ in range(5):
                profiles = []
                for cid in range(n):
                    hist = tuple(int(h) for h in rng.integers(0, 5, 8) * (rng.random(8) < 0.35))
                    profiles.append(ClientProfile(cid, sum(hist), hist, 1000.0, 15.0))
                hists = [p.class_histogram for p in profiles]
                best = max(coverage([hists[i] for i in c]) for c in itertools.combinations(range(n), min(k, n)))
                got = coverage([hists[i] for i in select_class_diversity(profiles, k)])
                if best:
                    worst = min(worst, got / best)
                checked += 1
    record(8, worst >= 1 - 1 / math.e, f"worst greedy/optimal coverage {worst:.3f} over {checked} instances")


def test_ac09_determinism_and_replay(default_cfg, default_data):
    cfg = default_cfg.replace(policy="class_diversity", master_seed=11)
    a, b = run_simulation(cfg, *default_data), run_simulation(cfg, *default_data)
    identical = (emit_report(dataclasses.replace(a, wall_time_s=0.0))
                 == emit_report(dataclasses.replace(b, wall_time_s=0.0)))
    stored = json.loads(emit_report(a))
    fresh_ok = len(replay_dict(stored, *default_data).records) == cfg.rounds
    stored["records"][4]["metrics"]["test_accuracy"] += 1e-9
    try:
        replay_dict(stored, *default_data)
        tamper_caught = False
    except ReproducibilityError as exc:
        tamper_caught = exc.path == "records[4].metrics.test_accuracy"
    record(9, identical and fresh_ok and tamper_caught,
           f"byte-identical: {identical}; fresh replay ok: {fresh_ok}; tamper detected at field: {tamper_caught}")


def test_ac10_environment_separation(default_cfg, default_data):
    logs = {p: env_log(run_simulation(default_cfg.replace(policy=p, master_seed=5), *default_data))
            for p in POLICIES}
    ok = all(logs[p] == logs["random"] for p in POLICIES)
    cells = sum(len(snr) for _, snr, _ in logs["random"])
    record(10, ok, f"{cells} (round, client) SNR draws and dropout sets identical across {len(POLICIES)} policies")


def test_ac11_dropout_rate():
    cfg = WirelessConfig(dropout_prob=0.3, seed=12345)
    draws = [d for r in range(6667) for d in dropout_draws(range(15), cfg, r).values()]
    rate = float(np.mean(draws))
    record(11, len(draws) >= 100_000 and abs(rate - 0.30) <= 0.01, f"{len(draws)} trials, drop rate {rate:.4f}")
