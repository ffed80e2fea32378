"""Acceptance criteria 1-10, one PASS/FAIL line each.

Every tolerance is a module constant below. The scenario checks measure the
quantity the criterion names (window sums recomputed from the emitted
records, request outcomes inside block intervals, sampled memory and
connection series) rather than trusting the engine's own decisions.
"""
import time
from collections import deque

import pytest

import test_codec
import test_mitigator
import test_profiler
import test_ring
import test_watchdog
from udos_guard.cli import main
from udos_guard.core import Layer, Resource
from udos_guard.simnet import PRESETS, preset, run_scenario
from udos_guard.simnet.sweeps import (
    DEFAULT_THRESHOLDS,
    _latency_ms,
    availability_base,
    run_qos_sweep,
    run_threshold_sweep,
)

NS = 1_000_000_000
RUNTIME_LIMIT_S = 10.0
DETECT_LIMIT_NS = 3 * NS + NS // 10  # one window plus one tick
FRAG_EXCEED = 10**9
BENIGN_OK_MIN = 0.95
MEMORY_LIMIT = 0.90
SLOWLORIS_CONNS = 6
QOS_CLIENTS = range(1, 16)
QOS_FAIL_MAX = 0.30
LATENCY_EQ_MS = 1.0  # 1-2 clients: mitigation must not change latency by more than this
MIN_THRESHOLDS = 8


@pytest.fixture
def verdict(capsys):
    def emit(n, checks):
        ok = all(v for _, v in checks)
        failed = [name for name, v in checks if not v]
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}" + (f" ({', '.join(failed)})" if failed else ""))
        assert ok, failed
    return emit


def timed(fn, *a, **kw):
    t0 = time.perf_counter()
    out = fn(*a, **kw)
    return out, time.perf_counter() - t0


def first_exceed(records, client, layer, threshold, window=3 * NS):
    q, s = deque(), 0
    for rec in sorted((r for r in records if r.client == client), key=lambda r: r.timestamp):
        v = rec.usage[layer].instructions
        q.append((rec.timestamp, v))
        s += v
        while q[0][0] <= rec.timestamp - window:
            s -= q.popleft()[1]
        if s > threshold:
            return rec.timestamp
    return None


def test_criterion_1_fragmentsmack(verdict):
    rep, secs = timed(run_scenario, preset("fragmentsmack"))
    att = rep.workload("attacker").client
    t_exceed = first_exceed(rep.records, att, Layer.NETWORK, FRAG_EXCEED)
    blocks = [b for b in rep.blocks if b.client == att]
    first = blocks[0] if blocks else None
    benign_ok = True
    attacker_admitted = 0
    for start, end in rep.block_intervals(att):
        inside = [r for r in rep.requests_for("benign", "monitor") if start <= r.sent < end and r.status != "pending"]
        if inside and sum(r.status == "ok" for r in inside) / len(inside) < BENIGN_OK_MIN:
            benign_ok = False
        attacker_admitted += sum(1 for t, n in rep.admitted if n == "attacker" and start <= t < end)
    verdict(1, [
        ("attacker blocked", first is not None),
        ("blocked on network instructions", first is not None and first.reason.layer is Layer.NETWORK
         and first.reason.resource is Resource.INSTRUCTIONS),
        ("within window + tick of exceeding 1e9", t_exceed is not None and first is not None
         and t_exceed <= first.blocked_at <= t_exceed + DETECT_LIMIT_NS),
        (">= 95% benign success in every block", benign_ok),
        ("no attacker packet admitted while blocked", attacker_admitted == 0),
        ("runtime < 10 s", secs < RUNTIME_LIMIT_S),
    ])


def test_criterion_2_range_header(verdict):
    sc = preset("range-header")
    off, t_off = timed(run_scenario, sc, mitigation=False)
    on, t_on = timed(run_scenario, sc, mitigation=True)
    att = sc.workloads[[w.name for w in sc.workloads].index("attacker")]
    attack_start = int(att.start * NS)
    mem_off = [t.memory for t in off.ticks if t.timestamp >= attack_start]
    bursts = []
    k = 0
    while att.start + k * att.period < sc.duration:
        bursts.append(int((att.start + k * att.period) * NS))
        k += 1
    # Between consecutive bursts the mitigated server must be back at baseline.
    decays = True
    for a, b in zip(bursts, bursts[1:]):
        span = [t.memory for t in on.ticks if a <= t.timestamp < b]
        if span and span[-1] > sc.baseline_memory + 1e-9:
            decays = False
    verdict(2, [
        ("off: memory non-decreasing", all(x <= y for x, y in zip(mem_off, mem_off[1:]))),
        ("off: memory reaches 90%", max(mem_off) >= MEMORY_LIMIT),
        ("on: peak memory < 90%", on.peak_memory_fraction() < MEMORY_LIMIT),
        ("on: memory rises then decays", on.peak_memory_fraction() > sc.baseline_memory and decays),
        ("runtime < 10 s", max(t_off, t_on) < RUNTIME_LIMIT_S),
    ])


def test_criterion_3_slowloris(verdict):
    rep, secs = timed(run_scenario, preset("slowloris"))
    att = rep.workload("attacker").client
    blocks = [b for b in rep.blocks if b.client == att]
    series = list(zip((t.timestamp for t in rep.ticks), rep.connections["attacker"]))
    torn_down = []
    for b in blocks:
        zero = [t for t, n in series if b.blocked_at <= t < b.expires_at and n == 0]
        torn_down.append(zero[0] if zero else None)
    reconnected = True
    benign = rep.workload("benign").client
    for t0, b in zip(torn_down, blocks):
        if t0 is None:
            reconnected = False
            continue
        ok = [r for r in rep.requests_for("benign") if t0 <= r.sent < b.expires_at and r.status == "ok"]
        new = sum(r.usage[Layer.APPLICATION].new_connections for r in rep.records
                  if r.client == benign and t0 <= r.timestamp < b.expires_at)
        reconnected &= bool(ok) and new >= len(ok)
    verdict(3, [
        ("attacker blocked", bool(blocks)),
        ("on >= 6 connections", bool(blocks) and all(
            b.reason.resource is Resource.CONNECTIONS and b.reason.observed >= SLOWLORIS_CONNS for b in blocks)),
        ("teardown to 0 within each block", bool(blocks) and None not in torn_down),
        ("benign reconnects after teardown", bool(blocks) and reconnected),
        ("runtime < 10 s", secs < RUNTIME_LIMIT_S),
    ])


def test_criterion_4_qos_sweep(verdict):
    rows = run_qos_sweep(QOS_CLIENTS)
    by = {(r.clients, r.mitigation): r for r in rows}
    active = [n for n in QOS_CLIENTS if by[n, True].activated or by[n, False].activated]
    small = [n for n in QOS_CLIENTS if n <= 2]
    verdict(4, [
        ("watchdog activates somewhere", bool(active)),
        ("on latency < off latency when active", all(
            by[n, True].mean_latency_ms < by[n, False].mean_latency_ms for n in active)),
        ("0 < failure rate < 30% when active", all(0 < by[n, True].failure_rate < QOS_FAIL_MAX for n in active)),
        ("1-2 clients: zero drops", all(by[n, m].failures == 0 for n in small for m in (True, False))),
        ("1-2 clients: equal latency", all(
            abs(by[n, True].mean_latency_ms - by[n, False].mean_latency_ms) <= LATENCY_EQ_MS for n in small)),
    ])


def test_criterion_5_threshold_sweep(verdict):
    rows = run_threshold_sweep(DEFAULT_THRESHOLDS)
    finite = [r for r in rows if r.threshold is not None]
    inf = [r for r in rows if r.threshold is None]
    baseline = _latency_ms(run_scenario(availability_base(), mitigation=False).requests_for("monitor"))
    drops = [r.drop_rate for r in rows]
    lat = [r.mean_latency_ms for r in rows]
    verdict(5, [
        (">= 8 ascending thresholds", len(finite) >= MIN_THRESHOLDS
         and [r.threshold for r in finite] == sorted(r.threshold for r in finite)),
        ("drop rate non-increasing", all(a >= b for a, b in zip(drops, drops[1:]))),
        ("latency non-decreasing", all(a <= b for a, b in zip(lat, lat[1:]))),
        ("lowest threshold: max drops, min latency", drops[0] == max(drops) > 0 and lat[0] == min(lat)),
        ("inf: zero drops, baseline latency", bool(inf) and inf[0].drops == 0
         and abs(inf[0].mean_latency_ms - baseline) < 1e-9),
    ])


def _passes(fn, *args) -> bool:
    try:
        fn(*args)
    except AssertionError:
        return False
    return True


def test_criterion_6_profiler_oracle(verdict):
    verdict(6, [("1000 switched schedules equal switch-free replay",
                 _passes(test_profiler.test_segment_sum_oracle_1000_schedules))])


def test_criterion_7_window_rank_oracle(verdict):
    verdict(7, [("500 sequences equal brute force", _passes(test_mitigator.test_window_and_rank_oracle_500_sequences))])


def test_criterion_8_watchdog_hysteresis(verdict):
    verdict(8, [
        ("transition invariants", _passes(test_watchdog.test_transitions_respect_hysteresis)),
        ("in-band oscillation: zero transitions", _passes(test_watchdog.test_oscillation_inside_band_never_transitions)),
    ])


def test_criterion_9_codec(verdict):
    verdict(9, [
        ("10k round trips, 126 bytes each", _passes(test_codec.test_ten_thousand_random_round_trips)),
        ("16 MiB ring admits 100k records", _passes(test_ring.test_default_capacity_admits_100k_records)),
    ])


def test_criterion_10_determinism(verdict, tmp_path):
    same = []
    for name in PRESETS:
        for run in ("a", "b"):
            main(["run", "--scenario", name, "--seed", "7", "--out", str(tmp_path / name / run),
                  "--no-figures", "--no-trace"])
        for out in ("metrics.csv", "blocks.csv", "records.bin"):
            a = (tmp_path / name / "a" / out).read_bytes()
            b = (tmp_path / name / "b" / out).read_bytes()
            same.append((f"{name}/{out}", a == b))
    verdict(10, same)
