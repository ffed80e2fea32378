from dataclasses import replace

from udos_guard.core import Layer, PolicyConfig, Resource
from udos_guard.engine import Engine
from udos_guard.trace_io.codec import RECORD_SIZE
from udos_guard.watchdog import SystemMetrics

from helpers import record

NS = 1_000_000_000
HOT = SystemMetrics(0.99, 0.1, 0.0, 0)


def hot(t):
    return replace(HOT, timestamp=t)


def test_rings_drain_in_core_order():
    eng = Engine(PolicyConfig(), num_cores=3)
    eng.push(record(3, "10.0.0.3", cpu=2))
    eng.push(record(1, "10.0.0.1", cpu=0))
    eng.push(record(2, "10.0.0.2", cpu=1))
    eng.push(record(4, "10.0.0.4", cpu=0))
    out = eng.on_tick(SystemMetrics(0, 0, 0, 10))
    assert [r.timestamp for r in out.drained] == [1, 4, 2, 3]


def test_block_only_while_active():
    cfg = PolicyConfig(instruction_thresholds={Layer.NETWORK: 100})
    eng = Engine(cfg, 1)
    eng.push(record(NS, "10.0.0.9", network=(500, 0, 0)))
    cold = eng.on_tick(SystemMetrics(0.1, 0.1, 0.0, NS))
    assert cold.blocks == [] and not cold.state.active
    out = eng.on_tick(hot(NS + 1))
    assert [(b.reason.layer, b.reason.resource) for b in out.blocks] == [(Layer.NETWORK, Resource.INSTRUCTIONS)]


def test_blocking_disabled_still_ingests():
    cfg = PolicyConfig(instruction_thresholds={Layer.NETWORK: 100})
    eng = Engine(cfg, 1, blocking_enabled=False)
    eng.push(record(NS, "10.0.0.9", network=(500, 0, 0)))
    out = eng.on_tick(hot(NS))
    assert out.blocks == [] and out.state.active
    assert eng.handler.store.window_sum(out.drained[0].client, Layer.NETWORK, Resource.INSTRUCTIONS) == 500


def test_ring_overflow_is_counted_and_conserved():
    cfg = PolicyConfig(ring_buffer_bytes_per_core=RECORD_SIZE * 4)
    eng = Engine(cfg, 1)
    pushed = [record(i, "10.0.0.1", network=(i, 0, 0)) for i in range(10)]
    accepted = [eng.push(r) for r in pushed]
    assert accepted == [True] * 4 + [False] * 6
    out = eng.on_tick(SystemMetrics(0, 0, 0, 20))
    assert eng.ring_drops == 6
    ring = eng.rings[0]
    assert sum(r.usage[Layer.NETWORK].instructions for r in out.drained) + \
        ring.dropped_usage[Layer.NETWORK].instructions == sum(range(10))


def test_trace_callback_order():
    log = []
    eng = Engine(PolicyConfig(), 1, on_trace=lambda k, o: log.append(k))
    eng.push(record(1, "10.0.0.1"))
    eng.on_tick(SystemMetrics(0, 0, 0, 5))
    assert log == ["tick"]
