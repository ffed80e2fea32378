"""The deterministic profiling-and-mitigation pipeline.

Producers (one per core) feed probe events into the profiler and push
finalized records into their core's ring buffer. On every watchdog tick the
single consumer drains all rings in core order, updates the windows, samples
the watchdog and, while it is active, makes blocking decisions.

Both the simulator and trace replay drive this same object, which is what
makes a replayed trace reproduce the original block timeline.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Hashable

from .core import Layer, PacketRecord, PolicyConfig
from .mitigator import BlockEntry, DataHandler, EnforcementHook
from .profiler import ProbeEvent, Profiler, RingBuffer
from .watchdog import MitigationState, SystemMetrics, Watchdog


@dataclass
class TickOutcome:
    timestamp: int
    metrics: SystemMetrics
    state: MitigationState
    drained: list[PacketRecord] = field(default_factory=list)
    unblocked: list = field(default_factory=list)
    blocks: list[BlockEntry] = field(default_factory=list)


class Engine:
    def __init__(
        self,
        cfg: PolicyConfig,
        num_cores: int,
        enforcement: EnforcementHook | None = None,
        blocking_enabled: bool = True,
        on_trace: Callable[[str, object], None] | None = None,
    ) -> None:
        self.cfg = cfg
        self.profiler = Profiler()
        self.rings = [RingBuffer(cfg.ring_buffer_bytes_per_core) for _ in range(num_cores)]
        self.watchdog = Watchdog(cfg)
        self.handler = DataHandler(cfg, enforcement)
        self.blocking_enabled = blocking_enabled
        self.records: list[PacketRecord] = []
        self._trace = on_trace

    @property
    def num_cores(self) -> int:
        return len(self.rings)

    def feed(self, ev: ProbeEvent) -> None:
        if self._trace:
            self._trace("probe", ev)
        self.profiler.on_event(ev)

    def finalize(self, packet_id: Hashable, timestamp: int, last_layer: Layer = Layer.APPLICATION) -> bool:
        if self._trace:
            self._trace("finalize", (packet_id, timestamp, last_layer))
        rec = self.profiler.finalize_packet(packet_id, timestamp, last_layer)
        return self.push(rec)

    def push(self, rec: PacketRecord) -> bool:
        ring = self.rings[rec.cpu_id % len(self.rings)]
        return ring.push(rec)

    def on_tick(self, metrics: SystemMetrics) -> TickOutcome:
        if self._trace:
            self._trace("tick", metrics)
        now = metrics.timestamp
        for rec in self.profiler.expire_stale(now, self.cfg.incomplete_expiry_ns):
            self.push(rec)
        drained: list[PacketRecord] = []
        for ring in self.rings:
            drained.extend(ring.drain())
        for rec in drained:
            self.handler.ingest(rec)
        for acc in self.profiler.drain_orphan_accepts():
            self.handler.add_accept(acc.client, acc.timestamp)
        self.records.extend(drained)
        state = self.watchdog.tick(metrics)
        unblocked, blocks = self.handler.step(now, state.active, self.blocking_enabled)
        return TickOutcome(now, metrics, state, drained, unblocked, blocks)

    @property
    def ring_drops(self) -> int:
        return sum(r.dropped_count for r in self.rings)

    @property
    def blocklist(self):
        return self.handler.blocklist
