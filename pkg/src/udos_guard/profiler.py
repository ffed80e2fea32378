"""Per-packet, per-layer resource attribution.

Probe events carry cumulative per-core counter snapshots, exactly as a PMU
read would. A layer's usage is the difference between its exit and entry
snapshots; when the packet migrates to another core mid-layer the partial
delta on the leaving core is carried over and the entry snapshot is
re-based on the destination core's counters.
"""
from __future__ import annotations

import enum
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Hashable

from .core import (
    ZERO,
    ClientId,
    Layer,
    PacketRecord,
    ResourceVector,
)


class ProfilerError(Exception):
    """Malformed probe-event stream."""


class DuplicateEntry(ProfilerError):
    pass


class MissingEntry(ProfilerError):
    pass


class UnknownPacket(ProfilerError):
    pass


class IncompletePacket(ProfilerError):
    pass


class ProbeKind(enum.Enum):
    LAYER_ENTRY = "layer_entry"
    LAYER_EXIT = "layer_exit"
    CORE_SWITCH = "core_switch"
    CONN_ACCEPT = "conn_accept"


@dataclass(frozen=True, slots=True)
class ProbeEvent:
    kind: ProbeKind
    timestamp: int
    cpu_id: int
    packet_id: Hashable | None = None
    layer: Layer | None = None
    counters: ResourceVector = ZERO
    to_cpu: int | None = None
    # Destination core's snapshot at the switch (CoreSwitch only).
    to_counters: ResourceVector | None = None
    # Source address, resolved on entry probes and on accepts.
    client: ClientId | None = None
    program_id: int = 0


@dataclass
class _OpenLayer:
    layer: Layer
    cpu_id: int
    entry: ResourceVector
    accumulated: ResourceVector = ZERO
    # Snapshot of the most recent probe for this layer; used on force-expiry.
    last_seen: ResourceVector = ZERO


@dataclass
class _PacketState:
    client: ClientId | None
    usage: dict[Layer, ResourceVector] = field(default_factory=dict)
    open: _OpenLayer | None = None
    conn_count: int = 0
    program_id: int = 0
    last_cpu: int = 0
    last_event: int = 0


@dataclass(frozen=True, slots=True)
class OrphanAccept:
    """A connection accepted while no tracked request of that client was in flight."""

    timestamp: int
    client: ClientId


class Profiler:
    """Attributes counter deltas to (packet, layer) pairs.

    In-flight packets with an open layer are indexed in a per-core store, so a
    packet sits in exactly one core's store at a time.
    """

    def __init__(self) -> None:
        self._packets: dict[Hashable, _PacketState] = {}
        self._stores: dict[int, set[Hashable]] = {}
        self._orphans: list[OrphanAccept] = []
        self.unattributed_accepts = 0

    # -- probe handlers -------------------------------------------------

    def on_event(self, ev: ProbeEvent) -> None:
        handler = _DISPATCH[ev.kind]
        handler(self, ev)

    def on_layer_entry(self, ev: ProbeEvent) -> None:
        if ev.layer is None:
            raise ProfilerError("layer entry without a layer")
        state = self._packets.get(ev.packet_id)
        if state is None:
            state = _PacketState(client=ev.client)
            self._packets[ev.packet_id] = state
        if state.open is not None:
            raise DuplicateEntry(
                f"packet {ev.packet_id!r} entered {ev.layer.label} while "
                f"{state.open.layer.label} is still open"
            )
        if ev.layer in state.usage:
            raise DuplicateEntry(f"packet {ev.packet_id!r} re-entered {ev.layer.label}")
        if state.client is None:
            state.client = ev.client
        if ev.layer is Layer.APPLICATION:
            state.program_id = ev.program_id
        state.open = _OpenLayer(ev.layer, ev.cpu_id, ev.counters, last_seen=ev.counters)
        state.last_cpu = ev.cpu_id
        state.last_event = ev.timestamp
        self._stores.setdefault(ev.cpu_id, set()).add(ev.packet_id)

    def on_layer_exit(self, ev: ProbeEvent) -> None:
        state = self._packets.get(ev.packet_id)
        if state is None or state.open is None or state.open.layer is not ev.layer:
            raise MissingEntry(f"exit of {ev.layer!r} for packet {ev.packet_id!r} with no entry")
        open_ = state.open
        if open_.cpu_id != ev.cpu_id:
            raise ProfilerError(
                f"packet {ev.packet_id!r} exited on core {ev.cpu_id} but is tracked on core {open_.cpu_id}"
            )
        delta = ev.counters - open_.entry
        state.usage[open_.layer] = delta + open_.accumulated
        state.open = None
        state.last_event = ev.timestamp
        self._stores[open_.cpu_id].discard(ev.packet_id)

    def on_core_switch(self, ev: ProbeEvent) -> None:
        state = self._packets.get(ev.packet_id)
        if state is None or state.open is None or state.open.cpu_id != ev.cpu_id:
            raise UnknownPacket(f"core switch for packet {ev.packet_id!r} with no open layer on core {ev.cpu_id}")
        if ev.to_cpu is None or ev.to_counters is None:
            raise ProfilerError("core switch needs to_cpu and to_counters")
        open_ = state.open
        open_.accumulated = open_.accumulated + (ev.counters - open_.entry)
        open_.entry = ev.to_counters
        open_.last_seen = ev.to_counters
        open_.cpu_id = ev.to_cpu
        self._stores[ev.cpu_id].discard(ev.packet_id)
        self._stores.setdefault(ev.to_cpu, set()).add(ev.packet_id)
        state.last_cpu = ev.to_cpu
        state.last_event = ev.timestamp

    def on_conn_accept(self, ev: ProbeEvent) -> None:
        state = self._packets.get(ev.packet_id) if ev.packet_id is not None else None
        if state is not None:
            state.conn_count += 1
            return
        if ev.client is None:
            self.unattributed_accepts += 1
            return
        self._orphans.append(OrphanAccept(ev.timestamp, ev.client))

    # -- completion -----------------------------------------------------

    def finalize_packet(
        self,
        packet_id: Hashable,
        timestamp: int,
        last_layer: Layer = Layer.APPLICATION,
    ) -> PacketRecord:
        """Assemble the record of a completely processed packet.

        ``last_layer`` is the highest layer the packet reached (a fragment that
        never reassembles stops at the network layer). Every layer up to it
        must have been entered and exited; layers above contribute zero.
        """
        state = self._packets.get(packet_id)
        if state is None:
            raise UnknownPacket(f"packet {packet_id!r} is not in flight")
        missing = [l.label for l in Layer if l <= last_layer and l not in state.usage]
        if state.open is not None or missing:
            raise IncompletePacket(f"packet {packet_id!r} has unfinished layers: {missing}")
        if state.client is None:
            raise ProfilerError(f"packet {packet_id!r} has no resolved client")
        return self._assemble(packet_id, state, timestamp, incomplete=False)

    def expire_stale(self, now: int, max_age: int) -> list[PacketRecord]:
        """Force-finalize packets whose last probe is older than ``max_age`` ns.

        An open layer is charged what was seen up to its last probe; the
        record is flagged incomplete.
        """
        out = []
        for packet_id in [p for p, s in self._packets.items() if now - s.last_event > max_age]:
            state = self._packets[packet_id]
            if state.client is None:
                del self._packets[packet_id]
                continue
            if state.open is not None:
                open_ = state.open
                state.usage[open_.layer] = (open_.last_seen - open_.entry) + open_.accumulated
                self._stores[open_.cpu_id].discard(packet_id)
                state.open = None
            out.append(self._assemble(packet_id, state, now, incomplete=True))
        return out

    def _assemble(self, packet_id, state: _PacketState, timestamp: int, incomplete: bool) -> PacketRecord:
        usage = {layer: state.usage.get(layer, ZERO) for layer in Layer}
        if state.conn_count:
            app = usage[Layer.APPLICATION]
            usage[Layer.APPLICATION] = app + ResourceVector(0, 0, state.conn_count)
        del self._packets[packet_id]
        return PacketRecord(
            timestamp=timestamp,
            cpu_id=state.last_cpu,
            client=state.client,
            usage=usage,
            program_id=state.program_id,
            incomplete=incomplete,
        )

    def drain_orphan_accepts(self) -> list[OrphanAccept]:
        out, self._orphans = self._orphans, []
        return out

    # -- introspection --------------------------------------------------

    def in_flight(self) -> int:
        return len(self._packets)

    def store(self, cpu_id: int) -> frozenset:
        return frozenset(self._stores.get(cpu_id, ()))

    def stores_empty(self) -> bool:
        return all(not s for s in self._stores.values())


_DISPATCH: dict[ProbeKind, Callable[[Profiler, ProbeEvent], None]] = {
    ProbeKind.LAYER_ENTRY: Profiler.on_layer_entry,
    ProbeKind.LAYER_EXIT: Profiler.on_layer_exit,
    ProbeKind.CORE_SWITCH: Profiler.on_core_switch,
    ProbeKind.CONN_ACCEPT: Profiler.on_conn_accept,
}


class RingBuffer:
    """Bounded byte-accounted FIFO between one producer core and the consumer.

    On overflow the incoming record is rejected (drop-newest); the producer is
    never blocked. ``encode``/``decode`` default to the 126-byte record codec.
    """

    def __init__(self, capacity_bytes: int, encode=None, decode=None) -> None:
        if capacity_bytes <= 0:
            raise ValueError("capacity_bytes must be positive")
        if encode is None or decode is None:
            from .trace_io.codec import decode_record, encode_record

            encode = encode or encode_record
            decode = decode or decode_record
        self.capacity_bytes = capacity_bytes
        self._encode = encode
        self._decode = decode
        self._items: deque[bytes] = deque()
        self._used = 0
        self._lock = threading.Lock()
        self.pushed = 0
        self.accepted = 0
        self.dropped_count = 0
        self.dropped_usage: dict[Layer, ResourceVector] = {layer: ZERO for layer in Layer}

    @property
    def used_bytes(self) -> int:
        return self._used

    def __len__(self) -> int:
        return len(self._items)

    def push(self, rec: PacketRecord) -> bool:
        blob = self._encode(rec)
        with self._lock:
            self.pushed += 1
            if self._used + len(blob) > self.capacity_bytes:
                self.dropped_count += 1
                for layer, used in rec.usage.items():
                    self.dropped_usage[layer] = self.dropped_usage[layer] + used
                return False
            self._items.append(blob)
            self._used += len(blob)
            self.accepted += 1
            return True

    def drain(self, max_items: int | None = None) -> list[PacketRecord]:
        with self._lock:
            n = len(self._items) if max_items is None else min(max_items, len(self._items))
            blobs = [self._items.popleft() for _ in range(n)]
            self._used -= sum(len(b) for b in blobs)
        return [self._decode(b) for b in blobs]


def ring_push(rb: RingBuffer, rec: PacketRecord) -> bool:
    return rb.push(rec)


def ring_drain(rb: RingBuffer, max_items: int | None = None) -> list[PacketRecord]:
    return rb.drain(max_items)
