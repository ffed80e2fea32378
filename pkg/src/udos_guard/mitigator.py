"""Data handler: windowed per-client accounting, ranking and temporary blocks."""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Protocol

from .core import (
    U64_MAX,
    ClientId,
    Layer,
    PacketRecord,
    PolicyConfig,
    Resource,
)

log = logging.getLogger(__name__)

# Pairs checked on every decision pass, in a fixed order.
CHECKED_PAIRS: tuple[tuple[Layer, Resource], ...] = tuple(
    (layer, res) for layer in Layer for res in (Resource.INSTRUCTIONS, Resource.MBM_BYTES)
) + ((Layer.APPLICATION, Resource.CONNECTIONS),)


class _Window:
    __slots__ = ("entries", "instr", "mbm", "conns", "conn_total")

    def __init__(self) -> None:
        self.entries: deque[tuple[int, tuple[int, ...], tuple[int, ...]]] = deque()
        self.instr = [0, 0, 0, 0]
        self.mbm = [0, 0, 0, 0]
        # New connections with their timestamps: in-request accepts and orphans alike.
        self.conns: deque[tuple[int, int]] = deque()
        self.conn_total = 0

    def empty(self) -> bool:
        return not self.entries and not self.conns


class ClientWindowStore:
    """Per-client sliding-window sums, kept exact under ingest and eviction.

    Sums are held as unbounded ints and clamped to 64 bits only when read.
    """

    def __init__(self, whitelist: Iterable[ClientId] = ()) -> None:
        self.whitelist = frozenset(whitelist)
        self._windows: dict[ClientId, _Window] = {}

    def __contains__(self, client: ClientId) -> bool:
        return client in self._windows

    def __len__(self) -> int:
        return len(self._windows)

    def clients(self) -> list[ClientId]:
        return sorted(self._windows)

    def ingest(self, rec: PacketRecord) -> None:
        w = self._windows.get(rec.client)
        if w is None:
            w = self._windows[rec.client] = _Window()
        instr = tuple(rec.usage[l].instructions for l in Layer)
        mbm = tuple(rec.usage[l].mbm_bytes for l in Layer)
        w.entries.append((rec.timestamp, instr, mbm))
        for i in range(4):
            w.instr[i] += instr[i]
            w.mbm[i] += mbm[i]
        conns = sum(rec.usage[l].new_connections for l in Layer)
        if conns:
            w.conns.append((rec.timestamp, conns))
            w.conn_total += conns

    def add_accepts(self, client: ClientId, timestamp: int, count: int = 1) -> None:
        w = self._windows.get(client)
        if w is None:
            w = self._windows[client] = _Window()
        w.conns.append((timestamp, count))
        w.conn_total += count

    def evict_stale(self, now: int, window_ns: int) -> int:
        """Drop entries older than ``now - window_ns``; returns how many went."""
        cutoff = now - window_ns
        evicted = 0
        for client in list(self._windows):
            w = self._windows[client]
            # Entries arrive roughly in time order but not strictly (cores finish
            # out of order), so scan the whole deque rather than just its head.
            if w.entries and min(e[0] for e in w.entries) < cutoff:
                kept = deque()
                for entry in w.entries:
                    if entry[0] < cutoff:
                        evicted += 1
                        for i in range(4):
                            w.instr[i] -= entry[1][i]
                            w.mbm[i] -= entry[2][i]
                    else:
                        kept.append(entry)
                w.entries = kept
            if w.conns and min(c[0] for c in w.conns) < cutoff:
                kept_c = deque()
                for ts, n in w.conns:
                    if ts < cutoff:
                        evicted += 1
                        w.conn_total -= n
                    else:
                        kept_c.append((ts, n))
                w.conns = kept_c
            if w.empty():
                del self._windows[client]
        return evicted

    def window_sum(self, client: ClientId, layer: Layer, resource: Resource) -> int:
        w = self._windows.get(client)
        if w is None:
            return 0
        if resource is Resource.INSTRUCTIONS:
            value = w.instr[layer]
        elif resource is Resource.MBM_BYTES:
            value = w.mbm[layer]
        else:
            value = w.conn_total
        return min(value, U64_MAX)

    def live_entries(self, client: ClientId) -> list[tuple[int, tuple[int, ...], tuple[int, ...]]]:
        w = self._windows.get(client)
        return list(w.entries) if w else []

    def rank(self, layer: Layer, resource: Resource) -> list[tuple[ClientId, int]]:
        return rank(self, layer, resource)


def rank(store: ClientWindowStore, layer: Layer, resource: Resource) -> list[tuple[ClientId, int]]:
    """Clients by descending windowed sum; ties go to the lower address."""
    rows = [
        (c, store.window_sum(c, layer, resource))
        for c in store._windows
        if c not in store.whitelist
    ]
    rows.sort(key=lambda row: (-row[1], row[0]))
    return rows


@dataclass(frozen=True)
class BlockDecision:
    client: ClientId
    at: int
    layer: Layer
    resource: Resource
    observed: int
    threshold: int


@dataclass(frozen=True)
class BlockEntry:
    client: ClientId
    blocked_at: int
    expires_at: int
    reason: BlockDecision


class AlreadyBlocked(Exception):
    pass


class EnforcementHook(Protocol):
    """Binding to whatever actually stops a client.

    ``drop_ingress`` installs the passive drop, ``teardown_sessions`` closes
    the client's established sessions, ``release`` lifts the drop on expiry.
    """

    def drop_ingress(self, client: ClientId) -> None: ...

    def teardown_sessions(self, client: ClientId) -> None: ...

    def release(self, client: ClientId) -> None: ...


class NullEnforcement:
    def drop_ingress(self, client: ClientId) -> None:
        pass

    def teardown_sessions(self, client: ClientId) -> None:
        pass

    def release(self, client: ClientId) -> None:
        pass


class Blocklist:
    def __init__(self) -> None:
        self._entries: dict[ClientId, BlockEntry] = {}
        self.history: list[BlockEntry] = []

    def __contains__(self, client: ClientId) -> bool:
        return client in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def entries(self) -> list[BlockEntry]:
        return sorted(self._entries.values(), key=lambda e: (e.blocked_at, e.client))

    def get(self, client: ClientId) -> BlockEntry | None:
        return self._entries.get(client)


def select_and_decide(
    store: ClientWindowStore,
    cfg: PolicyConfig,
    now: int,
    blocked: Iterable[ClientId] = (),
) -> list[BlockDecision]:
    """Check the top-ranked eligible client of every configured (layer, resource) pair.

    Clients already blocked, or already picked earlier in this pass, are
    skipped over so the next one in the ranking is examined instead.
    """
    excluded = set(blocked)
    decisions: list[BlockDecision] = []
    for layer, resource in CHECKED_PAIRS:
        threshold = cfg.threshold(layer, resource)
        if threshold is None:
            continue
        for client, total in rank(store, layer, resource):
            if client in excluded or client in cfg.whitelist:
                continue
            if total >= threshold:
                decisions.append(BlockDecision(client, now, layer, resource, total, threshold))
                excluded.add(client)
            break
    return decisions


def apply_block(bl: Blocklist, d: BlockDecision, cfg: PolicyConfig, enforcement: EnforcementHook) -> BlockEntry:
    if d.client in bl:
        raise AlreadyBlocked(str(d.client))
    entry = BlockEntry(d.client, d.at, d.at + cfg.blocking_ns, d)
    bl._entries[d.client] = entry
    bl.history.append(entry)
    log.info("block %s: %s %s %d >= %d", d.client, d.layer.label, d.resource.value, d.observed, d.threshold)
    enforcement.drop_ingress(d.client)
    enforcement.teardown_sessions(d.client)
    return entry


def expire_blocks(bl: Blocklist, now: int, enforcement: EnforcementHook | None = None) -> list[ClientId]:
    done = sorted(c for c, e in bl._entries.items() if e.expires_at <= now)
    for c in done:
        del bl._entries[c]
        if enforcement is not None:
            enforcement.release(c)
    return done


class DataHandler:
    """Glues window store, blocklist and enforcement together for one consumer."""

    def __init__(self, cfg: PolicyConfig, enforcement: EnforcementHook | None = None) -> None:
        self.cfg = cfg
        self.store = ClientWindowStore(cfg.whitelist)
        self.blocklist = Blocklist()
        self.enforcement = enforcement or NullEnforcement()

    def ingest(self, rec: PacketRecord) -> None:
        self.store.ingest(rec)

    def add_accept(self, client: ClientId, timestamp: int) -> None:
        self.store.add_accepts(client, timestamp)

    def step(self, now: int, active: bool, blocking_enabled: bool = True) -> tuple[list[ClientId], list[BlockEntry]]:
        unblocked = expire_blocks(self.blocklist, now, self.enforcement)
        self.store.evict_stale(now, self.cfg.window_ns)
        new_blocks: list[BlockEntry] = []
        if active and blocking_enabled:
            for d in select_and_decide(self.store, self.cfg, now, self.blocklist._entries):
                new_blocks.append(apply_block(self.blocklist, d, self.cfg, self.enforcement))
        return unblocked, new_blocks
