"""CSV tables and the binary record dump written next to them."""
from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Iterable, Sequence

from ..core import NS_PER_S, PacketRecord
from ..mitigator import BlockEntry
from .codec import encode_record

METRICS_COLUMNS = ("timestamp_s", "cpu", "mem", "connpool", "watchdog_state", "latency_ms_monitor")
BLOCKS_COLUMNS = ("t_block_s", "t_unblock_s", "client", "layer", "resource", "observed", "threshold")
QOS_COLUMNS = ("clients", "mitigation", "mean_latency_ms", "failure_rate", "requests", "failures", "activated", "blocks")
THRESHOLD_COLUMNS = ("threshold", "mean_latency_ms", "drop_rate", "requests", "drops", "blocks")


def _s(ns: int) -> str:
    return f"{ns / NS_PER_S:.6f}"


def _f(x: float | None, digits: int = 6) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.{digits}f}"


def _write(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> int:
    n = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(row)
            n += 1
    return n


def write_metrics_csv(path: str | Path, ticks) -> int:
    """One row per watchdog tick."""
    return _write(Path(path), METRICS_COLUMNS, (
        (_s(t.timestamp), _f(t.cpu), _f(t.memory), _f(t.connection_pool), t.state.value,
         _f(t.monitor_latency_ms, 3))
        for t in ticks
    ))


def write_blocks_csv(path: str | Path, blocks: Iterable[BlockEntry]) -> int:
    return _write(Path(path), BLOCKS_COLUMNS, (
        (_s(b.blocked_at), _s(b.expires_at), str(b.client), b.reason.layer.label,
         b.reason.resource.value, b.reason.observed, b.reason.threshold)
        for b in blocks
    ))


def write_records_bin(path: str | Path, records: Iterable[PacketRecord]) -> int:
    n = 0
    with open(path, "wb") as fh:
        for rec in records:
            fh.write(encode_record(rec))
            n += 1
    return n


def write_qos_csv(path: str | Path, rows) -> int:
    return _write(Path(path), QOS_COLUMNS, (
        (r.clients, "on" if r.mitigation else "off", _f(r.mean_latency_ms, 3), _f(r.failure_rate),
         r.requests, r.failures, int(r.activated), r.blocks)
        for r in rows
    ))


def write_threshold_csv(path: str | Path, rows) -> int:
    return _write(Path(path), THRESHOLD_COLUMNS, (
        ("inf" if r.threshold is None else r.threshold, _f(r.mean_latency_ms, 3), _f(r.drop_rate),
         r.requests, r.drops, r.blocks)
        for r in rows
    ))


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
