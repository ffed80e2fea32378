"""JSON-lines traces: one tagged object per line.

A trace captures everything the engine consumed during a run (probe events,
packet completions and watchdog samples, in order) behind a header that
names the policy and core count, so replaying it through a fresh engine
reproduces the original blocking decisions.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator

from ..core import (
    ClientId,
    Layer,
    PacketRecord,
    PolicyConfig,
    ResourceVector,
    dump_policy,
    parse_kv,
    policy_from_mapping,
)
from ..engine import Engine
from ..mitigator import BlockEntry
from ..profiler import ProbeEvent, ProbeKind
from ..watchdog import SystemMetrics

FORMAT_VERSION = 1


class ParseError(ValueError):
    def __init__(self, line: int, reason: str) -> None:
        super().__init__(f"line {line}: {reason}")
        self.line = line
        self.reason = reason


class UnknownType(ParseError):
    pass


@dataclass(frozen=True)
class TraceHeader:
    num_cores: int
    policy: PolicyConfig
    blocking_enabled: bool = True
    scenario: str = ""


@dataclass(frozen=True)
class Finalize:
    packet_id: object
    timestamp: int
    last_layer: Layer = Layer.APPLICATION


TraceItem = TraceHeader | ProbeEvent | Finalize | SystemMetrics | PacketRecord


def _vec(v: ResourceVector) -> list[int]:
    return [v.instructions, v.mbm_bytes, v.new_connections]


def to_json(item: TraceItem) -> dict:
    if isinstance(item, ProbeEvent):
        out = {"type": "probe", "kind": item.kind.value, "t": item.timestamp, "cpu": item.cpu_id}
        if item.packet_id is not None:
            out["packet"] = item.packet_id
        if item.layer is not None:
            out["layer"] = item.layer.label
        if item.kind is not ProbeKind.CONN_ACCEPT:
            out["counters"] = _vec(item.counters)
        if item.to_cpu is not None:
            out["to_cpu"] = item.to_cpu
        if item.to_counters is not None:
            out["to_counters"] = _vec(item.to_counters)
        if item.client is not None:
            out["client"] = str(item.client)
        if item.program_id:
            out["program_id"] = item.program_id
        return out
    if isinstance(item, Finalize):
        return {"type": "finalize", "packet": item.packet_id, "t": item.timestamp,
                "last_layer": item.last_layer.label}
    if isinstance(item, SystemMetrics):
        return {"type": "tick", "t": item.timestamp, "cpu": item.cpu_usage,
                "mem": item.memory_usage, "conn": item.connection_pool_usage}
    if isinstance(item, PacketRecord):
        return {
            "type": "record", "t": item.timestamp, "cpu": item.cpu_id, "client": str(item.client),
            "usage": {layer.label: _vec(v) for layer, v in item.usage.items()},
            "program_id": item.program_id, "incomplete": item.incomplete,
        }
    if isinstance(item, TraceHeader):
        return {"type": "header", "version": FORMAT_VERSION, "num_cores": item.num_cores,
                "blocking": item.blocking_enabled, "scenario": item.scenario,
                "policy": dump_policy(item.policy)}
    raise TypeError(f"cannot serialize {type(item).__name__}")


def _int(obj: dict, key: str, default=None) -> int:
    value = obj.get(key, default)
    if not isinstance(value, int) or isinstance(value, bool):
        raise ValueError(f"{key!r} must be an integer, got {value!r}")
    return value


def _rv(value) -> ResourceVector:
    if not isinstance(value, list) or len(value) != 3:
        raise ValueError(f"counter vector must be [instructions, mbm, connections], got {value!r}")
    return ResourceVector(*value)


def _client(value) -> ClientId | None:
    return None if value is None else ClientId.parse(value)


def from_json(obj: dict, line: int = 0) -> TraceItem:
    if not isinstance(obj, dict):
        raise ParseError(line, "expected a JSON object")
    kind = obj.get("type")
    try:
        if kind == "probe":
            return ProbeEvent(
                kind=ProbeKind(obj["kind"]),
                timestamp=_int(obj, "t"),
                cpu_id=_int(obj, "cpu"),
                packet_id=obj.get("packet"),
                layer=Layer.parse(obj["layer"]) if "layer" in obj else None,
                counters=_rv(obj["counters"]) if "counters" in obj else ResourceVector(),
                to_cpu=obj.get("to_cpu"),
                to_counters=_rv(obj["to_counters"]) if "to_counters" in obj else None,
                client=_client(obj.get("client")),
                program_id=_int(obj, "program_id", 0),
            )
        if kind == "finalize":
            return Finalize(obj["packet"], _int(obj, "t"), Layer.parse(obj.get("last_layer", "application")))
        if kind == "tick":
            return SystemMetrics(float(obj["cpu"]), float(obj["mem"]), float(obj["conn"]), _int(obj, "t"))
        if kind == "record":
            usage = {Layer.parse(k): _rv(v) for k, v in obj["usage"].items()}
            return PacketRecord(
                timestamp=_int(obj, "t"), cpu_id=_int(obj, "cpu"), client=ClientId.parse(obj["client"]),
                usage=usage, program_id=_int(obj, "program_id", 0),
                incomplete=bool(obj.get("incomplete", False)),
            )
        if kind == "header":
            return TraceHeader(
                num_cores=_int(obj, "num_cores"),
                policy=policy_from_mapping(parse_kv(obj["policy"], "header")),
                blocking_enabled=bool(obj.get("blocking", True)),
                scenario=str(obj.get("scenario", "")),
            )
    except KeyError as exc:
        raise ParseError(line, f"missing field {exc.args[0]!r}") from None
    except (ValueError, TypeError) as exc:
        raise ParseError(line, str(exc)) from None
    raise UnknownType(line, f"unknown record type {kind!r}")


def iter_trace(lines: Iterable[str]) -> Iterator[TraceItem]:
    for lineno, text in enumerate(lines, start=1):
        if not text.strip():
            continue
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(lineno, exc.msg) from None
        yield from_json(obj, lineno)


def read_trace_jsonl(path: str | Path) -> Iterator[TraceItem]:
    """Stream the items of a trace file without loading it whole."""
    with open(path, encoding="utf-8") as fh:
        yield from iter_trace(fh)


def write_trace(fh: IO[str], items: Iterable[TraceItem]) -> int:
    n = 0
    for item in items:
        fh.write(json.dumps(to_json(item), separators=(",", ":")))
        fh.write("\n")
        n += 1
    return n


def write_trace_jsonl(path: str | Path, items: Iterable[TraceItem]) -> int:
    with open(path, "w", encoding="utf-8") as fh:
        return write_trace(fh, items)


def engine_trace_items(header: TraceHeader, raw: Iterable[tuple[str, object]]) -> Iterator[TraceItem]:
    """Turn an engine's trace callback log into trace items."""
    yield header
    for kind, obj in raw:
        if kind == "finalize":
            yield Finalize(*obj)
        else:
            yield obj


@dataclass
class ReplayResult:
    engine: Engine
    blocks: list[BlockEntry]
    ticks: int


def replay_trace(
    items: Iterable[TraceItem],
    policy: PolicyConfig | None = None,
    num_cores: int | None = None,
    blocking_enabled: bool | None = None,
) -> ReplayResult:
    """Feed a trace through the profiler and mitigator, no simulator involved.

    Arguments override what the trace header says; a trace without a header
    needs at least ``num_cores``.
    """
    engine: Engine | None = None
    ticks = 0

    def make(header: TraceHeader | None) -> Engine:
        cfg = policy or (header.policy if header else PolicyConfig())
        cores = num_cores or (header.num_cores if header else None)
        if cores is None:
            raise ValueError("trace has no header; num_cores is required")
        blocking = blocking_enabled
        if blocking is None:
            blocking = header.blocking_enabled if header else True
        return Engine(cfg, cores, blocking_enabled=blocking)

    for item in items:
        if isinstance(item, TraceHeader):
            if engine is None:
                engine = make(item)
            continue
        if engine is None:
            engine = make(None)
        if isinstance(item, ProbeEvent):
            engine.feed(item)
        elif isinstance(item, Finalize):
            engine.finalize(item.packet_id, item.timestamp, item.last_layer)
        elif isinstance(item, SystemMetrics):
            engine.on_tick(item)
            ticks += 1
        elif isinstance(item, PacketRecord):
            engine.push(item)
    if engine is None:
        engine = make(TraceHeader(num_cores or 1, policy or PolicyConfig()))
    return ReplayResult(engine, list(engine.blocklist.history), ticks)
