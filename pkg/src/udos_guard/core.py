"""Domain types shared across the engine.

Everything here is an immutable value type. Counters are unsigned 64-bit
quantities; addition saturates instead of wrapping so that very large
per-layer sums (link-layer thresholds reach 1.5e12) can never wrap around
and silently reorder the client ranking.
"""
from __future__ import annotations

import enum
import ipaddress
from dataclasses import dataclass, field, fields, replace
from functools import total_ordering
from pathlib import Path
from typing import Iterable, Mapping

U64_MAX = (1 << 64) - 1
NS_PER_S = 1_000_000_000


def seconds_to_ns(seconds: float) -> int:
    return int(round(seconds * NS_PER_S))


class Layer(enum.IntEnum):
    """Network-stack layers in packet traversal order."""

    LINK = 0
    NETWORK = 1
    TRANSPORT = 2
    APPLICATION = 3

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, text: str) -> "Layer":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown layer {text!r}") from None


KERNEL_LAYERS = (Layer.LINK, Layer.NETWORK, Layer.TRANSPORT)


class Resource(enum.Enum):
    INSTRUCTIONS = "instructions"
    MBM_BYTES = "mbm_bytes"
    CONNECTIONS = "connections"

    @classmethod
    def parse(cls, text: str) -> "Resource":
        return cls(text.strip().lower())


def _saturating(value: int) -> int:
    return value if value <= U64_MAX else U64_MAX


@dataclass(frozen=True, slots=True)
class ResourceVector:
    """Per-layer consumption: retired instructions, memory traffic, new connections."""

    instructions: int = 0
    mbm_bytes: int = 0
    new_connections: int = 0

    def __post_init__(self) -> None:
        for name in ("instructions", "mbm_bytes", "new_connections"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise TypeError(f"{name} must be an int, got {type(value).__name__}")
            if value < 0 or value > U64_MAX:
                raise ValueError(f"{name}={value} outside unsigned 64-bit range")

    def __add__(self, other: "ResourceVector") -> "ResourceVector":
        if not isinstance(other, ResourceVector):
            return NotImplemented
        return ResourceVector(
            _saturating(self.instructions + other.instructions),
            _saturating(self.mbm_bytes + other.mbm_bytes),
            _saturating(self.new_connections + other.new_connections),
        )

    def __sub__(self, other: "ResourceVector") -> "ResourceVector":
        # Counter deltas; a negative component means the counters went backwards.
        if not isinstance(other, ResourceVector):
            return NotImplemented
        return ResourceVector(
            self.instructions - other.instructions,
            self.mbm_bytes - other.mbm_bytes,
            self.new_connections - other.new_connections,
        )

    def get(self, resource: Resource) -> int:
        if resource is Resource.INSTRUCTIONS:
            return self.instructions
        if resource is Resource.MBM_BYTES:
            return self.mbm_bytes
        return self.new_connections

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.instructions, self.mbm_bytes, self.new_connections)

    @property
    def is_zero(self) -> bool:
        return self.instructions == 0 and self.mbm_bytes == 0 and self.new_connections == 0


ZERO = ResourceVector()


def resource_vector_add(a: ResourceVector, b: ResourceVector) -> ResourceVector:
    return a + b


def vector_sum(vectors: Iterable[ResourceVector]) -> ResourceVector:
    total = ZERO
    for v in vectors:
        total = total + v
    return total


@total_ordering
@dataclass(frozen=True, slots=True, eq=False)
class ClientId:
    """A client identified by source IP address.

    IPv4-mapped IPv6 addresses are folded to plain IPv4 so the same host
    never shows up under two identities. Ordering is IPv4 before IPv6, then
    numeric; the ranking uses it to break ties.
    """

    ip: ipaddress.IPv4Address | ipaddress.IPv6Address

    def __post_init__(self) -> None:
        ip = self.ip
        if isinstance(ip, (str, int, bytes)):
            ip = ipaddress.ip_address(ip)
        if isinstance(ip, ipaddress.IPv6Address) and ip.ipv4_mapped is not None:
            ip = ip.ipv4_mapped
        if not isinstance(ip, (ipaddress.IPv4Address, ipaddress.IPv6Address)):
            raise TypeError(f"not an IP address: {ip!r}")
        object.__setattr__(self, "ip", ip)

    @classmethod
    def parse(cls, text: str) -> "ClientId":
        return cls(ipaddress.ip_address(text.strip()))

    @property
    def version(self) -> int:
        return self.ip.version

    def _key(self) -> tuple[int, int]:
        return (self.ip.version, int(self.ip))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ClientId):
            return NotImplemented
        return self._key() == other._key()

    def __lt__(self, other: "ClientId") -> bool:
        if not isinstance(other, ClientId):
            return NotImplemented
        return self._key() < other._key()

    def __hash__(self) -> int:
        return hash(self._key())

    def __str__(self) -> str:
        return str(self.ip)

    def __repr__(self) -> str:
        return f"ClientId({str(self.ip)!r})"


def client(text: str) -> ClientId:
    return ClientId.parse(text)


@dataclass(frozen=True)
class PacketRecord:
    """The finalized, per-layer attributed profile of one packet."""

    timestamp: int
    cpu_id: int
    client: ClientId
    usage: Mapping[Layer, ResourceVector]
    program_id: int = 0
    incomplete: bool = False

    def __post_init__(self) -> None:
        missing = [layer.label for layer in Layer if layer not in self.usage]
        if missing:
            raise ValueError(f"usage missing layers: {', '.join(missing)}")
        if self.timestamp < 0 or self.cpu_id < 0 or self.program_id < 0:
            raise ValueError("timestamp, cpu_id and program_id must be non-negative")
        object.__setattr__(self, "usage", {layer: self.usage[layer] for layer in Layer})

    def total(self) -> ResourceVector:
        return vector_sum(self.usage.values())


@dataclass(frozen=True)
class SystemFractions:
    cpu: float
    memory: float
    connection_pool: float

    def items(self) -> list[tuple[str, float]]:
        return [(f.name, getattr(self, f.name)) for f in fields(self)]


SYSTEM_RESOURCES = ("cpu", "memory", "connection_pool")


def _default_instr() -> dict[Layer, int]:
    return {
        Layer.APPLICATION: 300_000,
        Layer.TRANSPORT: 45_000_000_000,
        Layer.NETWORK: 1_000_000_000,
        Layer.LINK: 80_000_000_000,
    }


def _default_mbm() -> dict[Layer, int]:
    return {
        Layer.APPLICATION: 1_000_000_000,
        Layer.TRANSPORT: 50_000_000_000,
        Layer.NETWORK: 500_000_000,
        Layer.LINK: 1_500_000_000_000,
    }


@dataclass(frozen=True)
class PolicyConfig:
    """Administrator policy. Defaults are the evaluation configuration.

    A layer missing from ``instruction_thresholds`` or ``mbm_thresholds`` (or
    ``connection_threshold`` set to None) means that pair is never checked.
    """

    blocking_time: float = 5.0
    window_time: float = 3.0
    watchdog_interval: float = 0.1
    ring_buffer_bytes_per_core: int = 16 * 1024 * 1024
    enable_thresholds: SystemFractions = field(
        default_factory=lambda: SystemFractions(0.75, 0.75, 0.75)
    )
    disable_thresholds: SystemFractions = field(
        default_factory=lambda: SystemFractions(0.35, 0.50, 0.35)
    )
    instruction_thresholds: Mapping[Layer, int] = field(default_factory=_default_instr)
    mbm_thresholds: Mapping[Layer, int] = field(default_factory=_default_mbm)
    connection_threshold: int | None = 6
    whitelist: frozenset[ClientId] = frozenset()
    # Force-finalize packets stuck in flight this long; None means 2 x window_time.
    incomplete_expiry: float | None = None

    @property
    def blocking_ns(self) -> int:
        return seconds_to_ns(self.blocking_time)

    @property
    def window_ns(self) -> int:
        return seconds_to_ns(self.window_time)

    @property
    def interval_ns(self) -> int:
        return seconds_to_ns(self.watchdog_interval)

    @property
    def incomplete_expiry_ns(self) -> int:
        expiry = self.incomplete_expiry
        return seconds_to_ns(2 * self.window_time if expiry is None else expiry)

    def threshold(self, layer: Layer, resource: Resource) -> int | None:
        if resource is Resource.INSTRUCTIONS:
            return self.instruction_thresholds.get(layer)
        if resource is Resource.MBM_BYTES:
            return self.mbm_thresholds.get(layer)
        return self.connection_threshold

    def with_changes(self, **changes) -> "PolicyConfig":
        return replace(self, **changes)


def validate_policy(cfg: PolicyConfig) -> list[str]:
    """Return every invariant violation; an empty list means the policy is usable."""
    problems: list[str] = []
    for name in ("blocking_time", "window_time", "watchdog_interval"):
        if not getattr(cfg, name) > 0:
            problems.append(f"{name} must be positive")
    if cfg.ring_buffer_bytes_per_core <= 0:
        problems.append("ring_buffer_bytes_per_core must be positive")
    for res in SYSTEM_RESOURCES:
        enable = getattr(cfg.enable_thresholds, res)
        disable = getattr(cfg.disable_thresholds, res)
        if not 0 < enable <= 1:
            problems.append(f"enable.{res} must be in (0, 1]")
        if not 0 < disable <= 1:
            problems.append(f"disable.{res} must be in (0, 1]")
        if not disable < enable:
            problems.append(f"{res} hysteresis gap: disable {disable} must be below enable {enable}")
    for prefix, table in (("instr_threshold", cfg.instruction_thresholds),
                          ("mbm_threshold", cfg.mbm_thresholds)):
        for layer, value in table.items():
            if value <= 0:
                problems.append(f"{prefix}.{layer.label} must be positive")
    if cfg.connection_threshold is not None and cfg.connection_threshold <= 0:
        problems.append("connection_threshold must be positive")
    if cfg.incomplete_expiry is not None and cfg.incomplete_expiry <= 0:
        problems.append("incomplete_expiry must be positive")
    return problems


class ConfigError(ValueError):
    """Raised for unreadable or ill-typed key/value configuration."""


def parse_kv(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment. Later keys win."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        out[key.strip()] = value.strip()
    return out


def _parse_float(key: str, value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{key}: not a number: {value!r}") from None


def _parse_count(key: str, value: str) -> int | None:
    if value.lower() in ("off", "none"):
        return None
    try:
        number = float(value) if any(c in value for c in ".eE") else int(value)
    except ValueError:
        raise ConfigError(f"{key}: not a count: {value!r}") from None
    if number != int(number):
        raise ConfigError(f"{key}: not an integer: {value!r}")
    return int(number)


_SCALAR_KEYS = {"blocking_time", "window_time", "watchdog_interval"}


def policy_from_mapping(kv: Mapping[str, str], base: PolicyConfig | None = None) -> PolicyConfig:
    base = base or PolicyConfig()
    changes: dict = {}
    enable = dict(base.enable_thresholds.items())
    disable = dict(base.disable_thresholds.items())
    instr = dict(base.instruction_thresholds)
    mbm = dict(base.mbm_thresholds)
    for key, value in kv.items():
        if key in _SCALAR_KEYS:
            changes[key] = _parse_float(key, value)
        elif key == "ring_buffer_bytes_per_core":
            changes[key] = _parse_count(key, value)
        elif key == "incomplete_expiry":
            changes[key] = None if value.lower() in ("none", "off") else _parse_float(key, value)
        elif key == "connection_threshold":
            changes[key] = _parse_count(key, value)
        elif key == "whitelist":
            items = [s for s in value.replace(",", " ").split() if s]
            try:
                changes[key] = frozenset(ClientId.parse(s) for s in items)
            except ValueError as exc:
                raise ConfigError(f"whitelist: {exc}") from None
        elif key.startswith(("enable.", "disable.")):
            kind, _, res = key.partition(".")
            if res not in SYSTEM_RESOURCES:
                raise ConfigError(f"unknown system resource in {key!r}")
            (enable if kind == "enable" else disable)[res] = _parse_float(key, value)
        elif key.startswith(("instr_threshold.", "mbm_threshold.")):
            kind, _, layer_name = key.partition(".")
            try:
                layer = Layer.parse(layer_name)
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from None
            table = instr if kind == "instr_threshold" else mbm
            count = _parse_count(key, value)
            if count is None:
                table.pop(layer, None)
            else:
                table[layer] = count
        else:
            raise ConfigError(f"unknown policy key {key!r}")
    return replace(
        base,
        enable_thresholds=SystemFractions(**enable),
        disable_thresholds=SystemFractions(**disable),
        instruction_thresholds=instr,
        mbm_thresholds=mbm,
        **changes,
    )


def load_policy(path: str | Path) -> PolicyConfig:
    path = Path(path)
    return policy_from_mapping(parse_kv(path.read_text(), str(path)))


def dump_policy(cfg: PolicyConfig) -> str:
    lines = [
        f"blocking_time = {cfg.blocking_time!r}",
        f"window_time = {cfg.window_time!r}",
        f"watchdog_interval = {cfg.watchdog_interval!r}",
        f"ring_buffer_bytes_per_core = {cfg.ring_buffer_bytes_per_core}",
    ]
    if cfg.incomplete_expiry is not None:
        lines.append(f"incomplete_expiry = {cfg.incomplete_expiry!r}")
    for res in SYSTEM_RESOURCES:
        lines.append(f"enable.{res} = {getattr(cfg.enable_thresholds, res)!r}")
        lines.append(f"disable.{res} = {getattr(cfg.disable_thresholds, res)!r}")
    for prefix, table in (("instr_threshold", cfg.instruction_thresholds),
                          ("mbm_threshold", cfg.mbm_thresholds)):
        for layer in reversed(Layer):
            value = table.get(layer)
            lines.append(f"{prefix}.{layer.label} = {'off' if value is None else value}")
    ct = cfg.connection_threshold
    lines.append(f"connection_threshold = {'off' if ct is None else ct}")
    if cfg.whitelist:
        lines.append("whitelist = " + ", ".join(str(c) for c in sorted(cfg.whitelist)))
    return "\n".join(lines) + "\n"
