"""Scenario, workload and cost-model descriptions for the simulator."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

from ..core import (
    ClientId,
    ConfigError,
    Layer,
    PolicyConfig,
    parse_kv,
    policy_from_mapping,
)


class InvalidScenario(ValueError):
    pass


class WorkloadKind(enum.Enum):
    BENIGN_HTTP = "benign_http"
    FRAGMENT_SMACK = "fragment_smack"
    RANGE_HEADER = "range_header"
    SLOWLORIS = "slowloris"


ROLES = ("benign", "attacker", "monitor")

# Highest layer each kind of packet reaches.
LAST_LAYER = {
    WorkloadKind.BENIGN_HTTP: Layer.APPLICATION,
    WorkloadKind.FRAGMENT_SMACK: Layer.NETWORK,
    WorkloadKind.RANGE_HEADER: Layer.APPLICATION,
    WorkloadKind.SLOWLORIS: Layer.TRANSPORT,
}


@dataclass(frozen=True)
class WorkloadSpec:
    """One client and what it does.

    ``period`` is the request interval of an open-loop HTTP client, or the
    spacing of attack episodes. ``burst`` bounds an attack episode (None runs
    it until ``stop``). ``rate`` is fragments, requests or connection
    attempts per second inside an episode.
    """

    name: str
    kind: WorkloadKind
    client: ClientId
    start: float = 0.0
    period: float = 1.0
    stop: float | None = None
    role: str = "benign"
    closed_loop: bool = False
    think: float = 0.0
    keepalive: bool = False
    fail_delay: float = 1.0
    rate: float = 1.0
    burst: float | None = None
    sockets: int = 0
    whitelisted: bool = False
    # Overrides the cost model's page spread for this client.
    page_sigma: float | None = None

    def validate(self) -> list[str]:
        problems = []
        if self.start < 0:
            problems.append(f"{self.name}: start must be >= 0")
        if not self.period > 0:
            problems.append(f"{self.name}: period must be > 0")
        if self.role not in ROLES:
            problems.append(f"{self.name}: role must be one of {ROLES}")
        if self.kind is not WorkloadKind.BENIGN_HTTP and not self.rate > 0:
            problems.append(f"{self.name}: rate must be > 0")
        if self.closed_loop and self.kind is not WorkloadKind.BENIGN_HTTP:
            problems.append(f"{self.name}: only HTTP clients can be closed-loop")
        if self.page_sigma is not None and self.page_sigma < 0:
            problems.append(f"{self.name}: page_sigma must be >= 0")
        if self.stop is not None and self.stop <= self.start:
            problems.append(f"{self.name}: stop must be after start")
        return problems


def _default_costs() -> dict[WorkloadKind, tuple[tuple[int, int], ...]]:
    # (instructions, MBM bytes) per layer: link, network, transport, application.
    return {
        WorkloadKind.BENIGN_HTTP: ((4_000, 16_384), (6_000, 8_192), (20_000, 65_536), (50_000, 262_144)),
        WorkloadKind.FRAGMENT_SMACK: ((3_000, 2_048), (200_000, 1_024), (0, 0), (0, 0)),
        WorkloadKind.RANGE_HEADER: (
            (4_000, 16_384), (6_000, 8_192), (320_000_000, 4_000_000), (400_000, 80_000_000)
        ),
        WorkloadKind.SLOWLORIS: ((3_000, 2_048), (5_000, 4_096), (30_000, 16_384), (0, 0)),
    }


@dataclass(frozen=True)
class CostModel:
    """Ground-truth cost per packet and the side effects each attack has.

    Magnitudes are set relative to the default thresholds: benign traffic
    stays under every threshold at benign rates, each attack's signature
    layer crosses its threshold at attack rates.
    """

    layers: Mapping[WorkloadKind, tuple[tuple[int, int], ...]] = field(default_factory=_default_costs)
    # Log-normal spread of per-request HTTP cost; 0 serves a static page.
    page_sigma: float = 0.0
    # Reassembly walks the fragment queue: extra network instructions per queued fragment.
    frag_per_queued: int = 150
    frag_queue_cap: int = 8_000
    frag_timeout: float = 30.0
    rh_retain_bytes: int = 16 * 1024 * 1024
    # How long a range-header response keeps its buffers while trickling out.
    rh_response_time: float = 120.0
    slowloris_keepalive: float = 10.0

    def cost(self, kind: WorkloadKind, layer: Layer) -> tuple[int, int]:
        return self.layers[kind][layer]


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "custom"
    seed: int = 1
    duration: float = 30.0
    num_cores: int = 4
    core_speed: float = 1e9
    memory_capacity: int = 4 * 1024**3
    baseline_memory: float = 0.15
    connection_pool_size: int = 512
    backlog_per_core: int = 1_000
    teardown_rate: float = 150.0
    core_switch_prob: float = 0.05
    keepalive_timeout: float = 5.0
    mitigation: bool = True
    workloads: tuple[WorkloadSpec, ...] = ()
    costs: CostModel = field(default_factory=CostModel)
    policy_overrides: Mapping[str, str] = field(default_factory=dict)

    def validate(self) -> list[str]:
        problems = []
        if not self.workloads:
            problems.append("scenario has no clients")
        seen: dict[ClientId, str] = {}
        names = set()
        for w in self.workloads:
            if w.name in names:
                problems.append(f"duplicate workload name {w.name!r}")
            names.add(w.name)
            if w.client in seen:
                problems.append(f"client {w.client} used by both {seen[w.client]!r} and {w.name!r}")
            seen[w.client] = w.name
            problems.extend(w.validate())
        if self.num_cores < 1:
            problems.append("num_cores must be >= 1")
        if not self.core_speed > 0:
            problems.append("core_speed must be > 0")
        if not self.duration > 0:
            problems.append("duration must be > 0")
        if not 0 <= self.baseline_memory < 1:
            problems.append("baseline_memory must be in [0, 1)")
        if self.connection_pool_size < 1:
            problems.append("connection_pool_size must be >= 1")
        if not 0 <= self.core_switch_prob <= 1:
            problems.append("core_switch_prob must be in [0, 1]")
        return problems

    def check(self) -> None:
        problems = self.validate()
        if problems:
            raise InvalidScenario("; ".join(problems))

    def policy(self, base: PolicyConfig | None = None) -> PolicyConfig:
        cfg = policy_from_mapping(self.policy_overrides, base)
        extra = frozenset(w.client for w in self.workloads if w.whitelisted)
        if extra:
            cfg = replace(cfg, whitelist=cfg.whitelist | extra)
        return cfg

    def with_changes(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)


def _bool(key: str, value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: not a boolean: {value!r}")


def _num(key: str, value: str, kind=float):
    try:
        number = float(value)
    except ValueError:
        raise ConfigError(f"{key}: not a number: {value!r}") from None
    if kind is int:
        if number != int(number):
            raise ConfigError(f"{key}: not an integer: {value!r}")
        return int(number)
    return number


_SCENARIO_FIELDS = {
    "name": str, "seed": int, "duration": float, "num_cores": int, "core_speed": float,
    "memory_capacity": int, "baseline_memory": float, "connection_pool_size": int,
    "backlog_per_core": int, "teardown_rate": float, "core_switch_prob": float,
    "keepalive_timeout": float, "mitigation": bool,
}
_WORKLOAD_FIELDS = {
    "kind": "kind", "ip": "ip", "start": float, "period": float, "stop": float, "role": str,
    "closed_loop": bool, "think": float, "keepalive": bool, "fail_delay": float,
    "rate": float, "burst": float, "sockets": int, "whitelisted": bool,
    "page_sigma": float,
}
_COST_FIELDS = {
    "page_sigma": float, "frag_per_queued": int, "frag_queue_cap": int, "frag_timeout": float,
    "rh_retain_bytes": int, "rh_response_time": float, "slowloris_keepalive": float,
}


def _convert(key: str, value: str, kind):
    if kind is str:
        return value
    if kind is bool:
        return _bool(key, value)
    return _num(key, value, kind)


def scenario_from_mapping(kv: Mapping[str, str]) -> ScenarioConfig:
    top: dict = {}
    policy: dict[str, str] = {}
    workloads: dict[str, dict] = {}
    cost_fields: dict = {}
    layer_costs = {k: [list(v) for v in vs] for k, vs in _default_costs().items()}
    for key, value in kv.items():
        if key in _SCENARIO_FIELDS:
            top[key] = _convert(key, value, _SCENARIO_FIELDS[key])
        elif key.startswith("policy."):
            policy[key[len("policy."):]] = value
        elif key.startswith("workload."):
            parts = key.split(".")
            if len(parts) != 3 or parts[2] not in _WORKLOAD_FIELDS:
                raise ConfigError(f"bad workload key {key!r}")
            spec = workloads.setdefault(parts[1], {})
            kind = _WORKLOAD_FIELDS[parts[2]]
            if kind == "kind":
                try:
                    spec["kind"] = WorkloadKind(value.lower())
                except ValueError:
                    raise ConfigError(f"{key}: unknown workload kind {value!r}") from None
            elif kind == "ip":
                try:
                    spec["client"] = ClientId.parse(value)
                except ValueError as exc:
                    raise ConfigError(f"{key}: {exc}") from None
            elif parts[2] in ("stop", "burst") and value.lower() in ("none", "off"):
                spec[parts[2]] = None
            else:
                spec[parts[2]] = _convert(key, value, kind)
        elif key.startswith("cost."):
            parts = key.split(".")
            if len(parts) == 2 and parts[1] in _COST_FIELDS:
                cost_fields[parts[1]] = _convert(key, value, _COST_FIELDS[parts[1]])
            elif len(parts) == 4 and parts[3] in ("instructions", "mbm"):
                try:
                    kind = WorkloadKind(parts[1])
                    layer = Layer.parse(parts[2])
                except ValueError as exc:
                    raise ConfigError(f"{key}: {exc}") from None
                layer_costs[kind][layer][0 if parts[3] == "instructions" else 1] = _num(key, value, int)
            else:
                raise ConfigError(f"bad cost key {key!r}")
        else:
            raise ConfigError(f"unknown scenario key {key!r}")
    specs = []
    for name, fields_ in workloads.items():
        if "kind" not in fields_ or "client" not in fields_:
            raise ConfigError(f"workload {name!r} needs kind and ip")
        specs.append(WorkloadSpec(name=name, **fields_))
    costs = CostModel(
        layers={k: tuple(tuple(v) for v in vs) for k, vs in layer_costs.items()},
        **cost_fields,
    )
    return ScenarioConfig(workloads=tuple(specs), costs=costs, policy_overrides=policy, **top)


def load_scenario(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    return scenario_from_mapping(parse_kv(path.read_text(), str(path)))
