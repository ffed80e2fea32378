"""Built-in scenarios, written in the same key/value format as scenario files."""
from __future__ import annotations

from ..core import parse_kv
from .model import ScenarioConfig, scenario_from_mapping

FRAGMENTSMACK = """
name = fragmentsmack
duration = 30
num_cores = 2
core_speed = 1e9

workload.benign.kind = benign_http
workload.benign.ip = 10.0.0.2
workload.benign.start = 6
workload.benign.period = 1

workload.monitor.kind = benign_http
workload.monitor.ip = 10.0.0.100
workload.monitor.role = monitor
workload.monitor.start = 0
workload.monitor.period = 0.5
workload.monitor.keepalive = true
workload.monitor.whitelisted = true

workload.attacker.kind = fragment_smack
workload.attacker.ip = 10.0.0.66
workload.attacker.role = attacker
workload.attacker.start = 15
workload.attacker.rate = 1500
"""

RANGE_HEADER = """
name = range-header
duration = 30
num_cores = 4
core_speed = 1e9
cost.rh_retain_bytes = 33554432
policy.blocking_time = 10

workload.benign.kind = benign_http
workload.benign.ip = 10.0.0.2
workload.benign.start = 5.5
workload.benign.period = 1

workload.monitor.kind = benign_http
workload.monitor.ip = 10.0.0.100
workload.monitor.role = monitor
workload.monitor.period = 0.5
workload.monitor.keepalive = true
workload.monitor.whitelisted = true

workload.attacker.kind = range_header
workload.attacker.ip = 10.0.0.66
workload.attacker.role = attacker
workload.attacker.start = 8.5
workload.attacker.period = 4.5
workload.attacker.burst = 3
workload.attacker.rate = 10
"""

SLOWLORIS = """
name = slowloris
# Long enough for the benign client to reconnect after the second teardown.
duration = 32
num_cores = 4
core_speed = 1e9
connection_pool_size = 512

workload.benign.kind = benign_http
workload.benign.ip = 10.0.0.2
workload.benign.start = 6
workload.benign.period = 1

workload.monitor.kind = benign_http
workload.monitor.ip = 10.0.0.100
workload.monitor.role = monitor
workload.monitor.period = 0.5
workload.monitor.keepalive = true
workload.monitor.whitelisted = true

workload.attacker.kind = slowloris
workload.attacker.ip = 10.0.0.66
workload.attacker.role = attacker
workload.attacker.start = 10
workload.attacker.period = 16
workload.attacker.burst = 1
workload.attacker.rate = 1000
workload.attacker.sockets = 700
"""

QUIESCENT = """
name = quiescent
duration = 10
num_cores = 2

workload.benign.kind = benign_http
workload.benign.ip = 10.0.0.2
workload.benign.period = 1
"""

PRESETS = {
    "fragmentsmack": FRAGMENTSMACK,
    "range-header": RANGE_HEADER,
    "slowloris": SLOWLORIS,
    "quiescent": QUIESCENT,
}


def preset_text(name: str) -> str:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; known: {', '.join(sorted(PRESETS))}") from None


def preset(name: str, seed: int | None = None) -> ScenarioConfig:
    sc = scenario_from_mapping(parse_kv(preset_text(name), name))
    return sc if seed is None else sc.with_changes(seed=seed)
