"""Client-count and threshold sweeps over closed-loop HTTP workloads."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from statistics import fmean
from typing import Sequence

from ..core import ClientId, Layer, PolicyConfig
from .model import CostModel, ScenarioConfig, WorkloadKind, WorkloadSpec, _default_costs
from .simulator import SimulationReport, run_scenario

# A light page: about 20 ms of one core at 1e6 instructions per second.
LIGHT_PAGE = ((1_000, 4_096), (1_500, 2_048), (5_000, 16_384), (12_500, 65_536))
# A static page dominated by application work, about 30 ms.
STATIC_PAGE = ((500, 4_096), (500, 2_048), (1_000, 16_384), (28_000, 65_536))


def _costs(page, sigma: float) -> CostModel:
    layers = dict(_default_costs())
    layers[WorkloadKind.BENIGN_HTTP] = page
    return CostModel(layers=layers, page_sigma=sigma)


def qos_base(seed: int = 1) -> ScenarioConfig:
    """Template for the client-count sweep; workloads are filled in per run."""
    return ScenarioConfig(
        name="qos", seed=seed, duration=30.0, num_cores=2, core_speed=1e6,
        core_switch_prob=0.05, costs=_costs(LIGHT_PAGE, 0.5),
    )


def availability_base(seed: int = 1) -> ScenarioConfig:
    """Template for the threshold sweep: one monitor and two saturating load clients."""
    monitor = WorkloadSpec(
        name="monitor", kind=WorkloadKind.BENIGN_HTTP, client=ClientId.parse("10.0.0.100"),
        role="monitor", period=0.1, keepalive=True, whitelisted=True,
        # Starting off the 10 ms grid keeps probes from phase-locking to the load.
        start=0.0537,
    )
    loads = tuple(
        WorkloadSpec(
            name=f"load{i}", kind=WorkloadKind.BENIGN_HTTP, client=ClientId.parse(f"10.0.1.{i}"),
            closed_loop=True, keepalive=True, think=0.0,
        )
        for i in (1, 2)
    )
    return ScenarioConfig(
        name="availability", seed=seed, duration=60.0, num_cores=2, core_speed=1e6,
        core_switch_prob=0.05, workloads=(monitor,) + loads, costs=_costs(STATIC_PAGE, 0.0),
    )


def qos_clients(base: ScenarioConfig, n: int, think: float = 0.03) -> ScenarioConfig:
    clients = tuple(
        WorkloadSpec(
            name=f"client{i:02d}", kind=WorkloadKind.BENIGN_HTTP,
            client=ClientId.parse(f"10.0.1.{i}"), closed_loop=True, keepalive=True,
            think=think, start=0.01 * i,
        )
        for i in range(1, n + 1)
    )
    return base.with_changes(workloads=clients, name=f"{base.name}-{n}")


@dataclass(frozen=True)
class QosRow:
    clients: int
    mitigation: bool
    mean_latency_ms: float
    failure_rate: float
    requests: int
    failures: int
    activated: bool
    blocks: int


@dataclass(frozen=True)
class ThresholdRow:
    threshold: int | None
    mean_latency_ms: float
    drop_rate: float
    requests: int
    drops: int
    blocks: int


def _settled(requests) -> list:
    # Requests still in flight when the run ends have no outcome yet.
    return [r for r in requests if r.status != "pending"]


def _latency_ms(requests) -> float:
    lat = [r.latency for r in requests if r.latency is not None]
    return fmean(lat) / 1e6 if lat else math.nan


def _activated(rep: SimulationReport) -> bool:
    return any(t.state.value == "active" for t in rep.ticks)


def run_qos_sweep(
    clients: Sequence[int],
    base: ScenarioConfig | None = None,
    policy: PolicyConfig | None = None,
    think: float = 0.03,
) -> list[QosRow]:
    base = base or qos_base()
    rows = []
    for n in clients:
        if n < 1:
            raise ValueError("client count must be >= 1")
        sc = qos_clients(base, n, think)
        for mitigation in (True, False):
            rep = run_scenario(sc, policy, mitigation=mitigation)
            reqs = _settled(rep.requests_for("benign"))
            failed = sum(1 for r in reqs if r.status != "ok")
            rows.append(QosRow(
                clients=n, mitigation=mitigation, mean_latency_ms=_latency_ms(reqs),
                failure_rate=failed / len(reqs) if reqs else 0.0, requests=len(reqs),
                failures=failed, activated=_activated(rep), blocks=len(rep.blocks),
            ))
    return rows


def run_threshold_sweep(
    thresholds: Sequence[int | None],
    base: ScenarioConfig | None = None,
    policy: PolicyConfig | None = None,
    layer: Layer = Layer.APPLICATION,
) -> list[ThresholdRow]:
    """One run per application-layer instruction threshold; ``None`` disables it."""
    finite = [t for t in thresholds if t is not None]
    if finite != sorted(finite) or (None in thresholds and thresholds[-1] is not None):
        raise ValueError("thresholds must be ascending, with None (no threshold) last")
    base = base or availability_base()
    cfg = base.policy(policy)
    rows = []
    for thr in thresholds:
        table = {k: v for k, v in cfg.instruction_thresholds.items() if k is not layer}
        if thr is not None:
            table[layer] = thr
        run_cfg = replace(cfg, instruction_thresholds=table)
        rep = run_scenario(base, run_cfg, mitigation=True)
        load = _settled(rep.requests_for("benign"))
        drops = sum(1 for r in load if r.status != "ok")
        rows.append(ThresholdRow(
            threshold=thr, mean_latency_ms=_latency_ms(rep.requests_for("monitor")),
            drop_rate=drops / len(load) if load else 0.0, requests=len(load), drops=drops,
            blocks=len(rep.blocks),
        ))
    return rows


DEFAULT_THRESHOLDS: tuple[int | None, ...] = tuple(range(200_000, 2_200_001, 200_000)) + (None,)
