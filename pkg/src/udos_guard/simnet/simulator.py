"""Single-threaded discrete-event simulation of a server under attack.

The server runs a global FIFO run queue over ``num_cores`` identical cores;
a packet occupies one core for ``instructions / core_speed`` seconds and
walks its layers in order. When a packet finishes, its probe events are
generated and fed to the engine as one contiguous batch, so per-core counter
snapshots never interleave between packets. Core switches are injected as
accounting migrations: the remainder of a layer is charged to another core's
counters.
"""
from __future__ import annotations

import heapq
import itertools
import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from ..core import (
    NS_PER_S,
    ClientId,
    Layer,
    PacketRecord,
    PolicyConfig,
    ResourceVector,
    seconds_to_ns,
)
from ..engine import Engine
from ..mitigator import BlockEntry
from ..profiler import ProbeEvent, ProbeKind
from ..watchdog import Mode, SystemMetrics
from .model import LAST_LAYER, ScenarioConfig, WorkloadKind, WorkloadSpec

HTTPD_PROGRAM_ID = 80


class CounterBank:
    """Cumulative per-core instruction and memory-traffic counters."""

    def __init__(self, num_cores: int) -> None:
        self.instr = [0] * num_cores
        self.mbm = [0] * num_cores

    def snapshot(self, cpu: int) -> ResourceVector:
        return ResourceVector(self.instr[cpu], self.mbm[cpu], 0)

    def advance(self, cpu: int, instr: int, mbm: int) -> None:
        self.instr[cpu] += instr
        self.mbm[cpu] += mbm


@dataclass
class Job:
    packet_id: int
    client: ClientId
    workload: int
    kind: WorkloadKind
    costs: tuple[tuple[int, int], ...]
    arrival: int
    last_layer: Layer
    request: "Request | None" = None
    accept_in_request: bool = False
    on_done: Callable[["Job"], None] | None = None
    start: int = 0
    core: int = 0

    @property
    def total_instructions(self) -> int:
        return sum(self.costs[l][0] for l in Layer if l <= self.last_layer)

    def usage(self) -> dict[Layer, ResourceVector]:
        out = {}
        for layer in Layer:
            if layer <= self.last_layer:
                i, m = self.costs[layer]
                out[layer] = ResourceVector(i, m, 0)
            else:
                out[layer] = ResourceVector()
        if self.accept_in_request:
            out[Layer.APPLICATION] = out[Layer.APPLICATION] + ResourceVector(0, 0, 1)
        return out


@dataclass
class Request:
    workload: str
    role: str
    client: ClientId
    sent: int
    status: str = "pending"
    done: int | None = None
    conn: int | None = None

    @property
    def latency(self) -> int | None:
        return None if self.done is None or self.status != "ok" else self.done - self.sent


@dataclass
class Connection:
    conn_id: int
    client: ClientId
    workload: int
    opened: int
    retained: int = 0
    keepalive: bool = False
    busy: bool = False
    alive: bool = True


@dataclass
class TickRow:
    timestamp: int
    cpu: float
    memory: float
    connection_pool: float
    state: Mode
    monitor_latency_ms: float | None
    active_memory: int


@dataclass
class SimulationReport:
    scenario: ScenarioConfig
    policy: PolicyConfig
    mitigation: bool
    ticks: list[TickRow]
    blocks: list[BlockEntry]
    records: list[PacketRecord]
    requests: list[Request]
    connections: dict[str, list[int]]
    injected: dict[str, dict[Layer, ResourceVector]]
    ingress_drops: list[tuple[int, str]]
    admitted: list[tuple[int, str]]
    overload_drops: int
    ring_drops: int
    trace: list[tuple[str, object]] | None = None

    def workload(self, name: str) -> WorkloadSpec:
        return next(w for w in self.scenario.workloads if w.name == name)

    def names(self, role: str) -> list[str]:
        return [w.name for w in self.scenario.workloads if w.role == role]

    def block_intervals(self, client: ClientId | None = None) -> list[tuple[int, int]]:
        return [(b.blocked_at, b.expires_at) for b in self.blocks if client is None or b.client == client]

    def requests_for(self, *roles: str) -> list[Request]:
        return [r for r in self.requests if r.role in roles]

    def peak_memory_fraction(self) -> float:
        return max((t.memory for t in self.ticks), default=0.0)

    def profiled_usage(self) -> dict[ClientId, dict[Layer, ResourceVector]]:
        out: dict[ClientId, dict[Layer, ResourceVector]] = {}
        for rec in self.records:
            per = out.setdefault(rec.client, {l: ResourceVector() for l in Layer})
            for layer, used in rec.usage.items():
                per[layer] = per[layer] + used
        return out


def generate_probe_events(
    job: Job,
    start: int,
    cpu_id: int,
    counters: CounterBank,
    core_speed: float,
    switch_plan: Mapping[Layer, Sequence[tuple[float, int]]] | None = None,
) -> tuple[list[ProbeEvent], int]:
    """Entry/exit pairs in traversal order for one packet, advancing the counters.

    ``switch_plan`` maps a layer to ascending (fraction of that layer's work,
    destination core) cut points. Returns the events and the core the packet
    finished on.
    """
    events: list[ProbeEvent] = []
    t = start
    cpu = cpu_id
    plan = switch_plan or {}
    for layer in Layer:
        if layer > job.last_layer:
            break
        instr, mbm = job.costs[layer]
        dur = int(round(instr * NS_PER_S / core_speed))
        events.append(ProbeEvent(
            ProbeKind.LAYER_ENTRY, t, cpu, job.packet_id, layer, counters.snapshot(cpu),
            client=job.client,
            program_id=HTTPD_PROGRAM_ID if layer is Layer.APPLICATION else 0,
        ))
        done_i = done_m = 0
        for frac, to_cpu in plan.get(layer, ()):
            cut_i, cut_m = int(instr * frac), int(mbm * frac)
            counters.advance(cpu, cut_i - done_i, cut_m - done_m)
            done_i, done_m = cut_i, cut_m
            events.append(ProbeEvent(
                ProbeKind.CORE_SWITCH, t + int(dur * frac), cpu, job.packet_id, layer,
                counters.snapshot(cpu), to_cpu=to_cpu, to_counters=counters.snapshot(to_cpu),
            ))
            cpu = to_cpu
        if job.accept_in_request and layer is Layer.APPLICATION:
            events.append(ProbeEvent(
                ProbeKind.CONN_ACCEPT, t, cpu, job.packet_id, client=job.client,
            ))
        counters.advance(cpu, instr - done_i, mbm - done_m)
        t += dur
        events.append(ProbeEvent(
            ProbeKind.LAYER_EXIT, t, cpu, job.packet_id, layer, counters.snapshot(cpu),
        ))
    return events, cpu


class ServerModel:
    """Cores, run queue, connection pool and memory of the simulated server."""

    def __init__(self, sc: ScenarioConfig) -> None:
        self.num_cores = sc.num_cores
        self.core_speed = sc.core_speed
        self.memory_capacity = sc.memory_capacity
        self.baseline_memory = int(sc.baseline_memory * sc.memory_capacity)
        self.pool_size = sc.connection_pool_size
        self.backlog_limit = sc.backlog_per_core * sc.num_cores
        self.cores: list[Job | None] = [None] * sc.num_cores
        self.busy_since = [0] * sc.num_cores
        self.busy_total = [0] * sc.num_cores
        self.counters = CounterBank(sc.num_cores)
        self.queue: deque[Job] = deque()
        self.conns: dict[int, Connection] = {}
        self.by_client: dict[ClientId, set[int]] = {}
        self.retained = 0
        self._last_busy = 0
        self._last_sample = 0

    @property
    def established(self) -> int:
        return len(self.conns)

    @property
    def active_memory(self) -> int:
        return self.baseline_memory + self.retained

    def busy_until(self, now: int) -> int:
        total = sum(self.busy_total)
        for i, job in enumerate(self.cores):
            if job is not None:
                total += now - self.busy_since[i]
        return total

    def free_core(self) -> int | None:
        for i, job in enumerate(self.cores):
            if job is None:
                return i
        return None

    def open_conn(self, conn_id: int, client: ClientId, workload: int, now: int, keepalive: bool) -> Connection | None:
        if len(self.conns) >= self.pool_size:
            return None
        conn = Connection(conn_id, client, workload, now, keepalive=keepalive)
        self.conns[conn_id] = conn
        self.by_client.setdefault(client, set()).add(conn_id)
        return conn

    def close_conn(self, conn_id: int) -> Connection | None:
        conn = self.conns.pop(conn_id, None)
        if conn is None:
            return None
        conn.alive = False
        self.retained -= conn.retained
        conn.retained = 0
        ids = self.by_client.get(conn.client)
        if ids is not None:
            ids.discard(conn_id)
        return conn

    def client_conns(self, client: ClientId) -> int:
        return len(self.by_client.get(client, ()))


def compute_system_metrics(server: ServerModel, now: int) -> SystemMetrics:
    """Busy-core fraction since the previous sample, memory and pool occupancy."""
    busy = server.busy_until(now)
    elapsed = now - server._last_sample
    cpu = 0.0 if elapsed <= 0 else (busy - server._last_busy) / (server.num_cores * elapsed)
    server._last_busy = busy
    server._last_sample = now
    mem = server.active_memory / server.memory_capacity
    pool = server.established / server.pool_size
    return SystemMetrics(min(max(cpu, 0.0), 1.0), min(mem, 1.0), min(pool, 1.0), now)


class Simulation:
    def __init__(
        self,
        scenario: ScenarioConfig,
        policy: PolicyConfig | None = None,
        mitigation: bool | None = None,
        trace: bool = False,
    ) -> None:
        scenario.check()
        self.sc = scenario
        self.cfg = scenario.policy(policy)
        self.mitigation = scenario.mitigation if mitigation is None else mitigation
        self.server = ServerModel(scenario)
        self.trace: list[tuple[str, object]] | None = [] if trace else None
        self.engine = Engine(
            self.cfg, scenario.num_cores, enforcement=self,
            blocking_enabled=self.mitigation,
            on_trace=self._trace if trace else None,
        )
        self.now = 0
        self.end = seconds_to_ns(scenario.duration)
        self._heap: list = []
        self._seq = itertools.count()
        self._pids = itertools.count(1)
        self._conn_ids = itertools.count(1)
        self._switch_rng = random.Random(f"{scenario.seed}:switch")
        self.blocked: set[ClientId] = set()
        self.requests: list[Request] = []
        self.ticks: list[TickRow] = []
        self.conn_series: dict[str, list[int]] = {w.name: [] for w in scenario.workloads}
        self.injected: dict[str, dict[Layer, ResourceVector]] = {
            w.name: {l: ResourceVector() for l in Layer} for w in scenario.workloads
        }
        self.ingress_drops: list[tuple[int, str]] = []
        self.admitted: list[tuple[int, str]] = []
        self.overload_drops = 0
        self._frag_queues: dict[int, deque[int]] = {}
        self._ka_conn: dict[int, Connection | None] = {}
        self._ka_gen: dict[int, int] = {}
        self._monitor_lat: list[int] = []
        self._rngs = [random.Random(f"{scenario.seed}:{w.name}") for w in scenario.workloads]

    # -- scheduling -------------------------------------------------------

    def _at(self, t: int, fn: Callable, *args) -> None:
        heapq.heappush(self._heap, (t, next(self._seq), fn, args))

    def _trace(self, kind: str, obj: object) -> None:
        self.trace.append((kind, obj))

    def run(self) -> SimulationReport:
        interval = self.cfg.interval_ns
        for k in range(1, self.end // interval + 1):
            self._at(k * interval, self._tick)
        for idx, w in enumerate(self.sc.workloads):
            self._at(seconds_to_ns(w.start), self._start_workload, idx)
        while self._heap:
            t, _, fn, args = heapq.heappop(self._heap)
            if t > self.end:
                break
            self.now = t
            fn(*args)
        return SimulationReport(
            scenario=self.sc,
            policy=self.cfg,
            mitigation=self.mitigation,
            ticks=self.ticks,
            blocks=list(self.engine.blocklist.history),
            records=self.engine.records,
            requests=self.requests,
            connections=self.conn_series,
            injected=self.injected,
            ingress_drops=self.ingress_drops,
            admitted=self.admitted,
            overload_drops=self.overload_drops,
            ring_drops=self.engine.ring_drops,
            trace=self.trace,
        )

    def _stop_ns(self, w: WorkloadSpec) -> int:
        return self.end if w.stop is None else min(self.end, seconds_to_ns(w.stop))

    # -- enforcement hook ---------------------------------------------------

    def drop_ingress(self, client: ClientId) -> None:
        self.blocked.add(client)

    def teardown_sessions(self, client: ClientId) -> None:
        ids = sorted(self.server.by_client.get(client, ()))
        step = NS_PER_S / self.sc.teardown_rate
        for n, conn_id in enumerate(ids):
            self._at(self.now + int(n * step), self._close, conn_id)

    def release(self, client: ClientId) -> None:
        self.blocked.discard(client)

    # -- watchdog tick --------------------------------------------------------

    def _tick(self) -> None:
        metrics = compute_system_metrics(self.server, self.now)
        outcome = self.engine.on_tick(metrics)
        lat = self._monitor_lat
        self._monitor_lat = []
        self.ticks.append(TickRow(
            self.now, metrics.cpu_usage, metrics.memory_usage, metrics.connection_pool_usage,
            outcome.state.mode, (sum(lat) / len(lat) / 1e6) if lat else None,
            self.server.active_memory,
        ))
        for w in self.sc.workloads:
            self.conn_series[w.name].append(self.server.client_conns(w.client))

    # -- packets --------------------------------------------------------------

    def _arrive(self, job: Job) -> bool:
        w = self.sc.workloads[job.workload]
        if job.client in self.blocked:
            self.ingress_drops.append((self.now, w.name))
            return False
        if len(self.server.queue) >= self.server.backlog_limit:
            self.overload_drops += 1
            return False
        self.admitted.append((self.now, w.name))
        self.server.queue.append(job)
        self._dispatch()
        return True

    def _dispatch(self) -> None:
        srv = self.server
        while srv.queue:
            core = srv.free_core()
            if core is None:
                return
            job = srv.queue.popleft()
            job.start = self.now
            job.core = core
            srv.cores[core] = job
            srv.busy_since[core] = self.now
            service = max(1, int(round(job.total_instructions * NS_PER_S / srv.core_speed)))
            self._at(self.now + service, self._complete, core)

    def _switch_plan(self, job: Job) -> dict[Layer, list[tuple[float, int]]]:
        p = self.sc.core_switch_prob
        n = self.server.num_cores
        if p <= 0 or n < 2:
            return {}
        rng = self._switch_rng
        plan = {}
        cpu = job.core
        for layer in Layer:
            if layer > job.last_layer or rng.random() >= p:
                continue
            cuts = sorted(rng.random() for _ in range(rng.randint(1, 3)))
            points = []
            for frac in cuts:
                to = rng.randrange(n - 1)
                to = to + 1 if to >= cpu else to
                points.append((frac, to))
                cpu = to
            plan[layer] = points
        return plan

    def _complete(self, core: int) -> None:
        srv = self.server
        job = srv.cores[core]
        srv.cores[core] = None
        srv.busy_total[core] += self.now - srv.busy_since[core]
        events, _ = generate_probe_events(
            job, job.start, core, srv.counters, srv.core_speed, self._switch_plan(job)
        )
        for ev in events:
            self.engine.feed(ev)
        self.engine.finalize(job.packet_id, self.now, job.last_layer)
        name = self.sc.workloads[job.workload].name
        inj = self.injected[name]
        for layer, used in job.usage().items():
            inj[layer] = inj[layer] + used
        if job.on_done is not None:
            job.on_done(job)
        self._dispatch()

    def _new_job(self, idx: int, kind: WorkloadKind, costs, request=None, accept=False, on_done=None) -> Job:
        w = self.sc.workloads[idx]
        return Job(
            packet_id=next(self._pids), client=w.client, workload=idx, kind=kind,
            costs=costs, arrival=self.now, last_layer=LAST_LAYER[kind],
            request=request, accept_in_request=accept, on_done=on_done,
        )

    def _close(self, conn_id: int) -> None:
        self.server.close_conn(conn_id)

    # -- workloads --------------------------------------------------------------

    def _start_workload(self, idx: int) -> None:
        w = self.sc.workloads[idx]
        if w.kind is WorkloadKind.BENIGN_HTTP:
            self._http_send(idx)
        else:
            self._episode(idx, self.now)

    def _episode(self, idx: int, t0: int) -> None:
        w = self.sc.workloads[idx]
        stop = self._stop_ns(w)
        if t0 >= stop:
            return
        burst_end = stop if w.burst is None else min(stop, t0 + seconds_to_ns(w.burst))
        step = NS_PER_S / w.rate
        count = math.ceil((burst_end - t0) / step)
        if w.kind is WorkloadKind.SLOWLORIS and w.sockets:
            count = min(count, w.sockets)
        fire = {
            WorkloadKind.FRAGMENT_SMACK: self._fragment,
            WorkloadKind.RANGE_HEADER: self._range_request,
            WorkloadKind.SLOWLORIS: self._slowloris_connect,
        }[w.kind]
        for n in range(count):
            t = t0 + int(n * step)
            if t < burst_end:
                self._at(t, fire, idx)
        nxt = t0 + seconds_to_ns(w.period)
        if w.burst is not None and nxt < stop:
            self._at(nxt, self._episode, idx, nxt)

    # HTTP ------------------------------------------------------------------

    def _http_costs(self, idx: int) -> tuple[tuple[int, int], ...]:
        base = self.sc.costs.layers[WorkloadKind.BENIGN_HTTP]
        own = self.sc.workloads[idx].page_sigma
        sigma = self.sc.costs.page_sigma if own is None else own
        if sigma <= 0:
            return base
        f = self._rngs[idx].lognormvariate(-sigma * sigma / 2, sigma)
        return tuple((max(1, int(i * f)), int(m * f)) for i, m in base)

    def _http_send(self, idx: int) -> None:
        w = self.sc.workloads[idx]
        if self.now >= self._stop_ns(w):
            return
        if not w.closed_loop:
            nxt = self.now + seconds_to_ns(w.period)
            if nxt < self._stop_ns(w):
                self._at(nxt, self._http_send, idx)
        req = Request(w.name, w.role, w.client, self.now)
        self.requests.append(req)
        costs = self._http_costs(idx)
        if w.client in self.blocked:
            self.ingress_drops.append((self.now, w.name))
            self._fail(idx, req, "blocked")
            return
        conn = self._ka_conn.get(idx) if w.keepalive else None
        accept = False
        if conn is None or not conn.alive:
            conn = self.server.open_conn(next(self._conn_ids), w.client, idx, self.now, w.keepalive)
            if conn is None:
                self._fail(idx, req, "refused")
                return
            accept = True
            if w.keepalive:
                self._ka_conn[idx] = conn
        conn.busy = True
        req.conn = conn.conn_id
        job = self._new_job(idx, WorkloadKind.BENIGN_HTTP, costs, req, accept, self._http_done)
        if not self._arrive(job):
            self.server.close_conn(conn.conn_id)
            self._fail(idx, req, "dropped")

    def _fail(self, idx: int, req: Request, status: str) -> None:
        w = self.sc.workloads[idx]
        req.status = status
        req.done = self.now + seconds_to_ns(w.fail_delay)
        if w.closed_loop:
            self._at(req.done + seconds_to_ns(w.think), self._http_send, idx)

    def _http_done(self, job: Job) -> None:
        req = job.request
        idx = job.workload
        w = self.sc.workloads[idx]
        req.status = "ok"
        req.done = self.now
        if w.role == "monitor":
            self._monitor_lat.append(self.now - req.sent)
        conn = self.server.conns.get(req.conn)
        if conn is not None:
            conn.busy = False
            if w.keepalive:
                gen = self._ka_gen.get(idx, 0) + 1
                self._ka_gen[idx] = gen
                self._at(self.now + seconds_to_ns(self.sc.keepalive_timeout), self._ka_expire, idx, conn.conn_id, gen)
            else:
                self.server.close_conn(conn.conn_id)
        if w.closed_loop:
            self._at(self.now + seconds_to_ns(w.think), self._http_send, idx)

    def _ka_expire(self, idx: int, conn_id: int, gen: int) -> None:
        conn = self.server.conns.get(conn_id)
        if conn is not None and not conn.busy and self._ka_gen.get(idx) == gen:
            self.server.close_conn(conn_id)

    # FragmentSmack ------------------------------------------------------------

    def _fragment(self, idx: int) -> None:
        w = self.sc.workloads[idx]
        cm = self.sc.costs
        if w.client in self.blocked:
            self.ingress_drops.append((self.now, w.name))
            return
        q = self._frag_queues.setdefault(idx, deque())
        horizon = self.now - seconds_to_ns(cm.frag_timeout)
        while q and q[0] < horizon:
            q.popleft()
        base = cm.layers[WorkloadKind.FRAGMENT_SMACK]
        net_i, net_m = base[Layer.NETWORK]
        costs = (base[0], (net_i + cm.frag_per_queued * len(q), net_m), base[2], base[3])
        if len(q) >= cm.frag_queue_cap:
            q.popleft()
        q.append(self.now)
        self._arrive(self._new_job(idx, WorkloadKind.FRAGMENT_SMACK, costs))

    # Range header --------------------------------------------------------------

    def _range_request(self, idx: int) -> None:
        w = self.sc.workloads[idx]
        req = Request(w.name, w.role, w.client, self.now)
        self.requests.append(req)
        if w.client in self.blocked:
            self.ingress_drops.append((self.now, w.name))
            req.status, req.done = "blocked", self.now
            return
        conn = self.server.open_conn(next(self._conn_ids), w.client, idx, self.now, False)
        if conn is None:
            req.status, req.done = "refused", self.now
            return
        req.conn = conn.conn_id
        job = self._new_job(idx, WorkloadKind.RANGE_HEADER, self.sc.costs.layers[WorkloadKind.RANGE_HEADER],
                            req, True, self._range_done)
        if not self._arrive(job):
            self.server.close_conn(conn.conn_id)
            req.status, req.done = "dropped", self.now

    def _range_done(self, job: Job) -> None:
        req = job.request
        req.done = self.now
        conn = self.server.conns.get(req.conn)
        if conn is None:
            req.status = "reset"
            return
        need = self.sc.costs.rh_retain_bytes
        if self.server.active_memory + need > self.server.memory_capacity:
            req.status = "no_memory"
            self.server.close_conn(conn.conn_id)
            return
        req.status = "ok"
        conn.retained = need
        self.server.retained += need
        self._at(self.now + seconds_to_ns(self.sc.costs.rh_response_time), self._close, conn.conn_id)

    # Slowloris -----------------------------------------------------------------

    def _slowloris_connect(self, idx: int) -> None:
        w = self.sc.workloads[idx]
        if w.client in self.blocked:
            self.ingress_drops.append((self.now, w.name))
            return
        costs = self.sc.costs.layers[WorkloadKind.SLOWLORIS]
        self._arrive(self._new_job(idx, WorkloadKind.SLOWLORIS, costs, on_done=self._slowloris_accepted))

    def _slowloris_accepted(self, job: Job) -> None:
        w = self.sc.workloads[job.workload]
        conn = self.server.open_conn(next(self._conn_ids), w.client, job.workload, self.now, False)
        if conn is None:
            return
        # The partial request never completes, so the accept is charged outside any request.
        self.engine.feed(ProbeEvent(ProbeKind.CONN_ACCEPT, self.now, job.core, None, client=w.client))
        self._at(self.now + seconds_to_ns(self.sc.costs.slowloris_keepalive), self._slowloris_header, job.workload, conn.conn_id)

    def _slowloris_header(self, idx: int, conn_id: int) -> None:
        if conn_id not in self.server.conns:
            return
        w = self.sc.workloads[idx]
        if w.client not in self.blocked:
            costs = self.sc.costs.layers[WorkloadKind.SLOWLORIS]
            self._arrive(self._new_job(idx, WorkloadKind.SLOWLORIS, costs))
        self._at(self.now + seconds_to_ns(self.sc.costs.slowloris_keepalive), self._slowloris_header, idx, conn_id)


def run_scenario(
    spec: ScenarioConfig,
    policy: PolicyConfig | None = None,
    mitigation: bool | None = None,
    trace: bool = False,
) -> SimulationReport:
    """Run one scenario to completion; deterministic for a given seed."""
    return Simulation(spec, policy, mitigation, trace).run()
