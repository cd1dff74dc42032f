"""Deterministic fluid simulation of stream applications sharing a fabric.

Time advances in fixed sub-steps of ``sample_period / substeps``.  Inside a
sub-step every external flow serves its send queue as a FIFO fluid server at
its granted rate, so each tuple gets an exact transfer completion time; every
instance serves its inbound tuples one at a time at ``1 / service_rate``.
Operators are swept in topological order, so a tuple can cross several hops in
one sub-step when time allows.  Queue accounting is in integer bytes.

At every allocation boundary the profiler snapshot feeds the allocator:

* ``app_aware``: the per-epoch flow-state allocation, fixed for the epoch.
  The first epoch, with no history, uses an equal max-min split.
* ``maxmin_tcp``: demand-bounded max-min, recomputed every sub-step from the
  current backlog, as a work-conserving stand-in for TCP.
* ``app_fair``: strict-priority application groups, fixed per epoch, with
  per-link caps recomputed every sub-step from the current backlog.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Optional, Sequence

import numpy as np

from ..allocator import (AllocationVector, allocate_step, check_feasible, demand_proxy,
                         detect_bottlenecks, maxmin_baseline)
from ..appgraph import (AppDag, Flow, GroupingRouter, Instance, LinkFlowSets, Placement, SINK,
                        SOURCE, expand, flow_map, topo_order)
from ..fairness import FairnessConfig, FairScheduler
from ..profiler import FlowProfiler, FlowQueues, IntervalClock
from ..topology import Topology
from .workloads import Workload

APP_AWARE, MAXMIN_TCP, APP_FAIR = "app_aware", "maxmin_tcp", "app_fair"
ALLOCATORS = (APP_AWARE, MAXMIN_TCP, APP_FAIR)
BYTES_PER_MB = 1_000_000


class SimError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    duration: float = 600.0
    sample_period: float = 1.0
    alloc_period: float = 5.0
    seed: int = 0
    allocator: str = APP_AWARE
    capacity_overrides: Mapping[str, float] = field(default_factory=dict, hash=False)  # kind -> MB/s
    substeps: int = 10
    warmup_epochs: int = 2
    fairness: FairnessConfig = FairnessConfig()

    def __post_init__(self):
        if not self.duration > 0:
            raise SimError("duration must be > 0")
        IntervalClock(0.0, self.sample_period, self.alloc_period)
        if self.allocator not in ALLOCATORS:
            raise SimError(f"unknown allocator {self.allocator!r}")
        if self.substeps < 1:
            raise SimError("substeps must be >= 1")
        if self.warmup_epochs < 0:
            raise SimError("warmup_epochs must be >= 0")
        steps = self.duration / self.alloc_period
        if abs(steps - round(steps)) > 1e-9:
            raise SimError("duration must be a multiple of the allocation period")

    def echo(self) -> dict:
        return {
            "duration": self.duration, "sample_period": self.sample_period,
            "alloc_period": self.alloc_period, "seed": self.seed, "allocator": self.allocator,
            "capacity_overrides_MBps": dict(sorted(self.capacity_overrides.items())),
            "substeps": self.substeps, "warmup_epochs": self.warmup_epochs,
            "alpha": self.fairness.alpha, "m": self.fairness.m,
            "regroup_period": self.fairness.regroup_period,
            "starvation_threshold": self.fairness.starvation_threshold,
        }


@dataclass(frozen=True)
class AppSetup:
    dag: AppDag
    placement: Placement
    workload: Workload


@dataclass
class RunResult:
    config: SimConfig
    topology: Topology
    flows: list[Flow]
    link_flows: dict[str, tuple[int, ...]]
    app_names: dict[int, str]
    # per epoch
    epoch_times: list[float]
    state_rows: list[tuple]  # (t, flow_id, L_s_start, L_r_start, volume, L_s_end, L_r_end)
    alloc_rows: list[tuple]  # (t, flow_id, rate MB/s averaged over the epoch)
    group_rows: list[tuple]  # (t, app_id, level, mu_ewma)
    flagged: list[frozenset]  # bottlenecked links per epoch
    link_demand: list[dict[str, float]]  # per epoch, summed demand proxy MB/s per link
    filled: list[frozenset]  # per epoch, links that max-min at the measured demands fills
    epoch_alloc_load: list[dict[str, float]]  # per epoch, mean allocated MB/s per link
    # per sample period
    link_carried: dict[str, np.ndarray]  # bytes per sample
    # completions at sinks
    done_time: np.ndarray
    done_latency: np.ndarray
    done_app: np.ndarray
    # checks
    violations: int = 0
    internal_violations: int = 0
    allocations_checked: int = 0
    max_sender_residual: int = 0
    max_receiver_residual: int = 0
    conservation: dict = field(default_factory=dict)


class _Runtime:
    __slots__ = ("inst", "app", "op", "inbound", "emits", "outs", "busy", "credit",
                 "sel_num", "sel_den", "svc", "is_sink", "join")


def _capacities(topology: Topology) -> dict[str, float]:
    return topology.capacities()


def simulate(topology: Topology, apps: Sequence[AppSetup], config: SimConfig) -> RunResult:
    for kind, cap in config.capacity_overrides.items():
        topology = topology.with_capacity([kind], cap)
    caps = _capacities(topology)

    flows: list[Flow] = []
    app_names = {}
    for setup in apps:
        g = expand(setup.dag)
        fs, _ = flow_map(g, setup.placement, topology, first_id=len(flows))
        flows.extend(fs)
        app_names[setup.dag.app_id] = setup.dag.name
    sets = LinkFlowSets.from_flows(flows, topology)
    link_flows = sets.all()
    internal_links = set(sets.internal)
    ext = [f.id for f in flows if not f.is_internal]
    flow_app = {f.id: f.app_id for f in flows}

    # flow runtime state
    nf = len(flows)
    queues = {f.id: FlowQueues(0, 0, 0, 0, 0) for f in flows}
    sendq = [deque() for _ in range(nf)]
    recvq = [deque() for _ in range(nf)]
    head_sent = [0.0] * nf
    carried_sample = [0.0] * nf
    extra_delay = {}  # store-and-forward delay per byte beyond the slowest hop
    for f in flows:
        if f.route:
            inv = [1.0 / (caps[l] * BYTES_PER_MB) for l in f.route]
            extra_delay[f.id] = sum(inv) - max(inv)

    # instance runtimes, operators in topological order per app
    counters = {setup.dag.app_id: {"emitted": 0, "consumed": 0, "source_tuples": 0,
                                   "completed": 0} for setup in apps}
    runtimes: list[_Runtime] = []
    sources = []  # (runtime, Emissions, cursor)
    by_key = {}
    for f in flows:
        by_key.setdefault((f.app_id, f.src_instance, f.dst_instance.operator), {})[f.dst_instance.replica] = f.id
    for app_index, setup in enumerate(apps):
        dag = setup.dag
        sched = setup.workload.schedule(dag, config.duration, config.seed, app_index)
        for name in topo_order(dag):
            op = dag.op(name)
            for r in range(op.parallelism):
                inst = Instance(name, r)
                rt = _Runtime()
                rt.inst, rt.app, rt.op = inst, dag.app_id, op
                rt.inbound = [f.id for f in flows if f.app_id == dag.app_id and f.dst_instance == inst]
                emit_from = op.emit_on
                rt.emits = [emit_from is None or flows[fid].src_instance.operator in emit_from
                            for fid in rt.inbound]
                size = int(round(op.out_tuple_size * BYTES_PER_MB))
                rt.outs = []
                for e in dag.downstream_of(name):
                    targets = by_key[(dag.app_id, inst, e.downstream)]
                    rt.outs.append((GroupingRouter(e.grouping, dag.op(e.downstream).parallelism),
                                    targets, size))
                rt.busy = 0.0
                rt.credit = 0
                frac = Fraction(op.selectivity).limit_denominator(1_000_000)
                rt.sel_num, rt.sel_den = frac.numerator, frac.denominator
                rt.svc = 1.0 / op.service_rate if op.kind != SOURCE else 0.0
                rt.is_sink = op.kind == SINK
                rt.join = op.join
                if op.kind == SOURCE:
                    em = sched[inst]
                    sources.append([rt, em.times.tolist(), em.keys.tolist(), 0])
                else:
                    runtimes.append(rt)

    def emit(rt, ready, lineage, key, cnt):
        for router, targets, size in rt.outs:
            for j in router.targets(key):
                fid = targets[j]
                sendq[fid].append((ready, lineage, key, size))
                q = queues[fid]
                q.send_backlog += size
                q.generated += size
                cnt["emitted"] += 1

    done_t, done_lat, done_app = [], [], []

    h = config.sample_period / config.substeps
    steps_per_sample = config.substeps
    clock = IntervalClock(0.0, config.sample_period, config.alloc_period)
    steps_per_epoch = clock.samples_per_alloc * steps_per_sample
    n_steps = int(round(config.duration / h))
    n_samples = int(round(config.duration / config.sample_period))
    link_carried = {l: np.zeros(n_samples) for l in link_flows}

    profiler = FlowProfiler(queues, unit=BYTES_PER_MB)
    fair = FairScheduler(counters.keys(), config.fairness) if config.allocator == APP_FAIR else None

    res = RunResult(config, topology, flows, link_flows, app_names, [], [], [], [], [], [], [], [],
                    link_carried, None, None, None)

    rates: dict[int, float] = {}  # MB/s, external flows only
    epoch_rate_sum = {fid: 0.0 for fid in ext}
    ext_links = {l: fs for l, fs in link_flows.items() if fs}
    dt = config.alloc_period

    def apply_check(x: Mapping[int, float]):
        for fid in ext:
            v = x[fid]
            if not math.isfinite(v) or v < 0:
                raise SimError(f"allocator produced invalid rate {v!r} for flow {fid}")
        bad = check_feasible(x, ext_links, caps)
        res.allocations_checked += 1
        res.violations += len(bad)
        res.internal_violations += sum(1 for l, _, _ in bad if l in internal_links)

    def step_demands() -> dict[int, float]:
        return {fid: queues[fid].send_backlog / BYTES_PER_MB / h for fid in ext}

    def epoch_boundary(k: int):
        t = k * h
        if k > 0:
            states = profiler.end_all(t)
            t0 = t - dt
            for fid in range(nf):
                s = states[fid]
                res.state_rows.append((t0, fid, s.L_s_start, s.L_r_start, s.volume, s.L_s_end, s.L_r_end))
                snd, rcv = profiler.residuals(fid)
                res.max_sender_residual = max(res.max_sender_residual, abs(snd))
                res.max_receiver_residual = max(res.max_receiver_residual, abs(rcv))
            ext_states = {fid: states[fid] for fid in ext}
            b = detect_bottlenecks(sets, ext_states, caps)
            res.epoch_times.append(t0)
            res.flagged.append(b.links())
            proxy = {f: demand_proxy(s) for f, s in ext_states.items()}
            res.link_demand.append({l: sum(proxy[f] for f in fs) for l, fs in ext_links.items()})
            mm = maxmin_baseline(sets, caps, proxy).link_loads(ext_links)
            res.filled.append(frozenset(l for l, v in mm.items() if v >= caps[l] * (1 - 1e-6)))
            avg = {fid: epoch_rate_sum[fid] / steps_per_epoch for fid in ext}
            res.epoch_alloc_load.append({l: sum(avg[f] for f in fs) for l, fs in ext_links.items()})
            for fid in ext:
                res.alloc_rows.append((t0, fid, avg[fid]))
                epoch_rate_sum[fid] = 0.0
            if fair is not None:
                mb = {}
                for fid in ext:
                    mb[flow_app[fid]] = mb.get(flow_app[fid], 0.0) + states[fid].volume
                fair.observe({a: v / dt for a, v in mb.items()})
        else:
            ext_states = None
        if k >= n_steps:
            return
        if config.allocator == APP_AWARE:
            if ext_states is None:
                alloc = maxmin_baseline(sets, caps, {fid: math.inf for fid in ext}, epoch=t)
            else:
                alloc = allocate_step(ext_states, sets, caps, dt, epoch=t)
            rates.clear()
            rates.update(alloc.rates)
            apply_check(rates)
        elif fair is not None:
            groups = fair.regroup(t)
            for lvl, q in enumerate(groups.queues):
                for a in q:
                    res.group_rows.append((t, a, lvl, fair.records[a].mu_ewma))
        profiler.begin_interval(t)

    for k in range(n_steps + 1):
        if k % steps_per_epoch == 0:
            epoch_boundary(k)
        if k == n_steps:
            break
        t0, t1 = k * h, (k + 1) * h

        # sources
        for src in sources:
            rt, times, keys, i = src
            cnt = counters[rt.app]
            n = len(times)
            while i < n and times[i] < t1:
                emit(rt, times[i], times[i], keys[i], cnt)
                cnt["source_tuples"] += 1
                i += 1
            src[3] = i

        # rates for this sub-step
        if config.allocator != APP_AWARE:
            demands = step_demands()
            if config.allocator == MAXMIN_TCP:
                x = maxmin_baseline(sets, caps, demands).rates
            else:
                x = fair.allocate(ext_links, caps, flow_app, demands)
            rates.clear()
            rates.update(x)
            apply_check(rates)
        for fid in ext:
            epoch_rate_sum[fid] += rates[fid]

        # transfer and processing, upstream first
        for rt in runtimes:
            for fid in rt.inbound:
                sq = sendq[fid]
                if not sq:
                    continue
                rq = recvq[fid]
                q = queues[fid]
                if flows[fid].is_internal:
                    while sq and sq[0][0] < t1:
                        item = sq.popleft()
                        rq.append(item)
                        q.send_backlog -= item[3]
                        q.recv_backlog += item[3]
                        q.volume += item[3]
                    continue
                r = rates[fid] * BYTES_PER_MB
                if r <= 0:
                    continue
                tau = t0
                sent = head_sent[fid]
                moved = 0.0
                extra = extra_delay[fid]
                while sq:
                    ready, lin, key, size = sq[0]
                    if ready > tau:
                        tau = ready
                    if tau >= t1:
                        break
                    need = size - sent
                    finish = tau + need / r
                    if finish <= t1:
                        sq.popleft()
                        rq.append((finish + extra * size, lin, key, size))
                        q.send_backlog -= size
                        q.recv_backlog += size
                        q.volume += size
                        moved += need
                        sent = 0.0
                        tau = finish
                    else:
                        part = (t1 - tau) * r
                        sent += part
                        moved += part
                        break
                head_sent[fid] = sent
                carried_sample[fid] += moved

            # processing
            qs = [recvq[fid] for fid in rt.inbound]
            tau = rt.busy if rt.busy > t0 else t0
            cnt = counters[rt.app]
            svc = rt.svc
            nq = len(qs)
            while True:
                best = -1
                if rt.join:
                    ok = True
                    latest = 0.0
                    for j in range(nq):
                        qj = qs[j]
                        if not qj:
                            ok = False
                            break
                        head = qj[0]
                        if head[0] > latest:
                            latest = head[0]
                        if best < 0 or head[1] < qs[best][0][1]:
                            best = j
                    if not ok:
                        break
                    start = tau if tau > latest else latest
                else:
                    for j in range(nq):
                        qj = qs[j]
                        if qj and (best < 0 or qj[0][0] < qs[best][0][0]):
                            best = j
                    if best < 0:
                        break
                    arr = qs[best][0][0]
                    start = tau if tau > arr else arr
                if start >= t1:
                    break
                arr, lin, key, size = qs[best].popleft()
                fid = rt.inbound[best]
                fq = queues[fid]
                fq.recv_backlog -= size
                fq.processed += size
                cnt["consumed"] += 1
                finish = start + svc
                tau = finish
                if rt.is_sink:
                    cnt["completed"] += 1
                    done_t.append(finish)
                    done_lat.append(finish - lin)
                    done_app.append(rt.app)
                elif rt.emits[best]:
                    rt.credit += rt.sel_num
                    n_out = rt.credit // rt.sel_den
                    if n_out:
                        rt.credit -= n_out * rt.sel_den
                        for _ in range(n_out):
                            emit(rt, finish, lin, key, cnt)
            rt.busy = tau

        if (k + 1) % steps_per_sample == 0:
            s = (k + 1) // steps_per_sample - 1
            for l, fs in link_flows.items():
                if fs:
                    link_carried[l][s] = sum(carried_sample[f] for f in fs)
            for fid in range(nf):
                carried_sample[fid] = 0.0

    # end-of-run tuple conservation per app
    for a, cnt in counters.items():
        resident = sum(len(sendq[f.id]) + len(recvq[f.id]) for f in flows if f.app_id == a)
        cnt["resident"] = resident
        cnt["balanced"] = cnt["emitted"] == cnt["consumed"] + resident
    res.conservation = counters
    res.done_time = np.asarray(done_t, dtype=float)
    res.done_latency = np.asarray(done_lat, dtype=float)
    res.done_app = np.asarray(done_app, dtype=np.int64)
    return res
