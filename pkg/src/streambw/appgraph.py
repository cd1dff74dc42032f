"""Streaming application model: operator DAG -> instance graph -> placed flows.

An ``AppDag`` is expanded into replicas (``expand``), the replicas are mapped to
machines (``place_round_robin`` or an explicit map), and every instance-level
edge becomes a unidirectional ``Flow`` whose route is looked up in the
topology (``flow_map``).
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence

from .topology import DOWNLINK, UPLINK, Topology

SOURCE, TRANSFORM, SINK = "source", "transform", "sink"
SHUFFLE, KEY_BASED, GLOBAL, ALL = "shuffle", "key_based", "global", "all"


class AppGraphError(ValueError):
    pass


@dataclass(frozen=True)
class OperatorSpec:
    name: str
    parallelism: int = 1
    kind: str = TRANSFORM
    service_rate: float = 1000.0  # tuples/s per instance
    selectivity: float = 1.0  # output tuples per input tuple
    out_tuple_size: float = 0.001  # MB
    # join instances process inbound tuples in event-time order across all
    # inbound flows and wait while any inbound flow has nothing queued
    join: bool = False
    # upstream operators whose tuples produce output (None: all of them)
    emit_on: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        if self.kind not in (SOURCE, TRANSFORM, SINK):
            raise AppGraphError(f"{self.name}: unknown operator kind {self.kind!r}")
        if not isinstance(self.parallelism, int) or self.parallelism < 1:
            raise AppGraphError(f"{self.name}: parallelism must be >= 1")
        if self.kind != SOURCE and not self.service_rate > 0:
            raise AppGraphError(f"{self.name}: service_rate must be > 0")
        if self.selectivity < 0:
            raise AppGraphError(f"{self.name}: selectivity must be >= 0")
        if not self.out_tuple_size > 0:
            raise AppGraphError(f"{self.name}: out_tuple_size must be > 0")


@dataclass(frozen=True)
class GroupingPolicy:
    variant: str
    key_count: int = 1
    skew: float = 0.0
    target_index: int = 0

    def __post_init__(self):
        if self.variant not in (SHUFFLE, KEY_BASED, GLOBAL, ALL):
            raise AppGraphError(f"unknown grouping {self.variant!r}")
        if self.variant == KEY_BASED:
            if self.key_count < 1:
                raise AppGraphError("key_based grouping needs key_count >= 1")
            if self.skew < 0:
                raise AppGraphError("key_based grouping needs skew >= 0")
        if self.variant == GLOBAL and self.target_index < 0:
            raise AppGraphError("global grouping target_index must be >= 0")


def shuffle() -> GroupingPolicy:
    return GroupingPolicy(SHUFFLE)


def key_based(key_count: int, skew: float = 0.0) -> GroupingPolicy:
    return GroupingPolicy(KEY_BASED, key_count=key_count, skew=skew)


def global_(target_index: int = 0) -> GroupingPolicy:
    return GroupingPolicy(GLOBAL, target_index=target_index)


def all_() -> GroupingPolicy:
    return GroupingPolicy(ALL)


class Edge(NamedTuple):
    upstream: str
    downstream: str
    grouping: GroupingPolicy


@dataclass(frozen=True)
class AppDag:
    operators: tuple[OperatorSpec, ...]
    edges: tuple[Edge, ...]
    app_id: int = 0
    name: str = "app"

    def __post_init__(self):
        object.__setattr__(self, "operators", tuple(self.operators))
        object.__setattr__(self, "edges", tuple(Edge(*e) for e in self.edges))

    def op(self, name: str) -> OperatorSpec:
        for o in self.operators:
            if o.name == name:
                return o
        raise AppGraphError(f"unknown operator {name!r}")

    def upstream_of(self, name: str) -> list[str]:
        return [e.upstream for e in self.edges if e.downstream == name]

    def downstream_of(self, name: str) -> list[Edge]:
        return [e for e in self.edges if e.upstream == name]

    def validate(self) -> list[str]:
        """Every structural problem found, empty when the DAG is usable."""
        errs = []
        names = [o.name for o in self.operators]
        if len(set(names)) != len(names):
            errs.append("duplicate operator names")
        known = set(names)
        for e in self.edges:
            for n in (e.upstream, e.downstream):
                if n not in known:
                    errs.append(f"edge references unknown operator {n!r}")
        if errs:
            return errs
        seen_pairs = set()
        for e in self.edges:
            if (e.upstream, e.downstream) in seen_pairs:
                errs.append(f"duplicate edge {e.upstream}->{e.downstream}")
            seen_pairs.add((e.upstream, e.downstream))
            if e.grouping.variant == GLOBAL and e.grouping.target_index >= self.op(e.downstream).parallelism:
                errs.append(f"edge {e.upstream}->{e.downstream}: global target "
                            f"{e.grouping.target_index} out of range")
        for o in self.operators:
            ins, outs = self.upstream_of(o.name), self.downstream_of(o.name)
            if o.kind == SOURCE and ins:
                errs.append(f"source {o.name} has inputs")
            if o.kind == SINK and outs:
                errs.append(f"sink {o.name} has outputs")
            if o.kind != SOURCE and not ins:
                errs.append(f"{o.name} is not reachable from a source")
            if o.kind != SINK and not outs:
                errs.append(f"{o.name} does not lead to a sink")
            if o.emit_on is not None:
                for u in o.emit_on:
                    if u not in ins:
                        errs.append(f"{o.name}: emit_on names {u!r} which is not an input")
        try:
            topo_order(self)
        except AppGraphError as ex:
            errs.append(str(ex))
        return errs


def topo_order(dag: AppDag) -> list[str]:
    indeg = {o.name: 0 for o in dag.operators}
    for e in dag.edges:
        indeg[e.downstream] += 1
    # declaration order among ready operators keeps the result deterministic
    order = []
    ready = [o.name for o in dag.operators if indeg[o.name] == 0]
    while ready:
        n = ready.pop(0)
        order.append(n)
        for e in dag.downstream_of(n):
            indeg[e.downstream] -= 1
            if indeg[e.downstream] == 0:
                ready.append(e.downstream)
    if len(order) != len(dag.operators):
        raise AppGraphError("operator graph has a cycle")
    return order


class Instance(NamedTuple):
    operator: str
    replica: int  # 0-based

    def __str__(self):
        return f"{self.operator}[{self.replica}]"


class InstanceEdge(NamedTuple):
    src: Instance
    dst: Instance
    share: float  # expected fraction of src's output on this edge copy
    grouping: GroupingPolicy


@dataclass(frozen=True)
class InstanceGraph:
    dag: AppDag
    instances: tuple[Instance, ...]
    instance_edges: tuple[InstanceEdge, ...]


def expand(dag: AppDag) -> InstanceGraph:
    errs = dag.validate()
    if errs:
        raise AppGraphError("; ".join(errs))
    instances = tuple(Instance(o.name, i) for o in dag.operators for i in range(o.parallelism))
    edges = []
    for e in dag.edges:
        up, down = dag.op(e.upstream), dag.op(e.downstream)
        g = e.grouping
        for i in range(up.parallelism):
            src = Instance(up.name, i)
            if g.variant == GLOBAL:
                edges.append(InstanceEdge(src, Instance(down.name, g.target_index), 1.0, g))
            elif g.variant == ALL:
                for j in range(down.parallelism):
                    edges.append(InstanceEdge(src, Instance(down.name, j), 1.0, g))
            else:
                for j in range(down.parallelism):
                    edges.append(InstanceEdge(src, Instance(down.name, j), 1.0 / down.parallelism, g))
    return InstanceGraph(dag, instances, tuple(edges))


def key_target(key: int, parallelism: int) -> int:
    """Projection for key-based grouping: a pure function of the key."""
    return key % parallelism


class GroupingRouter:
    """Picks destination replicas for one upstream instance on one DAG edge."""

    __slots__ = ("variant", "parallelism", "target", "_rr")

    def __init__(self, grouping: GroupingPolicy, parallelism: int):
        self.variant = grouping.variant
        self.parallelism = parallelism
        self.target = grouping.target_index
        self._rr = 0

    def targets(self, key: int) -> Sequence[int]:
        v = self.variant
        if v == SHUFFLE:
            j = self._rr
            self._rr = (j + 1) % self.parallelism
            return (j,)
        if v == KEY_BASED:
            return (key % self.parallelism,)
        if v == GLOBAL:
            return (self.target,)
        return range(self.parallelism)


@dataclass(frozen=True)
class Placement:
    assignment: dict[Instance, int] = field(hash=False)

    def __getitem__(self, inst: Instance) -> int:
        return self.assignment[inst]

    def machines_of(self, operator: str) -> list[int]:
        return [m for inst, m in sorted(self.assignment.items()) if inst.operator == operator]


def place_round_robin(g: InstanceGraph, machines: Sequence[int]) -> Placement:
    if not machines:
        raise AppGraphError("placement needs at least one machine")
    return Placement({inst: machines[i % len(machines)] for i, inst in enumerate(g.instances)})


def place_explicit(g: InstanceGraph, mapping: Mapping[str, Sequence[int]]) -> Placement:
    """``mapping`` gives, per operator, the machine of each replica in order."""
    assignment = {}
    for inst in g.instances:
        ms = mapping.get(inst.operator)
        if ms is None:
            raise AppGraphError(f"placement missing operator {inst.operator!r}")
        if len(ms) != g.dag.op(inst.operator).parallelism:
            raise AppGraphError(f"placement for {inst.operator!r} lists {len(ms)} machines, "
                                f"parallelism is {g.dag.op(inst.operator).parallelism}")
        assignment[inst] = ms[inst.replica]
    return Placement(assignment)


@dataclass(frozen=True)
class Flow:
    id: int
    app_id: int
    src_instance: Instance
    dst_instance: Instance
    src_machine: int
    dst_machine: int
    route: tuple[str, ...]  # empty for internal flows
    grouping: GroupingPolicy

    @property
    def is_internal(self) -> bool:
        return self.src_machine == self.dst_machine

    @property
    def name(self) -> str:
        return f"a{self.app_id}:{self.src_instance}->{self.dst_instance}"


@dataclass(frozen=True)
class LinkFlowSets:
    """Flow membership per link, split the way the allocator consumes it."""

    uplinks: dict[str, tuple[int, ...]] = field(hash=False)
    downlinks: dict[str, tuple[int, ...]] = field(hash=False)
    internal: dict[str, tuple[int, ...]] = field(hash=False)

    def all(self) -> dict[str, tuple[int, ...]]:
        out = dict(self.uplinks)
        out.update(self.downlinks)
        out.update(self.internal)
        return out

    def links_of(self, flow_id: int) -> list[str]:
        return [l for l, fs in self.all().items() if flow_id in fs]

    def flows(self) -> set[int]:
        return {f for fs in self.all().values() for f in fs}

    @staticmethod
    def from_flows(flows: Iterable[Flow], topology: Topology) -> "LinkFlowSets":
        up, down, internal = defaultdict(list), defaultdict(list), defaultdict(list)
        for f in flows:
            if f.is_internal:
                continue
            for lid in f.route:
                kind = topology.links[lid].kind
                {UPLINK: up, DOWNLINK: down}.get(kind, internal)[lid].append(f.id)
        freeze = lambda d: {k: tuple(v) for k, v in sorted(d.items())}
        return LinkFlowSets(freeze(up), freeze(down), freeze(internal))


def flow_map(
    g: InstanceGraph,
    p: Placement,
    t: Topology,
    app_id: Optional[int] = None,
    first_id: int = 0,
) -> tuple[list[Flow], LinkFlowSets]:
    app_id = g.dag.app_id if app_id is None else app_id
    flows = []
    for i, e in enumerate(g.instance_edges):
        try:
            s, d = p[e.src], p[e.dst]
        except KeyError as ex:
            raise AppGraphError(f"placement missing instance {ex.args[0]}") from None
        for m in (s, d):
            if m not in t.rack_of:
                raise AppGraphError(f"placement references unknown machine {m}")
        rt = () if s == d else tuple(t.route(s, d))
        flows.append(Flow(first_id + i, app_id, e.src, e.dst, s, d, rt, e.grouping))
    return flows, LinkFlowSets.from_flows(flows, t)
