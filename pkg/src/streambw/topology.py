"""Datacenter fabric model: machines, rack/core switches, typed unidirectional links.

Routes are static and single-path.  Cross-rack traffic between machines ``s``
and ``d`` goes through core ``(s + d) % core_count``; switching fabric itself
is unconstrained, only links carry capacities (MB/s).
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable

UPLINK = "uplink"
DOWNLINK = "downlink"
RACK_TO_CORE = "rack-to-core"
CORE_TO_RACK = "core-to-rack"
LINK_KINDS = (UPLINK, DOWNLINK, RACK_TO_CORE, CORE_TO_RACK)
INTERNAL_KINDS = (RACK_TO_CORE, CORE_TO_RACK)


class TopologyError(ValueError):
    pass


def mbps_to_MBps(mbps: float) -> float:
    """Megabits/s -> megabytes/s."""
    return mbps / 8.0


@dataclass(frozen=True)
class Link:
    id: str
    kind: str
    src: str
    dst: str
    capacity: float  # MB/s

    def __post_init__(self):
        if self.kind not in LINK_KINDS:
            raise TopologyError(f"unknown link kind {self.kind!r}")
        if not self.capacity > 0:
            raise TopologyError(f"link {self.id}: capacity must be > 0, got {self.capacity}")

    @property
    def is_internal(self) -> bool:
        return self.kind in INTERNAL_KINDS


@dataclass(frozen=True)
class Route:
    link_ids: tuple[str, ...]

    def __len__(self):
        return len(self.link_ids)

    def __iter__(self):
        return iter(self.link_ids)

    def __getitem__(self, i):
        return self.link_ids[i]


def machine_node(m: int) -> str:
    return f"m{m}"


def uplink_id(m: int) -> str:
    return f"up:m{m}"


def downlink_id(m: int) -> str:
    return f"down:m{m}"


@dataclass(frozen=True, eq=True)
class Topology:
    machines: tuple[int, ...]
    switches: tuple[tuple[str, str], ...]  # (node, tier) with tier in {rack, core}
    links: dict[str, Link] = field(hash=False)
    routes: dict[tuple[int, int], Route] = field(hash=False)
    rack_of: dict[int, int] = field(hash=False)

    def route(self, src: int, dst: int) -> Route:
        return route(self, src, dst)

    def link(self, link_id: str) -> Link:
        return self.links[link_id]

    def links_of_kind(self, *kinds: str) -> list[Link]:
        return [l for l in self.links.values() if l.kind in kinds]

    def capacities(self) -> dict[str, float]:
        return {lid: l.capacity for lid, l in self.links.items()}

    def with_capacity(self, kinds: Iterable[str], capacity: float) -> "Topology":
        """Copy with every link of the given kinds set to ``capacity`` (MB/s)."""
        kinds = set(kinds)
        bad = kinds - set(LINK_KINDS)
        if bad:
            raise TopologyError(f"unknown link kinds {sorted(bad)}")
        links = {
            lid: (replace(l, capacity=capacity) if l.kind in kinds else l)
            for lid, l in self.links.items()
        }
        return replace(self, links=links)


def build_fat_tree(
    rack_count: int,
    machines_per_rack: int,
    core_count: int,
    uplink_cap: float,
    downlink_cap: float,
    internal_cap: float,
) -> Topology:
    """Two-tier tree: every rack switch wired to every core by one link each way."""
    for name, v in (("rack_count", rack_count), ("machines_per_rack", machines_per_rack),
                    ("core_count", core_count)):
        if not isinstance(v, int) or v < 1:
            raise TopologyError(f"{name} must be a positive integer, got {v!r}")
    for name, v in (("uplink_cap", uplink_cap), ("downlink_cap", downlink_cap),
                    ("internal_cap", internal_cap)):
        if not v > 0:
            raise TopologyError(f"{name} must be > 0, got {v!r}")

    n = rack_count * machines_per_rack
    machines = tuple(range(n))
    rack_of = {m: m // machines_per_rack for m in machines}
    switches = tuple([(f"r{r}", "rack") for r in range(rack_count)]
                     + [(f"c{k}", "core") for k in range(core_count)])

    links: dict[str, Link] = {}
    for m in machines:
        r = rack_of[m]
        links[uplink_id(m)] = Link(uplink_id(m), UPLINK, machine_node(m), f"r{r}", uplink_cap)
        links[downlink_id(m)] = Link(downlink_id(m), DOWNLINK, f"r{r}", machine_node(m), downlink_cap)
    for r in range(rack_count):
        for k in range(core_count):
            up = f"r{r}>c{k}"
            down = f"c{k}>r{r}"
            links[up] = Link(up, RACK_TO_CORE, f"r{r}", f"c{k}", internal_cap)
            links[down] = Link(down, CORE_TO_RACK, f"c{k}", f"r{r}", internal_cap)

    routes: dict[tuple[int, int], Route] = {}
    for s in machines:
        for d in machines:
            if s == d:
                continue
            rs, rd = rack_of[s], rack_of[d]
            if rs == rd:
                ids = (uplink_id(s), downlink_id(d))
            else:
                k = (s + d) % core_count
                ids = (uplink_id(s), f"r{rs}>c{k}", f"c{k}>r{rd}", downlink_id(d))
            routes[(s, d)] = Route(ids)

    return Topology(machines, switches, links, routes, rack_of)


def route(topology: Topology, src: int, dst: int) -> Route:
    if src not in topology.rack_of:
        raise TopologyError(f"unknown machine {src!r}")
    if dst not in topology.rack_of:
        raise TopologyError(f"unknown machine {dst!r}")
    if src == dst:
        raise TopologyError("co-located instances exchange data internally; no route")
    return topology.routes[(src, dst)]


def allocatable_capacity(link: Link, external_traffic_rate: float) -> float:
    """What is left of ``link`` for the allocator once cross traffic is accounted."""
    if external_traffic_rate < 0:
        raise TopologyError("external traffic rate must be >= 0")
    return max(0.0, link.capacity - external_traffic_rate)
