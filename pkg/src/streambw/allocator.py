"""Per-interval bandwidth allocation for stream flows, plus a max-min baseline.

Rates are MB/s, backlogs and volumes MB, intervals seconds.  The app-aware
allocation runs, in order: bottleneck detection, the uplink and downlink
solvers on bottlenecked edge links, a per-flow minimum of the two grants,
proportional scaling on congested internal links, a feasibility pass, and a
bounded proportional backfill of leftover capacity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

from .appgraph import LinkFlowSets
from .profiler import FlowState

EPS_W = 1e-3  # MB, floor on uplink weights
EPS_P = 1e-3  # MB/s, floor on processing rates
FEAS_TOL = 1e-9
DEMAND_THRESHOLD = 0.95
BACKFILL_PASSES = 3


class AllocationError(ValueError):
    pass


def uplink_weight(s: FlowState) -> float:
    """Data to push next interval: what was sent plus twice the growth of the send queue."""
    return s.volume + 2.0 * s.L_s_end - s.L_s_start


def processing_rate(s: FlowState) -> float:
    return (s.volume - s.L_r_end + s.L_r_start) / s.interval


def demand_proxy(s: FlowState) -> float:
    """Rate that would carry last interval's traffic plus the current send backlog."""
    return (s.volume + s.L_s_end) / s.interval


@dataclass
class AllocationVector:
    rates: dict[int, float]
    epoch: float = 0.0

    def __getitem__(self, fid):
        return self.rates[fid]

    def link_loads(self, link_flows: Mapping[str, Sequence[int]]) -> dict[str, float]:
        return {l: sum(self.rates.get(f, 0.0) for f in fs) for l, fs in link_flows.items()}


@dataclass(frozen=True)
class BottleneckSets:
    uplinks: frozenset = field(default_factory=frozenset)
    downlinks: frozenset = field(default_factory=frozenset)
    internal: frozenset = field(default_factory=frozenset)
    flows: frozenset = field(default_factory=frozenset)

    def links(self) -> frozenset:
        return self.uplinks | self.downlinks | self.internal

    def __bool__(self):
        return bool(self.links())


def _link_map(sets) -> dict[str, tuple[int, ...]]:
    return sets.all() if isinstance(sets, LinkFlowSets) else dict(sets)


def detect_bottlenecks(
    sets: LinkFlowSets,
    states: Mapping[int, FlowState],
    capacities: Mapping[str, float],
    threshold: float = DEMAND_THRESHOLD,
) -> BottleneckSets:
    def hot(link, members, either_backlog):
        rate = 0.0
        for f in members:
            s = states[f]
            if s.L_s_end > 0 or (either_backlog and s.L_r_end > 0):
                return True
            rate += s.volume / s.interval
        return rate >= threshold * capacities[link]

    up = frozenset(l for l, fs in sets.uplinks.items() if fs and hot(l, fs, False))
    down = frozenset(l for l, fs in sets.downlinks.items() if fs and hot(l, fs, True))
    internal = frozenset(l for l, fs in sets.internal.items() if fs and hot(l, fs, False))
    flows = set()
    for group, chosen in ((sets.uplinks, up), (sets.downlinks, down), (sets.internal, internal)):
        for l in chosen:
            flows.update(group[l])
    return BottleneckSets(up, down, internal, frozenset(flows))


def _unpack(values):
    if isinstance(values, Mapping):
        keys = list(values)
        return keys, [float(values[k]) for k in keys]
    return None, [float(v) for v in values]


def _pack(keys, xs):
    return dict(zip(keys, xs)) if keys is not None else xs


def solve_uplink(weights: Union[Mapping[int, float], Sequence[float]], C: float):
    """Rates that equalize every flow's transfer time w/x while filling the link.

    Weights are expected to be already floored; the result has the same shape
    as the input (dict in, dict out; sequence in, list out).
    """
    keys, w = _unpack(weights)
    if not w:
        raise AllocationError("uplink solver needs at least one flow")
    if not C > 0:
        raise AllocationError(f"capacity must be > 0, got {C}")
    if min(w) <= 0:
        raise AllocationError("uplink weights must be > 0")
    total = math.fsum(w)
    return _pack(keys, [C * wi / total for wi in w])


def solve_downlink(
    backlogs: Union[Mapping[int, float], Sequence[float]],
    rates: Union[Mapping[int, float], Sequence[float]],
    C: float,
    dt: float,
):
    """Water-filled rates equalizing drain time (L + x*dt)/p across served flows.

    Flows whose backlog alone already outlasts the common drain time get 0.
    """
    keys, L = _unpack(backlogs)
    keys2, p = _unpack(rates)
    if keys is not None:
        if keys2 is None or set(keys) != set(keys2):
            raise AllocationError("backlogs and rates must cover the same flows")
        p = [float(rates[k]) for k in keys]
    if not L:
        raise AllocationError("downlink solver needs at least one flow")
    if len(L) != len(p):
        raise AllocationError("backlogs and rates differ in length")
    if not C > 0:
        raise AllocationError(f"capacity must be > 0, got {C}")
    if not dt > 0:
        raise AllocationError("dt must be > 0")
    if min(p) <= 0:
        raise AllocationError("processing rates must be > 0")

    n = len(L)
    active = [True] * n
    x = [0.0] * n
    while True:
        num = C * dt + math.fsum(L[i] for i in range(n) if active[i])
        den = math.fsum(p[i] for i in range(n) if active[i])
        theta = num / den
        dropped = False
        for i in range(n):
            if active[i]:
                x[i] = (theta * p[i] - L[i]) / dt
                if x[i] < 0:
                    active[i] = False
                    dropped = True
        if not dropped:
            break
    for i in range(n):
        if not active[i]:
            x[i] = 0.0
    # float residual only; the active-set level already sums to C
    residual = C - math.fsum(x)
    if residual > 0:
        ptot = math.fsum(p[i] for i in range(n) if x[i] > 0)
        if ptot > 0:
            x = [xi + residual * p[i] / ptot if xi > 0 else xi for i, xi in enumerate(x)]
    return _pack(keys, x)


def combine_min(xu: Mapping[int, float], xd: Mapping[int, float]) -> dict[int, float]:
    if set(xu) != set(xd):
        missing = sorted(set(xu) ^ set(xd))
        raise AllocationError(f"flows missing from one side: {missing}")
    return {f: min(xu[f], xd[f]) for f in xu}


def _scale_down(x: Mapping[int, float], link_flows: Mapping[str, Sequence[int]],
                capacities: Mapping[str, float]) -> dict[int, float]:
    out = dict(x)
    cand: dict[int, float] = {}
    for l, fs in link_flows.items():
        D = math.fsum(x.get(f, 0.0) for f in fs)
        C = capacities[l]
        if D > C:
            for f in fs:
                v = x[f] * C / D
                if v < cand.get(f, math.inf):
                    cand[f] = v
    for f, v in cand.items():
        out[f] = min(out[f], v)
    return out


def scale_internal(x: Mapping[int, float], internal_sets: Mapping[str, Sequence[int]],
                   capacities: Mapping[str, float]) -> dict[int, float]:
    """Shrink flows on overloaded internal links to C/D of their rate; minimum across links."""
    return _scale_down(x, internal_sets, capacities)


def enforce_capacity(x: Mapping[int, float], link_flows: Mapping[str, Sequence[int]],
                     capacities: Mapping[str, float]) -> dict[int, float]:
    """The same proportional scaling applied to every link, so the result is feasible."""
    out = _scale_down(x, link_flows, capacities)
    # a flow scaled by C/D on each overloaded link leaves every link at or below C,
    # up to rounding; clip that rounding away
    for l, fs in link_flows.items():
        D = math.fsum(out[f] for f in fs)
        if D > capacities[l]:
            k = capacities[l] / D
            for f in fs:
                out[f] *= k
    return out


def _routes(link_flows: Mapping[str, Sequence[int]]) -> dict[int, list[str]]:
    routes: dict[int, list[str]] = {}
    for l, fs in link_flows.items():
        for f in fs:
            routes.setdefault(f, []).append(l)
    return routes


def backfill(x: Mapping[int, float], link_flows, capacities: Mapping[str, float],
             passes: int = BACKFILL_PASSES) -> dict[int, float]:
    """Hand leftover link capacity to member flows in proportion to their rate.

    Only flows with headroom on every link of their route take part.  Grants
    are applied one flow at a time with residuals updated in between, so every
    intermediate vector is feasible.  A flow capped by another link part way
    through a pass gets less; what it leaves is offered again on the next pass.
    """
    link_flows = _link_map(link_flows)
    out = dict(x)
    routes = _routes(link_flows)
    residual = {l: capacities[l] - math.fsum(out.get(f, 0.0) for f in fs)
                for l, fs in link_flows.items()}
    for _ in range(passes):
        granted = False
        for l in sorted(link_flows):
            r = residual[l]
            if r <= FEAS_TOL:
                continue
            members = [f for f in link_flows[l] if out.get(f, 0.0) > 0
                       and min(residual[k] for k in routes[f]) > FEAS_TOL]
            base = math.fsum(out[f] for f in members)
            if base <= 0:
                continue
            for f in members:
                share = r * out[f] / base
                room = min(residual[k] for k in routes[f])
                g = min(share, room)
                if g <= 0:
                    continue
                out[f] += g
                for k in routes[f]:
                    residual[k] -= g
                granted = True
        if not granted:
            break
    return out


def allocate_step(
    states: Mapping[int, FlowState],
    sets: LinkFlowSets,
    capacities: Mapping[str, float],
    dt: Optional[float] = None,
    epoch: float = 0.0,
    eps_w: float = EPS_W,
    eps_p: float = EPS_P,
    passes: int = BACKFILL_PASSES,
) -> AllocationVector:
    """One allocation epoch from the flow states measured over the last interval.

    ``dt`` defaults to the interval recorded in the states.  Flows that cross
    no bottlenecked link keep their measured demand (floored at ``eps_p``).
    """
    b = detect_bottlenecks(sets, states, capacities)
    flows = sorted(sets.flows())
    x = {f: max(demand_proxy(states[f]), eps_p) for f in flows}
    if not b:
        return AllocationVector(x, epoch)

    xu, xd = {}, {}
    for l in b.uplinks:
        fs = sets.uplinks[l]
        xu.update(solve_uplink({f: max(uplink_weight(states[f]), eps_w) for f in fs}, capacities[l]))
    for l in b.downlinks:
        fs = sets.downlinks[l]
        step = dt if dt is not None else states[fs[0]].interval
        xd.update(solve_downlink({f: states[f].L_r_end for f in fs},
                                 {f: max(processing_rate(states[f]), eps_p) for f in fs},
                                 capacities[l], step))
    both = xu.keys() & xd.keys()
    for f in both:
        x[f] = min(xu[f], xd[f])
    for f in xu.keys() - both:
        x[f] = xu[f]
    for f in xd.keys() - both:
        x[f] = xd[f]

    x = scale_internal(x, {l: sets.internal[l] for l in b.internal}, capacities)
    all_links = sets.all()
    x = enforce_capacity(x, all_links, capacities)
    x = backfill(x, all_links, capacities, passes)
    return AllocationVector(x, epoch)


def maxmin_baseline(
    sets,
    capacities: Mapping[str, float],
    demands: Mapping[int, float],
    epoch: float = 0.0,
) -> AllocationVector:
    """Demand-bounded max-min fair rates by progressive filling.

    Flows absent from every link set are limited only by their demand.
    """
    link_flows = _link_map(sets)
    for f, d in demands.items():
        if d < 0:
            raise AllocationError(f"flow {f}: demand must be >= 0")
    rate = {f: 0.0 for f in demands}
    routes = _routes(link_flows)
    for f in routes:
        if f not in rate:
            raise AllocationError(f"flow {f} has no demand")
    remaining = {l: float(capacities[l]) for l in link_flows}
    active_links = {l: [f for f in fs] for l, fs in link_flows.items() if fs}
    frozen = set()
    for f, d in demands.items():
        if f not in routes:
            rate[f] = d
            frozen.add(f)
        elif d <= 0:
            frozen.add(f)
    unfrozen_on = {l: sum(1 for f in fs if f not in frozen) for l, fs in active_links.items()}

    while len(frozen) < len(rate):
        delta = math.inf
        for l, n in unfrozen_on.items():
            if n:
                delta = min(delta, remaining[l] / n)
        for f in rate:
            if f not in frozen:
                delta = min(delta, demands[f] - rate[f])
        if delta == math.inf:
            break
        delta = max(delta, 0.0)
        for f in rate:
            if f not in frozen:
                rate[f] += delta
        for l, n in unfrozen_on.items():
            if n:
                remaining[l] -= delta * n
        newly = set()
        for l, n in unfrozen_on.items():
            if n and remaining[l] <= FEAS_TOL * max(1.0, capacities[l]):
                newly.update(f for f in active_links[l] if f not in frozen)
        for f in rate:
            if f not in frozen and rate[f] >= demands[f] - FEAS_TOL * max(1.0, demands[f]):
                newly.add(f)
        if not newly:
            break
        for f in newly:
            frozen.add(f)
            for l in routes.get(f, ()):
                unfrozen_on[l] -= 1
    return AllocationVector(rate, epoch)


def check_feasible(x: Mapping[int, float], link_flows, capacities: Mapping[str, float],
                   tol: float = FEAS_TOL) -> list[tuple[str, float, float]]:
    """Violations as (link, load, capacity); empty when every link fits."""
    bad = []
    for l, fs in _link_map(link_flows).items():
        load = math.fsum(x.get(f, 0.0) for f in fs)
        if load > capacities[l] + tol:
            bad.append((l, load, capacities[l]))
        if any(x.get(f, 0.0) < 0 for f in fs):
            bad.append((l, min(x.get(f, 0.0) for f in fs), capacities[l]))
    return bad
