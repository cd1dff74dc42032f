"""Application-level bandwidth sharing.

Each application's throughput is tracked as a blend of its long-run mean and
its last-interval value.  Applications are bucketed into priority levels
(lowest blended throughput first) and every link serves the levels in strict
priority order: inside a level the capacity is split equally per application,
then max-min among that application's flows.  Applications stuck at zero for
too long are promoted a level.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence


class FairnessError(ValueError):
    pass


@dataclass(frozen=True)
class AppThroughputRecord:
    app_id: int
    mu_cum: float = 0.0  # running mean over all observed epochs
    mu_recent: float = 0.0
    mu_ewma: float = 0.0
    epochs: int = 0


@dataclass(frozen=True)
class FairnessConfig:
    alpha: float = 0.5
    regroup_period: Optional[float] = None  # seconds; None regroups every epoch
    m: int = 8
    starvation_threshold: int = 3

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise FairnessError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.m < 1:
            raise FairnessError("m must be >= 1")
        if self.starvation_threshold < 1:
            raise FairnessError("starvation_threshold must be >= 1")
        if self.regroup_period is not None and not self.regroup_period > 0:
            raise FairnessError("regroup_period must be > 0")


def ewma_update(record: AppThroughputRecord, mu_recent: float, alpha: float) -> AppThroughputRecord:
    if not 0.0 <= alpha <= 1.0:
        raise FairnessError(f"alpha must be in [0, 1], got {alpha}")
    if mu_recent < 0:
        raise FairnessError("throughput must be >= 0")
    blended = alpha * record.mu_cum + (1.0 - alpha) * mu_recent
    n = record.epochs
    cum = (record.mu_cum * n + mu_recent) / (n + 1)
    return AppThroughputRecord(record.app_id, cum, mu_recent, blended, n + 1)


@dataclass(frozen=True)
class PriorityGroups:
    queues: tuple[tuple[int, ...], ...]  # queues[0] is served first

    @property
    def m(self) -> int:
        return len(self.queues)

    def level_of(self, app_id: int) -> int:
        for i, q in enumerate(self.queues):
            if app_id in q:
                return i
        raise KeyError(app_id)

    def apps(self) -> list[int]:
        return [a for q in self.queues for a in q]


def group_apps(records: Iterable[AppThroughputRecord], m: int) -> PriorityGroups:
    """Sort by blended throughput and cut into ``m`` near-equal contiguous buckets.

    The first ``n % m`` buckets get one extra member; empty buckets are dropped.
    """
    recs = sorted(records, key=lambda r: (r.mu_ewma, r.app_id))
    if not recs:
        raise FairnessError("no applications to group")
    if m < 1:
        raise FairnessError("m must be >= 1")
    n = len(recs)
    queues, pos = [], 0
    for i in range(m):
        size = n // m + (1 if i < n % m else 0)
        if size:
            queues.append(tuple(r.app_id for r in recs[pos:pos + size]))
        pos += size
    return PriorityGroups(tuple(queues))


def _water_fill(capacity: float, demands: Sequence[float]) -> list[float]:
    """Max-min split of ``capacity`` among claimants capped by their demand."""
    n = len(demands)
    out = [0.0] * n
    order = sorted(range(n), key=lambda i: demands[i])
    left = capacity
    for k, i in enumerate(order):
        share = left / (n - k)
        out[i] = min(demands[i], share)
        left -= out[i]
    return out


def schedule_link(
    capacity: float,
    flow_app: Mapping[int, int],
    groups: PriorityGroups,
    demands: Optional[Mapping[int, float]] = None,
) -> dict[int, float]:
    """Per-flow rate caps on one link under strict priority between levels.

    ``demands`` defaults to unbounded.
    """
    if demands is None:
        demands = {f: math.inf for f in flow_app}
    by_app: dict[int, list[int]] = {}
    for f in sorted(flow_app):
        by_app.setdefault(flow_app[f], []).append(f)
    missing = set(by_app) - set(groups.apps())
    if missing:
        raise FairnessError(f"apps {sorted(missing)} are in no group")
    caps = {f: 0.0 for f in flow_app}
    left = capacity
    for q in groups.queues:
        apps = [a for a in q if a in by_app]
        if not apps or left <= 0:
            continue
        app_demand = [math.fsum(demands[f] for f in by_app[a]) for a in apps]
        app_share = _water_fill(left, app_demand)
        for a, s in zip(apps, app_share):
            fs = by_app[a]
            for f, r in zip(fs, _water_fill(s, [demands[f] for f in fs])):
                caps[f] = r
        left -= math.fsum(app_share)
        left = max(left, 0.0)
    return caps


def rotate_for_starvation(groups: PriorityGroups, starved: Mapping[int, int],
                          threshold: int) -> PriorityGroups:
    """Move every app starved for ``threshold`` or more epochs one level up."""
    if threshold < 1:
        raise FairnessError("threshold must be >= 1")
    queues = [list(q) for q in groups.queues]
    movers = [a for a in groups.apps() if starved.get(a, 0) >= threshold]
    for a in movers:
        lvl = groups.level_of(a)
        if lvl == 0:
            continue
        queues[lvl].remove(a)
        queues[lvl - 1].append(a)
    return PriorityGroups(tuple(tuple(q) for q in queues if q))


def jain_index(values: Iterable[float]) -> float:
    xs = [float(v) for v in values]
    if not xs:
        raise FairnessError("jain index of nothing")
    if any(v < 0 for v in xs):
        raise FairnessError("jain index needs non-negative values")
    top = max(xs)
    if top == 0:
        raise FairnessError("jain index undefined for all-zero input")
    xs = [v / top for v in xs]  # scale-free; avoids underflow when squaring
    sq = math.fsum(v * v for v in xs)
    return math.fsum(xs) ** 2 / (len(xs) * sq)


class FairScheduler:
    """Mutable per-run state: throughput records, groups and starvation counters."""

    def __init__(self, app_ids: Iterable[int], config: FairnessConfig = FairnessConfig()):
        self.config = config
        self.records = {a: AppThroughputRecord(a) for a in sorted(app_ids)}
        self.starved = {a: 0 for a in self.records}
        # nothing observed yet: everyone shares one level
        self.groups = PriorityGroups((tuple(self.records),))
        self._last_regroup: Optional[float] = None

    def observe(self, throughput: Mapping[int, float]):
        """Fold one epoch of per-app throughput (MB/s) into the records."""
        for a in self.records:
            mu = throughput.get(a, 0.0)
            self.records[a] = ewma_update(self.records[a], mu, self.config.alpha)
            self.starved[a] = self.starved[a] + 1 if mu <= 0 else 0

    def regroup(self, t: float) -> PriorityGroups:
        period = self.config.regroup_period
        if self._last_regroup is None or period is None or t - self._last_regroup >= period - 1e-9:
            self.groups = group_apps(self.records.values(), self.config.m)
            self._last_regroup = t
        self.groups = rotate_for_starvation(self.groups, self.starved, self.config.starvation_threshold)
        return self.groups

    def allocate(self, link_flows: Mapping[str, Sequence[int]], capacities: Mapping[str, float],
                 flow_app: Mapping[int, int], demands: Mapping[int, float]) -> dict[int, float]:
        """Per-flow rates: the tightest of the per-link caps, demand for link-free flows."""
        rates = {f: demands[f] for f in demands}
        for l, fs in link_flows.items():
            if not fs:
                continue
            caps = schedule_link(capacities[l], {f: flow_app[f] for f in fs}, self.groups,
                                 {f: demands[f] for f in fs})
            for f, c in caps.items():
                if c < rates[f]:
                    rates[f] = c
        return rates
