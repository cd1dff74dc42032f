"""Source emission schedules and the two reference stream applications.

A workload maps every source operator to a ``StreamSpec``; ``schedule``
expands it into concrete emission times and keys per source replica.  Each
replica draws from its own generator seeded from (seed, app, operator,
replica), so adding an application never perturbs another's arrivals.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Optional

import numpy as np

from ..appgraph import (AppDag, Edge, Instance, OperatorSpec, SINK, SOURCE, all_, global_,
                        key_based, shuffle)

POISSON, CONSTANT = "poisson", "constant"


class WorkloadError(ValueError):
    pass


@dataclass(frozen=True)
class StreamSpec:
    rate: float  # tuples/s per source replica
    process: str = POISSON
    key_count: int = 1
    skew: float = 0.0
    pause: Optional[tuple[float, float]] = None  # no emissions in [start, end)

    def __post_init__(self):
        if self.rate < 0:
            raise WorkloadError("rate must be >= 0")
        if self.process not in (POISSON, CONSTANT):
            raise WorkloadError(f"unknown arrival process {self.process!r}")
        if self.key_count < 1:
            raise WorkloadError("key_count must be >= 1")
        if self.skew < 0:
            raise WorkloadError("skew must be >= 0")
        if self.pause is not None and not self.pause[0] <= self.pause[1]:
            raise WorkloadError("pause window must have start <= end")


class Emissions(NamedTuple):
    times: np.ndarray  # seconds, sorted
    keys: np.ndarray


def zipf_probs(key_count: int, skew: float) -> np.ndarray:
    """P(key k) proportional to 1/(k+1)^skew for k in [0, key_count)."""
    w = np.arange(1, key_count + 1, dtype=float) ** -skew
    return w / w.sum()


def emission_times(rng: np.random.Generator, spec: StreamSpec, duration: float) -> np.ndarray:
    if spec.rate == 0 or duration <= 0:
        return np.empty(0)
    if spec.process == CONSTANT:
        n = int(np.ceil(duration * spec.rate))
        t = np.arange(n) / spec.rate
        t = t[t < duration]
    else:
        chunks, last = [], 0.0
        block = max(16, int(duration * spec.rate * 1.1) + 16)
        while last < duration:
            c = last + np.cumsum(rng.exponential(1.0 / spec.rate, block))
            chunks.append(c)
            last = c[-1]
        t = np.concatenate(chunks)
        t = t[t < duration]
    if spec.pause is not None:
        a, b = spec.pause
        t = t[(t < a) | (t >= b)]
    return t


def gen_stream(rng: np.random.Generator, spec: StreamSpec, duration: float) -> Emissions:
    times = emission_times(rng, spec, duration)
    if spec.key_count == 1:
        keys = np.zeros(len(times), dtype=np.int64)
    else:
        keys = rng.choice(spec.key_count, size=len(times), p=zipf_probs(spec.key_count, spec.skew))
    return Emissions(times, keys)


@dataclass(frozen=True)
class Workload:
    streams: Mapping[str, StreamSpec] = field(hash=False)

    def validate(self, dag: AppDag) -> list[str]:
        errs = []
        sources = {o.name for o in dag.operators if o.kind == SOURCE}
        for name in self.streams:
            if name not in sources:
                errs.append(f"workload names {name!r} which is not a source of {dag.name}")
        for name in sorted(sources - set(self.streams)):
            errs.append(f"source {name!r} of {dag.name} has no workload")
        return errs

    def schedule(self, dag: AppDag, duration: float, seed: int, app_index: int = 0
                 ) -> dict[Instance, Emissions]:
        errs = self.validate(dag)
        if errs:
            raise WorkloadError("; ".join(errs))
        out = {}
        for op_index, op in enumerate(dag.operators):
            if op.kind != SOURCE:
                continue
            spec = self.streams[op.name]
            for r in range(op.parallelism):
                ss = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, app_index, op_index, r])
                out[Instance(op.name, r)] = gen_stream(np.random.default_rng(ss), spec, duration)
        return out


def gen_tt_workload(rate: float = 1000.0, key_count: int = 64, skew: float = 1.0,
                    source: str = "tweets", process: str = POISSON) -> Workload:
    """Poisson tweet arrivals with Zipf-distributed word keys."""
    return Workload({source: StreamSpec(rate, process, key_count, skew)})


def gen_ti_workload(truck_rate: float = 250.0, congestion_rate: float = 250.0,
                    congestion_pause: Optional[tuple[float, float]] = None,
                    process: str = CONSTANT) -> Workload:
    """Two independent streams: truck positions and congestion reports."""
    return Workload({
        "truck_source": StreamSpec(truck_rate, process),
        "congestion_source": StreamSpec(congestion_rate, process, pause=congestion_pause),
    })


def ti_app(truck_kb: float = 16.0, congestion_kb: float = 4.0, app_id: int = 0,
           combiner_rate: float = 2000.0, name: str = "ti") -> AppDag:
    """Truck stream joined with the latest congestion data, then reported."""
    if not (truck_kb > 0 and congestion_kb > 0):
        raise WorkloadError("tuple sizes must be > 0")
    ops = (
        OperatorSpec("truck_source", kind=SOURCE, out_tuple_size=truck_kb / 1000),
        OperatorSpec("congestion_source", kind=SOURCE, out_tuple_size=congestion_kb / 1000),
        OperatorSpec("combiner", service_rate=combiner_rate, out_tuple_size=0.1 / 1000, join=True,
                     emit_on=("truck_source",)),
        OperatorSpec("report", kind=SINK, service_rate=1e5),
    )
    edges = (
        Edge("truck_source", "combiner", shuffle()),
        Edge("congestion_source", "combiner", all_()),
        Edge("combiner", "report", shuffle()),
    )
    return AppDag(ops, edges, app_id, name)


def tt_app(counters: int = 6, window_factor: int = 10, tweet_kb: float = 0.2,
           aggregate_kb: float = 40.0, key_count: int = 64, skew: float = 1.0,
           app_id: int = 0, name: str = "tt") -> AppDag:
    """Tweets -> split -> keyed word counters -> global top-k aggregator -> report.

    Each counter emits one aggregate per ``window_factor`` inputs; with skewed
    keys the counters' outbound flows to the aggregator have unequal sizes.
    """
    ops = (
        OperatorSpec("tweets", kind=SOURCE, out_tuple_size=tweet_kb / 1000),
        OperatorSpec("split", service_rate=5000.0, out_tuple_size=tweet_kb / 1000),
        OperatorSpec("count", parallelism=counters, service_rate=5000.0,
                     selectivity=1.0 / window_factor, out_tuple_size=aggregate_kb / 1000),
        OperatorSpec("topk", service_rate=5000.0, out_tuple_size=0.1 / 1000, join=True),
        OperatorSpec("report", kind=SINK, service_rate=1e5),
    )
    edges = (
        Edge("tweets", "split", shuffle()),
        Edge("split", "count", key_based(key_count, skew)),
        Edge("count", "topk", global_(0)),
        Edge("topk", "report", shuffle()),
    )
    return AppDag(ops, edges, app_id, name)
