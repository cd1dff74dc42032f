"""Per-flow send/receive queue accounting and the 5-metric interval state.

Volume counts whole tuples that finished crossing the route; a tuple still
being serialized stays in the sender backlog until its last byte lands.  With
that convention both conservation identities are exact:

    L_s_end = L_s_start + generated - volume
    L_r_end = L_r_start + volume - processed
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable


@dataclass
class FlowQueues:
    """Live backlog (MB) at both endpoints of one flow plus cumulative counters."""

    send_backlog: float = 0.0
    recv_backlog: float = 0.0
    generated: float = 0.0
    volume: float = 0.0
    processed: float = 0.0

    def enqueue(self, mb: float):
        self.send_backlog += mb
        self.generated += mb

    def deliver(self, mb: float):
        self.send_backlog -= mb
        self.recv_backlog += mb
        self.volume += mb

    def consume(self, mb: float):
        self.recv_backlog -= mb
        self.processed += mb


@dataclass(frozen=True)
class FlowState:
    L_s_start: float
    L_r_start: float
    volume: float
    L_s_end: float
    L_r_end: float
    interval: float
    # not part of the 5-metric tuple; kept for the conservation checks
    generated: float = 0.0
    processed: float = 0.0

    def __post_init__(self):
        if not self.interval > 0:
            raise ValueError("interval must be > 0")

    def metrics(self) -> tuple[float, float, float, float, float]:
        return (self.L_s_start, self.L_r_start, self.volume, self.L_s_end, self.L_r_end)


@dataclass(frozen=True)
class IntervalClock:
    t: float = 0.0
    sample_period: float = 1.0
    alloc_period: float = 5.0

    def __post_init__(self):
        if not (self.sample_period > 0 and self.alloc_period > 0):
            raise ValueError("periods must be > 0")
        ratio = self.alloc_period / self.sample_period
        if self.sample_period > self.alloc_period or abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("alloc_period must be an integer multiple of sample_period")

    @property
    def samples_per_alloc(self) -> int:
        return int(round(self.alloc_period / self.sample_period))


class FlowProfiler:
    """Snapshots ``FlowQueues`` at allocation boundaries.

    The simulation engine owns the queues and mutates them; the profiler only
    reads them.  ``unit`` is the number of queue units per MB (the engine
    counts integer bytes, so the identities hold exactly in queue units).
    """

    def __init__(self, queues: dict[int, FlowQueues], unit: float = 1.0):
        self.queues = queues
        self.unit = unit
        self._start: dict[int, tuple[float, ...]] = {}
        self._t0 = 0.0

    def begin_interval(self, t: float, flows: Iterable[int] = None) -> dict[int, tuple[float, float]]:
        self._t0 = t
        ids = self.queues.keys() if flows is None else flows
        self._start = {}
        out = {}
        for fid in ids:
            q = self.queues[fid]
            self._start[fid] = (q.send_backlog, q.recv_backlog, q.generated, q.volume, q.processed)
            out[fid] = (q.send_backlog, q.recv_backlog)
        return out

    def end_interval(self, fid: int, t: float) -> FlowState:
        ls, lr, gen, vol, proc = self._start[fid]
        q = self.queues[fid]
        u = self.unit
        return FlowState(
            L_s_start=ls / u,
            L_r_start=lr / u,
            volume=(q.volume - vol) / u,
            L_s_end=q.send_backlog / u,
            L_r_end=q.recv_backlog / u,
            interval=t - self._t0,
            generated=(q.generated - gen) / u,
            processed=(q.processed - proc) / u,
        )

    def residuals(self, fid: int) -> tuple[float, float]:
        """Sender and receiver conservation residuals since begin_interval, in queue units."""
        ls, lr, gen, vol, proc = self._start[fid]
        q = self.queues[fid]
        snd = q.send_backlog - (ls + (q.generated - gen) - (q.volume - vol))
        rcv = q.recv_backlog - (lr + (q.volume - vol) - (q.processed - proc))
        return snd, rcv

    def end_all(self, t: float) -> dict[int, FlowState]:
        return {fid: self.end_interval(fid, t) for fid in self._start}


def sender_residual(s: FlowState) -> float:
    """Zero when sender conservation holds."""
    return s.L_s_end - (s.L_s_start + s.generated - s.volume)


def receiver_residual(s: FlowState) -> float:
    return s.L_r_end - (s.L_r_start + s.volume - s.processed)
