"""Run summaries and on-disk traces.

All statistics skip the warm-up epochs; the traces keep them.  Output files
are written with fixed formatting so equal runs produce identical bytes.
"""
from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from ..fairness import jain_index
from .engine import BYTES_PER_MB, RunResult

SATURATED_FRACTION = 0.5


@dataclass
class MetricsReport:
    app_throughput: dict[int, float]  # tuples/s at sinks, run mean
    app_throughput_series: dict[int, list[float]]  # per sample period
    throughput: float  # all apps
    latency_mean: Optional[float]
    latency_p50: Optional[float]
    latency_p99: Optional[float]
    latency_samples: int
    link_utilization: dict[str, float]  # links flagged bottlenecked in any epoch
    utilization: Optional[float]
    saturated_links: list[str]
    saturated_utilization: Optional[float]
    jain: Optional[float]
    max_zero_epochs: dict[int, int]  # longest run of epochs with no sink output
    violations: int
    internal_violations: int
    allocations_checked: int
    max_sender_residual: int
    max_receiver_residual: int
    conservation: dict = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)


def _round(v):
    return None if v is None else float(v)


def collect_metrics(res: RunResult) -> MetricsReport:
    cfg = res.config
    warm = cfg.warmup_epochs * cfg.alloc_period
    end = cfg.duration
    span = end - warm
    notes = []
    if span <= 0:
        raise ValueError("warm-up covers the whole run")

    sel = (res.done_time >= warm) & (res.done_time < end)
    lat = res.done_latency[sel]
    apps = sorted(res.app_names)
    n_samples = int(round(end / cfg.sample_period))
    first = int(round(warm / cfg.sample_period))
    app_tp, series = {}, {}
    for a in apps:
        t = res.done_time[(res.done_app == a) & (res.done_time < end)]
        counts = np.bincount((t // cfg.sample_period).astype(np.int64), minlength=n_samples)[:n_samples]
        series[a] = (counts / cfg.sample_period).tolist()
        app_tp[a] = float(counts[first:].sum() / span)
    total = float(sum(app_tp.values()))

    # longest stretch of whole epochs without any sink completion
    n_epochs = int(round(end / cfg.alloc_period))
    zero_run = {}
    for a in apps:
        t = res.done_time[(res.done_app == a) & (res.done_time < end)]
        per_epoch = np.bincount((t // cfg.alloc_period).astype(np.int64), minlength=n_epochs)[:n_epochs]
        best = run = 0
        for c in per_epoch[cfg.warmup_epochs:]:
            run = run + 1 if c == 0 else 0
            best = max(best, run)
        zero_run[a] = int(best)

    post = [i for i, t in enumerate(res.epoch_times) if t >= warm - 1e-9]
    flagged = sorted(set().union(*(res.flagged[i] for i in post))) if post else []
    caps = res.topology.capacities()
    link_util = {}
    for l in flagged:
        carried = res.link_carried[l][first:]
        link_util[l] = float(carried.sum() / (caps[l] * BYTES_PER_MB * span))
    if not flagged:
        notes.append("no bottlenecked link in this run")
    saturated = []
    for l in flagged:
        hot = sum(1 for i in post if l in res.filled[i])
        if post and hot >= SATURATED_FRACTION * len(post):
            saturated.append(l)

    return MetricsReport(
        app_throughput=app_tp,
        app_throughput_series=series,
        throughput=total,
        latency_mean=_round(lat.mean()) if len(lat) else None,
        latency_p50=_round(np.percentile(lat, 50)) if len(lat) else None,
        latency_p99=_round(np.percentile(lat, 99)) if len(lat) else None,
        latency_samples=int(len(lat)),
        link_utilization=link_util,
        utilization=float(np.mean(list(link_util.values()))) if link_util else None,
        saturated_links=saturated,
        saturated_utilization=float(np.mean([link_util[l] for l in saturated])) if saturated else None,
        jain=jain_index(app_tp.values()) if len(apps) > 1 and total > 0 else None,
        max_zero_epochs=zero_run,
        violations=res.violations,
        internal_violations=res.internal_violations,
        allocations_checked=res.allocations_checked,
        max_sender_residual=res.max_sender_residual,
        max_receiver_residual=res.max_receiver_residual,
        conservation={str(a): dict(sorted(c.items())) for a, c in sorted(res.conservation.items())},
        notes=notes,
    )


def _fmt(v) -> str:
    return repr(float(v))


def summary_dict(res: RunResult, report: MetricsReport, scenario_name: str = "") -> dict:
    d = asdict(report)
    d.pop("app_throughput_series")
    d["app_throughput"] = {f"{a}:{res.app_names[a]}": v for a, v in report.app_throughput.items()}
    d["max_zero_epochs"] = {f"{a}:{res.app_names[a]}": v for a, v in report.max_zero_epochs.items()}
    d["config"] = res.config.echo()
    d["scenario"] = scenario_name
    return d


def write_outputs(res: RunResult, report: MetricsReport, out_dir: str, scenario_name: str = ""):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "flow_states.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "flow_id", "L_s_start", "L_r_start", "volume", "L_s_end", "L_r_end"])
        for t, fid, *vals in res.state_rows:
            w.writerow([_fmt(t), fid] + [_fmt(v) for v in vals])
    with open(os.path.join(out_dir, "allocations.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "flow_id", "rate_mbps"])
        for t, fid, mbs in res.alloc_rows:
            w.writerow([_fmt(t), fid, _fmt(mbs * 8.0)])
    with open(os.path.join(out_dir, "metrics.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "app_id", "throughput", "link_id", "utilization"])
        cfg = res.config
        caps = res.topology.capacities()
        n = len(next(iter(report.app_throughput_series.values()), []))
        for s in range(n):
            t = _fmt(s * cfg.sample_period)
            for a in sorted(report.app_throughput_series):
                w.writerow([t, a, _fmt(report.app_throughput_series[a][s]), "", ""])
            for l in sorted(res.link_carried):
                if res.link_flows[l]:
                    u = res.link_carried[l][s] / (caps[l] * BYTES_PER_MB * cfg.sample_period)
                    w.writerow([t, "", "", l, _fmt(u)])
    with open(os.path.join(out_dir, "groups.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "app_id", "level", "mu_ewma"])
        for t, a, lvl, mu in res.group_rows:
            w.writerow([_fmt(t), a, lvl, _fmt(mu)])
    with open(os.path.join(out_dir, "flows.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["flow_id", "app_id", "src", "dst", "src_machine", "dst_machine", "route"])
        for f in res.flows:
            w.writerow([f.id, f.app_id, str(f.src_instance), str(f.dst_instance),
                        f.src_machine, f.dst_machine, " ".join(f.route)])
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(summary_dict(res, report, scenario_name), fh, indent=2, sort_keys=True)
        fh.write("\n")
