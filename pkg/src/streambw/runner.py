"""Experiment grid: scenario x allocator x capacity (x alpha for app_fair)."""
from __future__ import annotations

import csv
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .scenario import Scenario
from .sim.engine import APP_AWARE, APP_FAIR, MAXMIN_TCP, simulate
from .sim.metrics import collect_metrics, write_outputs

COLUMNS = ["scenario", "allocator", "capacity_mbps", "alpha", "throughput", "latency_mean",
           "latency_p99", "utilization", "saturated_utilization", "jain", "violations", "status"]


@dataclass(frozen=True)
class Cell:
    allocator: str
    mbps: Optional[float] = None
    alpha: Optional[float] = None

    @property
    def label(self) -> str:
        parts = [self.allocator]
        if self.mbps is not None:
            parts.append(f"{_num(self.mbps)}mbps")
        if self.alpha is not None:
            parts.append(f"alpha{_num(self.alpha)}")
        return "_".join(parts)


def _num(v) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


@dataclass
class ComparisonTable:
    rows: list[dict] = field(default_factory=list)

    @property
    def has_improvement(self) -> bool:
        return any("tp_improvement" in r for r in self.rows)

    def columns(self) -> list[str]:
        cols = list(COLUMNS)
        if self.has_improvement:
            cols[-1:-1] = ["tp_improvement", "latency_improvement"]
        return cols

    def add_improvements(self):
        """Relative gain of app_aware over maxmin_tcp at the same capacity: (A - B) / B."""
        base = {r["capacity_mbps"]: r for r in self.rows
                if r["allocator"] == MAXMIN_TCP and r["status"] == "ok"}
        for r in self.rows:
            b = base.get(r["capacity_mbps"])
            if r["allocator"] != APP_AWARE or r["status"] != "ok" or b is None:
                continue
            if b["throughput"]:
                r["tp_improvement"] = (r["throughput"] - b["throughput"]) / b["throughput"]
            if b["latency_mean"] and r["latency_mean"] is not None:
                r["latency_improvement"] = (b["latency_mean"] - r["latency_mean"]) / b["latency_mean"]

    @property
    def failed(self) -> bool:
        return any(r["status"] != "ok" for r in self.rows)

    def _cells(self, r) -> list[str]:
        out = []
        for c in self.columns():
            v = r.get(c)
            if v is None:
                out.append("")
            elif isinstance(v, float):
                out.append(f"{v:.4f}")
            else:
                out.append(str(v))
        return out

    def write_csv(self, path: str):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns())
            for r in self.rows:
                w.writerow(self._cells(r))

    def to_text(self) -> str:
        cols = self.columns()
        body = [self._cells(r) for r in self.rows]
        widths = [max(len(c), *(len(b[i]) for b in body)) if body else len(c) for i, c in enumerate(cols)]
        lines = ["  ".join(c.ljust(w) for c, w in zip(cols, widths))]
        lines.append("  ".join("-" * w for w in widths))
        lines += ["  ".join(v.ljust(w) for v, w in zip(b, widths)) for b in body]
        return "\n".join(lines) + "\n"


def cells_for(scenario: Scenario, allocators: Optional[Sequence[str]] = None, sweep: bool = True,
              alpha: Optional[float] = None) -> list[Cell]:
    allocators = list(allocators or scenario.allocators)
    if scenario.sweep_mbps:
        caps = list(scenario.sweep_mbps) if sweep else [scenario.sweep_mbps[0]]
    else:
        caps = [None]
    cells = []
    for mbps in caps:
        for a in allocators:
            if a == APP_FAIR:
                alphas = [alpha] if alpha is not None else list(scenario.alphas) or [None]
                cells += [Cell(a, mbps, al) for al in alphas]
            else:
                cells.append(Cell(a, mbps))
    return cells


def run_cell(scenario: Scenario, cell: Cell, out_dir: Optional[str] = None, **overrides) -> dict:
    row = {"scenario": scenario.name, "allocator": cell.allocator, "capacity_mbps": cell.mbps,
           "alpha": cell.alpha}
    try:
        cfg = scenario.config(cell.allocator, cell.mbps, cell.alpha, **overrides)
        res = simulate(scenario.topology, scenario.apps, cfg)
        rep = collect_metrics(res)
        if out_dir is not None:
            write_outputs(res, rep, os.path.join(out_dir, cell.label), scenario.name)
        row.update(throughput=rep.throughput, latency_mean=rep.latency_mean,
                   latency_p99=rep.latency_p99, utilization=rep.utilization,
                   saturated_utilization=rep.saturated_utilization, jain=rep.jain,
                   violations=rep.violations, status="ok")
        row["_report"] = rep
    except Exception as ex:  # a failed cell must not stop the grid
        row["status"] = f"failed: {type(ex).__name__}: {ex}"
        row["_trace"] = traceback.format_exc()
    return row


def _run_cell_args(args):
    scenario, cell, out_dir, overrides = args
    row = run_cell(scenario, cell, out_dir, **overrides)
    row.pop("_report", None)
    return row


def run_matrix(scenario: Scenario, allocators: Optional[Sequence[str]] = None, out_dir: Optional[str] = None,
               sweep: bool = True, alpha: Optional[float] = None, jobs: int = 1,
               **overrides) -> ComparisonTable:
    """Run every cell; write per-cell outputs and the comparison table under ``out_dir``."""
    cells = cells_for(scenario, allocators, sweep, alpha)
    if jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_run_cell_args, [(scenario, c, out_dir, overrides) for c in cells]))
    else:
        rows = [run_cell(scenario, c, out_dir, **overrides) for c in cells]
    table = ComparisonTable(rows)
    if len(rows) > 1:
        table.add_improvements()
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        table.write_csv(os.path.join(out_dir, "comparison.csv"))
        with open(os.path.join(out_dir, "comparison.txt"), "w") as fh:
            fh.write(table.to_text())
    return table
