"""Scenario files: JSON description of fabric, applications, workload and sweep.

``parse_scenario`` validates everything up front and reports every problem
it finds in one error, so no simulation starts from a half-valid file.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Any, Optional

from .appgraph import (ALL, GLOBAL, KEY_BASED, SHUFFLE, SINK, SOURCE, TRANSFORM, AppDag,
                       AppGraphError, Edge, GroupingPolicy, OperatorSpec, expand, place_explicit,
                       place_round_robin)
from .fairness import FairnessConfig, FairnessError
from .sim.engine import ALLOCATORS, AppSetup, SimConfig, SimError
from .sim.workloads import (CONSTANT, POISSON, StreamSpec, Workload, WorkloadError, gen_ti_workload,
                            gen_tt_workload)
from .topology import LINK_KINDS, Topology, TopologyError, build_fat_tree, mbps_to_MBps


class ScenarioError(ValueError):
    def __init__(self, errors):
        self.errors = [errors] if isinstance(errors, str) else list(errors)
        super().__init__("\n".join(self.errors))


TOP_KEYS = {"name", "description", "topology", "apps", "sim", "allocators", "sweep", "fairness"}
TOPO_KEYS = {"racks", "machines_per_rack", "cores", "uplink_mbps", "downlink_mbps", "internal_mbps"}
APP_KEYS = {"name", "operators", "edges", "placement", "workload"}
OP_KEYS = {"name", "parallelism", "kind", "service_rate", "selectivity", "tuple_kb", "join", "emit_on"}
EDGE_KEYS = {"from", "to", "grouping"}
SIM_KEYS = {"duration", "sample_period", "delta_t", "substeps", "seed", "warmup_epochs"}
SWEEP_KEYS = {"link_kinds", "mbps"}
FAIR_KEYS = {"alpha", "alphas", "m", "regroup_period", "starvation_threshold"}
STREAM_KEYS = {"rate", "process", "key_count", "skew", "pause"}
WORKLOAD_KEYS = {
    "streams": {"kind", "streams"},
    "tt": {"kind", "rate", "key_count", "skew", "source", "process"},
    "ti": {"kind", "truck_rate", "congestion_rate", "congestion_pause", "process"},
}


@dataclass
class Scenario:
    name: str
    topology: Topology
    apps: list[AppSetup]
    sim: dict = field(default_factory=dict)
    allocators: tuple[str, ...] = ("app_aware", "maxmin_tcp")
    sweep_kinds: tuple[str, ...] = ()
    sweep_mbps: tuple[float, ...] = ()
    fairness: FairnessConfig = FairnessConfig()
    alphas: tuple[float, ...] = ()
    description: str = ""
    source: dict = field(default_factory=dict, repr=False)

    def config(self, allocator: str, mbps: Optional[float] = None, alpha: Optional[float] = None,
               **overrides) -> SimConfig:
        """SimConfig for one cell: file values, then sweep point, then flag overrides."""
        kw = {
            "duration": self.sim.get("duration", 600.0),
            "sample_period": self.sim.get("sample_period", 1.0),
            "alloc_period": self.sim.get("delta_t", 5.0),
            "substeps": self.sim.get("substeps", 10),
            "seed": self.sim.get("seed", 0),
            "warmup_epochs": self.sim.get("warmup_epochs", 2),
        }
        kw.update({k: v for k, v in overrides.items() if v is not None})
        caps = {}
        if mbps is not None:
            caps = {k: mbps_to_MBps(mbps) for k in self.sweep_kinds}
        fair = self.fairness if alpha is None else replace(self.fairness, alpha=alpha)
        return SimConfig(allocator=allocator, capacity_overrides=caps, fairness=fair, **kw)


def _unknown(d: dict, allowed: set, where: str, errs: list):
    for k in sorted(set(d) - allowed):
        errs.append(f"{where}: unknown key {k!r}")


def _num(d, key, where, errs, default=None, positive=False, integer=False, minimum=None):
    if key not in d:
        if default is None:
            errs.append(f"{where}: missing {key!r}")
        return default
    v = d[key]
    ok = isinstance(v, int) if integer else isinstance(v, (int, float))
    if isinstance(v, bool) or not ok:
        errs.append(f"{where}.{key}: expected {'an integer' if integer else 'a number'}, got {v!r}")
        return default
    if positive and not v > 0:
        errs.append(f"{where}.{key}: must be > 0, got {v!r}")
        return default
    if minimum is not None and v < minimum:
        errs.append(f"{where}.{key}: must be >= {minimum}, got {v!r}")
        return default
    return v


def _grouping(g, where, errs) -> Optional[GroupingPolicy]:
    if g in ("shuffle", "all"):
        return GroupingPolicy(SHUFFLE if g == "shuffle" else ALL)
    if isinstance(g, dict):
        t = g.get("type")
        if t == "global":
            _unknown(g, {"type", "target"}, where, errs)
            tgt = _num(g, "target", where, errs, default=0, integer=True, minimum=0)
            return GroupingPolicy(GLOBAL, target_index=tgt)
        if t == "key":
            _unknown(g, {"type", "key_count", "skew"}, where, errs)
            kc = _num(g, "key_count", where, errs, integer=True, minimum=1)
            sk = _num(g, "skew", where, errs, default=0.0, minimum=0)
            if kc is None:
                return None
            return GroupingPolicy(KEY_BASED, key_count=kc, skew=sk)
    errs.append(f"{where}: grouping must be 'shuffle', 'all', "
                f"{{'type': 'global', ...}} or {{'type': 'key', ...}}, got {g!r}")
    return None


def _operator(o, where, errs) -> Optional[OperatorSpec]:
    if not isinstance(o, dict):
        errs.append(f"{where}: expected an object")
        return None
    _unknown(o, OP_KEYS, where, errs)
    name = o.get("name")
    if not isinstance(name, str) or not name:
        errs.append(f"{where}: missing operator name")
        return None
    where = f"{where}({name})"
    kind = o.get("kind", TRANSFORM)
    if kind not in (SOURCE, TRANSFORM, SINK):
        errs.append(f"{where}.kind: must be source, transform or sink, got {kind!r}")
        return None
    kw = dict(
        name=name, kind=kind,
        parallelism=_num(o, "parallelism", where, errs, default=1, integer=True, minimum=1),
        service_rate=_num(o, "service_rate", where, errs, default=1000.0, positive=True),
        selectivity=_num(o, "selectivity", where, errs, default=1.0, minimum=0),
        out_tuple_size=_num(o, "tuple_kb", where, errs, default=1.0, positive=True) / 1000.0,
        join=bool(o.get("join", False)),
    )
    if "emit_on" in o:
        eo = o["emit_on"]
        if not (isinstance(eo, list) and all(isinstance(x, str) for x in eo)):
            errs.append(f"{where}.emit_on: expected a list of operator names")
        else:
            kw["emit_on"] = tuple(eo)
    try:
        return OperatorSpec(**kw)
    except AppGraphError as ex:
        errs.append(f"{where}: {ex}")
        return None


def _stream(s, where, errs) -> Optional[StreamSpec]:
    if not isinstance(s, dict):
        errs.append(f"{where}: expected an object")
        return None
    _unknown(s, STREAM_KEYS, where, errs)
    rate = _num(s, "rate", where, errs, minimum=0)
    proc = s.get("process", POISSON)
    if proc not in (POISSON, CONSTANT):
        errs.append(f"{where}.process: must be poisson or constant, got {proc!r}")
        return None
    pause = s.get("pause")
    if pause is not None and not (isinstance(pause, list) and len(pause) == 2):
        errs.append(f"{where}.pause: expected [start, end]")
        return None
    if rate is None:
        return None
    try:
        return StreamSpec(rate, proc, _num(s, "key_count", where, errs, default=1, integer=True, minimum=1),
                          _num(s, "skew", where, errs, default=0.0, minimum=0),
                          tuple(pause) if pause else None)
    except WorkloadError as ex:
        errs.append(f"{where}: {ex}")
        return None


def _workload(w, where, errs) -> Optional[Workload]:
    if not isinstance(w, dict):
        errs.append(f"{where}: missing workload section")
        return None
    kind = w.get("kind", "streams")
    if kind not in WORKLOAD_KEYS:
        errs.append(f"{where}.kind: must be one of {sorted(WORKLOAD_KEYS)}, got {kind!r}")
        return None
    _unknown(w, WORKLOAD_KEYS[kind], where, errs)
    try:
        if kind == "tt":
            return gen_tt_workload(
                rate=_num(w, "rate", where, errs, default=1000.0, minimum=0),
                key_count=_num(w, "key_count", where, errs, default=64, integer=True, minimum=1),
                skew=_num(w, "skew", where, errs, default=1.0, minimum=0),
                source=w.get("source", "tweets"), process=w.get("process", POISSON))
        if kind == "ti":
            pause = w.get("congestion_pause")
            return gen_ti_workload(
                truck_rate=_num(w, "truck_rate", where, errs, default=250.0, minimum=0),
                congestion_rate=_num(w, "congestion_rate", where, errs, default=250.0, minimum=0),
                congestion_pause=tuple(pause) if pause else None,
                process=w.get("process", CONSTANT))
    except (WorkloadError, TypeError) as ex:
        errs.append(f"{where}: {ex}")
        return None
    streams = w.get("streams")
    if not isinstance(streams, dict) or not streams:
        errs.append(f"{where}.streams: expected an object mapping source operators to streams")
        return None
    out = {}
    for op, s in streams.items():
        spec = _stream(s, f"{where}.streams.{op}", errs)
        if spec is not None:
            out[op] = spec
    return Workload(out)


def _app(a, index, topo: Optional[Topology], errs) -> Optional[AppSetup]:
    where = f"apps[{index}]"
    if not isinstance(a, dict):
        errs.append(f"{where}: expected an object")
        return None
    _unknown(a, APP_KEYS, where, errs)
    name = a.get("name", f"app{index}")
    where = f"apps[{index}]({name})"
    n_err = len(errs)
    ops = [_operator(o, f"{where}.operators[{i}]", errs) for i, o in enumerate(a.get("operators") or [])]
    if not a.get("operators"):
        errs.append(f"{where}: missing operators")
    edges = []
    for i, e in enumerate(a.get("edges") or []):
        w = f"{where}.edges[{i}]"
        if not isinstance(e, dict) or "from" not in e or "to" not in e:
            errs.append(f"{w}: edge needs 'from' and 'to'")
            continue
        _unknown(e, EDGE_KEYS, w, errs)
        g = _grouping(e.get("grouping", "shuffle"), w, errs)
        if g is not None:
            edges.append(Edge(e["from"], e["to"], g))
    workload = _workload(a.get("workload"), f"{where}.workload", errs)
    if len(errs) > n_err:
        return None
    dag = AppDag(tuple(ops), tuple(edges), index, name)
    dag_errs = dag.validate()
    if dag_errs:
        errs.extend(f"{where}: {m}" for m in dag_errs)
        return None
    errs.extend(f"{where}: {m}" for m in workload.validate(dag))
    g = expand(dag)
    pl = a.get("placement")
    if not isinstance(pl, dict):
        errs.append(f"{where}: missing placement")
        return None
    machines = set(topo.machines) if topo else None
    try:
        if set(pl) == {"round_robin"}:
            ms = pl["round_robin"]
            placement = place_round_robin(g, ms)
        else:
            placement = place_explicit(g, pl)
            extra = set(pl) - {o.name for o in dag.operators}
            for k in sorted(extra):
                errs.append(f"{where}.placement: unknown operator {k!r}")
    except (AppGraphError, TypeError) as ex:
        errs.append(f"{where}.placement: {ex}")
        return None
    if machines is not None:
        for inst, m in placement.assignment.items():
            if m not in machines:
                errs.append(f"{where}.placement: {inst} on unknown machine {m!r}")
    return AppSetup(dag, placement, workload)


def validate_scenario(doc: Any) -> Scenario:
    errs: list[str] = []
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a JSON object")
    _unknown(doc, TOP_KEYS, "scenario", errs)
    name = doc.get("name", "scenario")

    topo = None
    t = doc.get("topology")
    if not isinstance(t, dict):
        errs.append("topology: missing section")
    else:
        _unknown(t, TOPO_KEYS, "topology", errs)
        vals = [_num(t, k, "topology", errs, integer=True, minimum=1)
                for k in ("racks", "machines_per_rack", "cores")]
        caps = [_num(t, k, "topology", errs, positive=True)
                for k in ("uplink_mbps", "downlink_mbps", "internal_mbps")]
        if None not in vals and None not in caps:
            try:
                topo = build_fat_tree(*vals, *(mbps_to_MBps(c) for c in caps))
            except TopologyError as ex:
                errs.append(f"topology: {ex}")

    apps_doc = doc.get("apps")
    apps = []
    if not isinstance(apps_doc, list) or not apps_doc:
        errs.append("apps: missing section (need at least one application)")
    else:
        for i, a in enumerate(apps_doc):
            s = _app(a, i, topo, errs)
            if s is not None:
                apps.append(s)
        names = [s.dag.name for s in apps]
        if len(set(names)) != len(names):
            errs.append("apps: application names must be unique")

    sim = doc.get("sim", {})
    if not isinstance(sim, dict):
        errs.append("sim: expected an object")
        sim = {}
    _unknown(sim, SIM_KEYS, "sim", errs)
    for k in ("duration", "sample_period", "delta_t"):
        if k in sim:
            _num(sim, k, "sim", errs, positive=True)
    for k in ("substeps", "seed", "warmup_epochs"):
        if k in sim:
            _num(sim, k, "sim", errs, integer=True, minimum=1 if k == "substeps" else 0)

    allocators = doc.get("allocators", ["app_aware", "maxmin_tcp"])
    if not isinstance(allocators, list) or not allocators:
        errs.append("allocators: expected a non-empty list")
        allocators = []
    for a in allocators:
        if a not in ALLOCATORS:
            errs.append(f"allocators: unknown allocator {a!r} (choose from {', '.join(ALLOCATORS)})")

    sweep = doc.get("sweep", {})
    kinds, mbps = (), ()
    if not isinstance(sweep, dict):
        errs.append("sweep: expected an object")
    elif sweep:
        _unknown(sweep, SWEEP_KEYS, "sweep", errs)
        kinds = sweep.get("link_kinds", [])
        mbps = sweep.get("mbps", [])
        if not isinstance(kinds, list) or not kinds or any(k not in LINK_KINDS for k in kinds):
            errs.append(f"sweep.link_kinds: expected a non-empty list drawn from {list(LINK_KINDS)}")
            kinds = []
        if (not isinstance(mbps, list) or not mbps
                or any(isinstance(v, bool) or not isinstance(v, (int, float)) or v <= 0 for v in mbps)):
            errs.append("sweep.mbps: expected a non-empty list of positive numbers")
            mbps = []

    fair = FairnessConfig()
    alphas = ()
    f = doc.get("fairness", {})
    if not isinstance(f, dict):
        errs.append("fairness: expected an object")
    elif f:
        _unknown(f, FAIR_KEYS, "fairness", errs)
        al = f.get("alphas", [])
        for v in al if isinstance(al, list) else [al]:
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not 0 <= v <= 1:
                errs.append(f"fairness.alphas: alpha must be in [0, 1], got {v!r}")
        try:
            fair = FairnessConfig(
                alpha=f.get("alpha", 0.5),
                regroup_period=f.get("regroup_period"),
                m=f.get("m", 8),
                starvation_threshold=f.get("starvation_threshold", 3),
            )
        except (FairnessError, TypeError) as ex:
            errs.append(f"fairness: {ex}")
        if isinstance(al, list):
            alphas = tuple(al)

    if errs:
        raise ScenarioError(errs)
    sc = Scenario(name, topo, apps, dict(sim), tuple(allocators), tuple(kinds), tuple(mbps), fair,
                  alphas, doc.get("description", ""), doc)
    try:
        for a in sc.allocators:
            sc.config(a)
    except (SimError, ValueError) as ex:
        raise ScenarioError(f"sim: {ex}") from None
    return sc


def _load_json(text: str, label: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as ex:
        lines = text.splitlines()
        line = lines[ex.lineno - 1] if 0 < ex.lineno <= len(lines) else ""
        pointer = " " * (ex.colno - 1) + "^"
        raise ScenarioError(f"{label}:{ex.lineno}:{ex.colno}: {ex.msg}\n    {line}\n    {pointer}") from None


def bundled_scenarios() -> list[str]:
    root = resources.files("streambw") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def scenario_text(path_or_name: str) -> tuple[str, str]:
    if os.path.exists(path_or_name):
        with open(path_or_name) as fh:
            return fh.read(), path_or_name
    name = path_or_name[:-5] if path_or_name.endswith(".json") else path_or_name
    if name in bundled_scenarios():
        p = resources.files("streambw") / "scenarios" / f"{name}.json"
        return p.read_text(), f"{name}.json"
    raise ScenarioError(f"no scenario file or bundled scenario named {path_or_name!r}")


def parse_scenario(path_or_name: str) -> Scenario:
    """Load a scenario from a path or by bundled name (e.g. ``ti_bottleneck``)."""
    text, label = scenario_text(path_or_name)
    return validate_scenario(_load_json(text, label))
