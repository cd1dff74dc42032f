import csv
import json
import os

import pytest

from streambw.scenario import parse_scenario
from streambw.sim.engine import simulate
from streambw.sim.metrics import collect_metrics, summary_dict, write_outputs

from test_engine import pipeline


def test_idle_run_notes_missing_bottleneck():
    # work-conserving rates leave no queue behind at epoch boundaries
    _, m = pipeline(1.0, 0.01, 10.0, "maxmin_tcp")
    assert m.notes == ["no bottlenecked link in this run"]
    assert m.utilization is None and m.saturated_links == []


def test_full_link_utilization_is_one():
    # constant 5 MB/s into a 5 MB/s path
    _, m = pipeline(5.0, 1.0, 5.0)
    assert m.utilization == pytest.approx(1.0, rel=1e-6)


def test_saturated_links_found_on_overload():
    _, m = pipeline(10.0, 1.0, 5.0)
    assert set(m.saturated_links) == {"up:m0", "down:m1"}
    assert m.saturated_utilization == pytest.approx(1.0, rel=1e-6)


def test_maxmin_five_app_jain():
    sc = parse_scenario("fair_5apps")
    res = simulate(sc.topology, sc.apps, sc.config("maxmin_tcp", duration=200))
    m = collect_metrics(res)
    # per-flow max-min gives app i an i/15 share: Jain 225/275
    assert m.jain == pytest.approx(225 / 275, abs=0.01)
    tp = [m.app_throughput[a] for a in sorted(m.app_throughput)]
    assert tp == sorted(tp)


def test_write_outputs(tmp_path):
    res, m = pipeline(10.0, 1.0, 5.0, duration=30.0)
    out = tmp_path / "cell"
    write_outputs(res, m, str(out), "pipe")
    names = set(os.listdir(out))
    assert {"flow_states.csv", "allocations.csv", "metrics.csv", "summary.json"} <= names
    with open(out / "allocations.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows and all(float(r["rate_mbps"]) >= 0 for r in rows)
    summary = json.loads((out / "summary.json").read_text())
    assert summary == json.loads(json.dumps(summary_dict(res, m, "pipe"), sort_keys=True))
    assert summary["config"]["alloc_period"] == 5.0
