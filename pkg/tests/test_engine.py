import numpy as np
import pytest

from streambw.appgraph import SINK, SOURCE, AppDag, Edge, OperatorSpec, expand, place_explicit, shuffle
from streambw.scenario import parse_scenario
from streambw.sim.engine import ALLOCATORS, APP_AWARE, AppSetup, SimConfig, SimError, simulate
from streambw.sim.metrics import collect_metrics
from streambw.sim.workloads import CONSTANT, StreamSpec, Workload
from streambw.topology import UPLINK, build_fat_tree


def pipeline(rate, size_mb, cap, allocator=APP_AWARE, duration=60.0, seed=3):
    dag = AppDag([OperatorSpec("src", 1, SOURCE, out_tuple_size=size_mb),
                  OperatorSpec("snk", 1, SINK, service_rate=1000.0)],
                 [Edge("src", "snk", shuffle())], 0, "pipe")
    app = AppSetup(dag, place_explicit(expand(dag), {"src": [0], "snk": [1]}),
                   Workload({"src": StreamSpec(rate, CONSTANT)}))
    topo = build_fat_tree(1, 2, 1, cap, cap, cap)
    res = simulate(topo, [app], SimConfig(duration=duration, allocator=allocator, seed=seed))
    return res, collect_metrics(res)


def test_zero_rate_source_is_idle():
    res, m = pipeline(0.0, 0.01, 10.0)
    assert m.throughput == 0.0 and m.latency_mean is None
    assert len(res.done_time) == 0
    assert m.notes == ["no bottlenecked link in this run"]
    assert all(v == 0 for _, _, *vals in res.state_rows for v in vals)


def test_single_pipeline_latency_hand_value():
    # 10 KB over two 10 MB/s hops store-and-forward (1 ms each) plus 1 ms of service
    res, m = pipeline(100.0, 0.01, 10.0)
    assert res.done_latency.min() == pytest.approx(0.003, abs=1e-9)
    assert m.throughput == pytest.approx(100.0)


@pytest.mark.parametrize("allocator", ALLOCATORS)
def test_latency_never_beats_transfer_plus_service(allocator):
    res, _ = pipeline(100.0, 0.01, 10.0, allocator)
    assert res.done_latency.min() >= 0.003 - 1e-9


@pytest.mark.parametrize("allocator", ALLOCATORS)
def test_saturated_link_caps_throughput(allocator):
    # 10 MB/s offered into a 5 MB/s path
    res, m = pipeline(10.0, 1.0, 5.0, allocator)
    assert m.throughput == pytest.approx(5.0, rel=0.05)
    assert m.utilization == pytest.approx(1.0, rel=1e-6)
    assert res.violations == 0


@pytest.mark.parametrize("allocator", ALLOCATORS)
def test_conservation_and_residuals(allocator):
    res, m = pipeline(10.0, 1.0, 5.0, allocator)
    c = res.conservation[0]
    assert c["balanced"]
    assert c["emitted"] == c["source_tuples"] == 600
    assert c["completed"] + c["resident"] == c["emitted"]
    assert res.max_sender_residual == 0 and res.max_receiver_residual == 0


def test_capacity_override_applies():
    dag = AppDag([OperatorSpec("src", 1, SOURCE, out_tuple_size=1.0), OperatorSpec("snk", 1, SINK)],
                 [Edge("src", "snk", shuffle())])
    app = AppSetup(dag, place_explicit(expand(dag), {"src": [0], "snk": [1]}),
                   Workload({"src": StreamSpec(10.0, CONSTANT)}))
    topo = build_fat_tree(1, 2, 1, 100.0, 100.0, 100.0)
    res = simulate(topo, [app], SimConfig(duration=60.0, capacity_overrides={UPLINK: 2.0}))
    assert collect_metrics(res).throughput == pytest.approx(2.0, rel=0.05)


def test_runs_are_deterministic():
    sc = parse_scenario("ti_bottleneck")
    cfg = sc.config("app_aware", mbps=10, duration=60)
    a = simulate(sc.topology, sc.apps, cfg)
    b = simulate(sc.topology, sc.apps, cfg)
    assert a.state_rows == b.state_rows and a.alloc_rows == b.alloc_rows
    assert np.array_equal(a.done_time, b.done_time)
    assert np.array_equal(a.done_latency, b.done_latency)


def test_ti_scenario_feasible_and_conserved():
    sc = parse_scenario("ti_bottleneck")
    for alloc in ("app_aware", "maxmin_tcp"):
        res = simulate(sc.topology, sc.apps, sc.config(alloc, mbps=10, duration=60))
        assert res.violations == 0 and res.allocations_checked > 0
        assert all(c["balanced"] for c in res.conservation.values())
        assert res.max_sender_residual == 0 and res.max_receiver_residual == 0


def test_config_validation():
    with pytest.raises(SimError):
        SimConfig(duration=0)
    with pytest.raises(SimError):
        SimConfig(duration=12, alloc_period=5)
    with pytest.raises(SimError):
        SimConfig(allocator="reno")
    with pytest.raises(ValueError):
        SimConfig(sample_period=2, alloc_period=5)


def test_pipeline_throughput_equals_source_rate():
    # 200 tuples/s of 10 KB = 2 MB/s over 10 MB/s links
    for alloc in ALLOCATORS:
        _, m = pipeline(200.0, 0.01, 10.0, alloc)
        assert m.throughput == pytest.approx(200.0, rel=1e-3)


def ti_volumes(truck_kb, congestion_kb, mbps=100):
    from streambw.sim.workloads import gen_ti_workload, ti_app
    sc = parse_scenario("ti_bottleneck")
    dag = ti_app(truck_kb, congestion_kb)
    setup = AppSetup(dag, sc.apps[0].placement, gen_ti_workload())
    res = simulate(sc.topology, [setup], sc.config("app_aware", mbps=mbps, duration=60))
    ids = {f.src_instance.operator: f.id for f in res.flows if not f.is_internal}
    warm = 2 * res.config.alloc_period
    vol = {op: sum(v for t, fid, _, _, v, _, _ in res.state_rows if fid == i and t >= warm)
           for op, i in ids.items()}
    return res, vol


def test_ti_four_to_one_volume_split():
    res, vol = ti_volumes(16, 4)
    assert vol["truck_source"] / vol["congestion_source"] == pytest.approx(4.0, rel=0.01)


def test_ti_equal_sizes_split_evenly():
    res, vol = ti_volumes(8, 8, mbps=40)
    assert vol["truck_source"] / vol["congestion_source"] == pytest.approx(1.0, rel=0.01)
    rates = {}
    for t, fid, r in res.alloc_rows:
        if t >= 10:
            rates.setdefault(fid, []).append(r)
    means = [np.mean(v) for v in rates.values() if v]
    assert max(means) / min(means) == pytest.approx(1.0, rel=0.05)


def test_carried_bytes_never_exceed_capacity_plus_a_tuple():
    sc = parse_scenario("tt_bottleneck")
    res = simulate(sc.topology, sc.apps, sc.config("app_aware", mbps=10, duration=60))
    caps = res.topology.capacities()
    biggest = max(o.out_tuple_size for a in sc.apps for o in a.dag.operators) * 1_000_000
    for l, carried in res.link_carried.items():
        assert carried.max() <= caps[l] * res.config.sample_period * 1_000_000 + biggest
