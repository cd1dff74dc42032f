import pytest
from hypothesis import given, settings, strategies as st

from streambw.topology import (CORE_TO_RACK, DOWNLINK, RACK_TO_CORE, UPLINK, TopologyError,
                               allocatable_capacity, build_fat_tree, downlink_id, mbps_to_MBps,
                               route, uplink_id)


def test_link_counts_two_racks_four_machines_two_cores():
    t = build_fat_tree(2, 4, 2, 125.0, 125.0, 125.0)
    assert len(t.links_of_kind(UPLINK)) == 8
    assert len(t.links_of_kind(DOWNLINK)) == 8
    assert len(t.links_of_kind(RACK_TO_CORE)) == 4
    assert len(t.links_of_kind(CORE_TO_RACK)) == 4


def test_same_rack_route_has_no_internal_links():
    t = build_fat_tree(1, 2, 1, 1.0, 1.0, 1.0)
    assert tuple(route(t, 0, 1)) == (uplink_id(0), downlink_id(1))


def test_forced_cross_rack_route():
    t = build_fat_tree(2, 1, 1, 1.0, 1.0, 1.0)
    assert tuple(route(t, 0, 1)) == (uplink_id(0), "r0>c0", "c0>r1", downlink_id(1))


def test_core_choice_is_sum_mod_core_count_and_stable():
    t = build_fat_tree(2, 4, 2, 1.0, 1.0, 1.0)
    for s in range(4):
        for d in range(4, 8):
            k = (s + d) % 2
            r = route(t, s, d)
            assert r.link_ids[1] == f"r0>c{k}" and r.link_ids[2] == f"c{k}>r1"
            assert route(t, s, d) == r
    t2 = build_fat_tree(2, 4, 2, 1.0, 1.0, 1.0)
    assert t2.routes == t.routes


@pytest.mark.parametrize("args", [
    (0, 1, 1, 1.0, 1.0, 1.0), (1, 0, 1, 1.0, 1.0, 1.0), (1, 1, 0, 1.0, 1.0, 1.0),
    (1, 1, 1, 0.0, 1.0, 1.0), (1, 1, 1, 1.0, -1.0, 1.0), (1, 1, 1, 1.0, 1.0, 0.0),
])
def test_build_rejects_bad_arguments(args):
    with pytest.raises(TopologyError):
        build_fat_tree(*args)


def test_route_errors():
    t = build_fat_tree(1, 2, 1, 1.0, 1.0, 1.0)
    with pytest.raises(TopologyError):
        route(t, 0, 0)
    with pytest.raises(TopologyError):
        route(t, 0, 7)
    with pytest.raises(TopologyError):
        route(t, -1, 0)


def test_allocatable_capacity():
    l = build_fat_tree(1, 2, 1, 10.0, 10.0, 10.0).link(uplink_id(0))
    assert allocatable_capacity(l, 0) == 10
    assert allocatable_capacity(l, 4) == 6
    assert allocatable_capacity(l, 12) == 0
    with pytest.raises(TopologyError):
        allocatable_capacity(l, -1)


def test_units_and_capacity_override():
    assert mbps_to_MBps(10) == 1.25
    t = build_fat_tree(2, 2, 1, 1.0, 2.0, 3.0).with_capacity([UPLINK], 7.0)
    assert {l.capacity for l in t.links_of_kind(UPLINK)} == {7.0}
    assert {l.capacity for l in t.links_of_kind(DOWNLINK)} == {2.0}
    with pytest.raises(TopologyError):
        t.with_capacity(["bogus"], 1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 3))
def test_route_structure(racks, per_rack, cores):
    t = build_fat_tree(racks, per_rack, cores, 1.0, 1.0, 1.0)
    assert len(t.links_of_kind(UPLINK)) == len(t.links_of_kind(DOWNLINK)) == racks * per_rack
    assert len(t.links_of_kind(RACK_TO_CORE, CORE_TO_RACK)) == 2 * racks * cores
    n = racks * per_rack
    assert len(t.routes) == n * (n - 1)
    for (s, d), r in t.routes.items():
        kinds = [t.link(l).kind for l in r]
        assert kinds[0] == UPLINK and kinds[-1] == DOWNLINK
        assert kinds.count(UPLINK) == 1 and kinds.count(DOWNLINK) == 1
        if t.rack_of[s] == t.rack_of[d]:
            assert len(r) == 2
        else:
            assert kinds[1:3] == [RACK_TO_CORE, CORE_TO_RACK]
        # consecutive links share a node
        for a, b in zip(r.link_ids, r.link_ids[1:]):
            assert t.link(a).dst == t.link(b).src
