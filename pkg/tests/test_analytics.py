import itertools

import numpy as np
import pytest

from closmcast.analytics import (
    DOWNSTREAM_FABRIC,
    UPSTREAM_FABRIC,
    EtReport,
    et_bert,
    et_elmo,
    et_report,
    group_seed,
    link_loads,
    path_mean,
    savings_curve,
)
from closmcast.clustering import ClusterAssignment, kmeans_hamming
from closmcast.encoder import PacketHeader, Scope, encode_bert, encode_elmo, downstream_bits, header_bits
from closmcast.forwarding import simulate_delivery
from closmcast.groups import MulticastGroup, destination_pods, from_str, occupancy
from closmcast.topology import Direction, Layer, TopologyParams, build_topology

from conftest import random_instance

FIG1_CLUSTERS = ClusterAssignment(2, 2, {1: 0, 2: 0, 3: 1}, (), 0)


def _xor_oracle(bitmaps, rule):
    return sum(sum(a != b for a, b in zip(bm, rule)) for bm in bitmaps)


def test_et_worked_numbers():
    assert _xor_oracle(["0110", "0010"], "0110") == 1
    assert _xor_oracle(["1100", "1000"], "1100") == 1


def test_fig1_et(fig1_topo, fig1_grp):
    assert et_elmo(fig1_grp, fig1_topo) == 6
    assert et_elmo(fig1_grp, fig1_topo, from_str("1111")) == 10
    assert et_bert(fig1_grp, fig1_topo, FIG1_CLUSTERS) == 2
    rep = EtReport(1, 7, 2, 10, 2)
    assert rep.savings == pytest.approx(0.8)
    assert EtReport(1, 7, 2, 0, 0).savings is None


def test_no_destination_pods(fig1_topo):
    grp = MulticastGroup(0, 0, (1, 5))
    assert et_elmo(grp, fig1_topo) == 0
    rep, asg = et_report(fig1_topo, grp, 3, 0)
    assert asg is None and rep.savings is None


def test_singleton_clusters_have_no_extras(fig1_topo, fig1_grp):
    one_each = ClusterAssignment(3, 3, {1: 0, 2: 1, 3: 2}, (), 0)
    # pod 3 holds two distinct leaves (1100 and 1000), so one extra remains
    assert et_bert(fig1_grp, fig1_topo, one_each) == 1


def _partitions(items):
    if not items:
        yield []
        return
    head, rest = items[0], items[1:]
    for part in _partitions(rest):
        yield [[head]] + part
        for i in range(len(part)):
            yield part[:i] + [[head] + part[i]] + part[i + 1:]


@pytest.mark.parametrize("seed", range(30))
def test_closed_form_matches_oracle_and_dominates(seed):
    rng = np.random.default_rng(1000 + seed)
    topo, grp, _ = random_instance(rng)
    occ = occupancy(topo, grp)
    dest = destination_pods(topo, grp)
    leaves = [occ[p, j] for p in dest for j in range(topo.m) if occ[p, j].any()]
    rule = np.logical_or.reduce(leaves) if leaves else None
    elmo = et_elmo(grp, topo)
    assert elmo == (_xor_oracle(leaves, rule) if leaves else 0)
    # every partition of the destination pods, not only K-Means output
    for part in itertools.islice(_partitions(dest), 60):
        asg = ClusterAssignment(len(part), len(part), {p: c for c, ps in enumerate(part) for p in ps}, (), 0)
        bert = et_bert(grp, topo, asg)
        assert 0 <= bert <= elmo
        rep = simulate_delivery(topo, encode_bert(topo, grp, asg), grp.source, seed)
        assert rep.non_member_deliveries(grp) == bert


def test_header_split_properties():
    rng = np.random.default_rng(77)
    for _ in range(40):
        topo, grp, k = random_instance(rng)
        dest = destination_pods(topo, grp)
        if not dest:
            continue
        occ = occupancy(topo, grp)
        asg = kmeans_hamming({p: occ[p].reshape(-1) for p in dest}, k, 0)
        elmo = encode_elmo(topo, grp)
        bert = encode_bert(topo, grp, asg)
        for hdr in bert:
            assert downstream_bits(hdr, topo) <= downstream_bits(elmo, topo)
            # superset: the compacted leaf bitmap covers every true bitmap it serves
            leaf_rule = [r for r in hdr.rules if r.scope == Scope.DOWN_LEAF][-1]
            for lid in leaf_rule.switch_ids:
                pod, j = divmod(lid, topo.m)
                true = occ[pod, j]
                assert all(b >= t for b, t in zip(leaf_rule.bitmap, true))
        core = sum(np.array(h.find(Scope.CORE).bitmap) for h in bert)
        assert core.tolist() == [int(p in dest) for p in range(topo.n)]


def test_link_loads_units(fig1_topo, fig1_grp):
    elmo = encode_elmo(fig1_topo, fig1_grp)
    rep = simulate_delivery(fig1_topo, [elmo], 0, 0)
    loads = link_loads(rep, fig1_topo, 1000, [elmo])
    first = loads[(Layer.HOST_LEAF, Direction.UP)]
    # one packet carrying the full header: 1 + 1 units on one of 32 links
    assert first.max == 2000.0
    assert first.total == 2000.0
    assert first.mean == pytest.approx(2000 / 32)
    assert first.std == pytest.approx(float(np.std([2000] + [0] * 31)))
    with pytest.raises(ValueError):
        link_loads(rep, fig1_topo, 1000, [elmo, elmo])


def test_link_loads_k1_equals_elmo(fig1_topo, fig1_grp):
    elmo = encode_elmo(fig1_topo, fig1_grp)
    base = header_bits(elmo, fig1_topo)
    one = ClusterAssignment(1, 1, {1: 0, 2: 0, 3: 0}, (), 0)
    a = link_loads(simulate_delivery(fig1_topo, [elmo], 0, 3), fig1_topo, 10, [elmo], base)
    bert = encode_bert(fig1_topo, fig1_grp, one)
    b = link_loads(simulate_delivery(fig1_topo, bert, 0, 3), fig1_topo, 10, bert, base)
    assert a == b


def test_link_loads_packet_conservation(fig1_topo, fig1_grp):
    bert = encode_bert(fig1_topo, fig1_grp, FIG1_CLUSTERS)
    rep = simulate_delivery(fig1_topo, bert, 0, 0)
    tot = rep.layer_totals()
    # every packet that goes up a layer came up the one below it
    assert tot[(Layer.HOST_LEAF, Direction.UP)] == 2
    assert tot[(Layer.LEAF_SPINE, Direction.UP)] == 2
    assert tot[(Layer.SPINE_CORE, Direction.UP)] == 2
    assert tot[(Layer.HOST_LEAF, Direction.DOWN)] == len(fig1_grp.members) + 2
    loads = link_loads(rep, fig1_topo, 1, bert, header_bits(encode_elmo(fig1_topo, fig1_grp), fig1_topo))
    assert path_mean(loads, UPSTREAM_FABRIC) > 0
    assert path_mean(loads, DOWNSTREAM_FABRIC) > 0


def test_empty_headers_load_nothing(fig1_topo):
    hdr = PacketHeader(0, 0, ())
    rep = simulate_delivery(fig1_topo, [hdr], 0, 0)
    loads = link_loads(rep, fig1_topo, 1000, [hdr], 10)
    assert all(v.total == 0 for v in loads.values())


def test_group_seed_is_stable_and_distinct():
    assert group_seed(0, 200, 1) == group_seed(0, 200, 1)
    assert len({group_seed(0, 200, g) for g in range(100)}) == 100
    assert group_seed(0, 200, 1) != group_seed(0, 200, 1, 2)


def test_savings_curve_small():
    topo = build_topology(TopologyParams(6, 3, 4, 2, 2))
    curve = savings_curve(topo, [20], [1, 2, 6], 8, seed=4)
    assert curve[(20, 1)] == 0.0
    assert 0.0 <= curve[(20, 2)] <= curve[(20, 6)] <= 1.0
    assert savings_curve(topo, [20], [1, 2, 6], 8, seed=4) == curve
    with pytest.raises(ValueError):
        savings_curve(topo, [20], [2], 0, seed=4)
