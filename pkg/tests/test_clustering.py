import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from closmcast.clustering import (
    ClusterAssignment,
    ClusteringError,
    centroid,
    cluster_cost,
    hamming,
    kmeans_hamming,
)
from closmcast.groups import from_str, to_str


def _brute_force_partition(vectors: dict, k: int):
    """Minimum-cost partition into exactly k nonempty clusters, by enumeration."""
    pods = sorted(vectors)
    best = None
    for labels in itertools.product(range(k), repeat=len(pods)):
        if len(set(labels)) != k:
            continue
        cost = 0
        for c in range(k):
            members = [vectors[p] for p, lab in zip(pods, labels) if lab == c]
            cent = 2 * np.sum(members, axis=0) > len(members)
            cost += sum(int(np.count_nonzero(v ^ cent)) for v in members)
        if best is None or cost < best[0]:
            groups = {frozenset(p for p, lab in zip(pods, labels) if lab == c) for c in range(k)}
            best = (cost, groups)
    return best


def test_hamming_examples():
    v = from_str("0110")
    assert hamming(v, v) == 0
    assert hamming(from_str("0110"), from_str("1100")) == 2
    assert hamming(np.zeros(7, bool), np.ones(7, bool)) == 7
    with pytest.raises(ClusteringError):
        hamming(from_str("01"), from_str("011"))


def test_centroid_examples():
    assert to_str(centroid([from_str("0110")])) == "0110"
    assert to_str(centroid([from_str(s) for s in ("0110", "0110", "0010")])) == "0110"
    assert to_str(centroid([from_str("01"), from_str("10")])) == "00"
    with pytest.raises(ClusteringError):
        centroid([])


def test_k1_is_majority():
    vecs = {i: from_str(s) for i, s in enumerate(["1100", "1010", "1001", "0000"])}
    asg = kmeans_hamming(vecs, 1, seed=0)
    assert set(asg.assignment.values()) == {0}
    assert to_str(asg.centroids[0]) == "1000"


def test_k_at_least_pods_gives_zero_cost():
    vecs = {3: from_str("1100"), 5: from_str("0011"), 9: from_str("1100")}
    asg = kmeans_hamming(vecs, 7, seed=0)
    assert asg.k_effective == 3
    assert asg.cost == 0
    assert sorted(asg.assignment.values()) == [0, 1, 2]


def test_well_separated_pair():
    vecs = {i: from_str(s) for i, s in enumerate(["000011", "000010", "110000", "100000"])}
    oracle_cost, oracle_groups = _brute_force_partition(vecs, 2)
    assert oracle_groups == {frozenset({0, 1}), frozenset({2, 3})}
    asg = kmeans_hamming(vecs, 2, seed=1)
    assert asg.cost == oracle_cost
    assert {frozenset(c) for c in asg.clusters()} == oracle_groups


def test_fig1_pods_split_as_in_the_example():
    vecs = {1: from_str("00000110"), 2: from_str("00100000"), 3: from_str("11001000")}
    cost, groups = _brute_force_partition(vecs, 2)
    assert groups == {frozenset({1, 2}), frozenset({3})}
    for seed in range(10):
        asg = kmeans_hamming(vecs, 2, seed)
        assert asg.cost == cost
        assert {frozenset(c) for c in asg.clusters()} == groups


def test_empty_input_rejected():
    with pytest.raises(ClusteringError):
        kmeans_hamming({}, 2, 0)


def test_cluster_cost_examples():
    a, b = from_str("1100"), from_str("0011")
    exact = ClusterAssignment(2, 2, {0: 0, 1: 1}, (a, b), 0)
    assert cluster_cost(exact, {0: a, 1: b}) == 0
    off = ClusterAssignment(2, 2, {0: 0, 1: 1}, (a, from_str("1101")), 0)
    assert cluster_cost(off, {0: a, 1: b}) == 3
    with pytest.raises(ClusteringError):
        cluster_cost(exact, {0: a})


pod_sets = st.integers(2, 9).flatmap(
    lambda count: st.integers(4, 24).flatmap(
        lambda width: hnp.arrays(bool, (count, width))
    )
)


@settings(max_examples=80, deadline=None)
@given(pod_sets, st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_assignment_invariants(arr, k, seed):
    arr[:, 0] |= ~arr.any(axis=1)  # pods fed to clustering are nonzero
    vecs = {i * 3: row for i, row in enumerate(arr)}
    asg = kmeans_hamming(vecs, k, seed)
    assert asg.k_effective == min(k, len(vecs))
    assert set(asg.assignment) == set(vecs)
    assert set(asg.assignment.values()) == set(range(asg.k_effective))
    assert list(asg.history) == sorted(asg.history, reverse=True)
    # direct summation oracle
    direct = sum(
        int(np.count_nonzero(vecs[p] ^ asg.centroids[c])) for p, c in asg.assignment.items()
    )
    assert asg.cost == direct == cluster_cost(asg, vecs)
    again = kmeans_hamming(vecs, k, seed)
    assert again.assignment == asg.assignment and again.cost == asg.cost


@settings(max_examples=40, deadline=None)
@given(pod_sets, st.integers(1, 4), st.integers(0, 2**16))
def test_restarts_keep_the_cheapest(arr, k, seed):
    arr[:, 0] |= ~arr.any(axis=1)
    vecs = dict(enumerate(arr))
    one = kmeans_hamming(vecs, k, seed, restarts=1)
    many = kmeans_hamming(vecs, k, seed, restarts=10)
    # the first restart of both runs is identical, so more restarts never lose
    assert many.cost <= one.cost
