"""K-Means over binary pod vectors with the Hamming distance.

Centroids are per-bit majorities (ties go to 0), which is the Hamming-optimal
representative of a cluster, so every assign/update round can only lower the
total within-cluster distance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

DEFAULT_MAX_ITER = 100
DEFAULT_RESTARTS = 10


class ClusteringError(ValueError):
    pass


@dataclass(frozen=True)
class ClusterAssignment:
    k_requested: int
    k_effective: int
    assignment: dict[int, int]  # pod -> cluster
    centroids: tuple[np.ndarray, ...] = field(repr=False)
    cost: int
    history: tuple[int, ...] = field(default=(), repr=False, compare=False)

    def clusters(self) -> list[list[int]]:
        """Pods of each cluster, in cluster order; pods sorted."""
        out: list[list[int]] = [[] for _ in range(self.k_effective)]
        for pod in sorted(self.assignment):
            out[self.assignment[pod]].append(pod)
        return out


def hamming(a, b) -> int:
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ClusteringError(f"width mismatch: {a.shape} vs {b.shape}")
    return int(np.count_nonzero(a ^ b))


def centroid(members) -> np.ndarray:
    arr = np.asarray(members, dtype=bool)
    if arr.ndim != 2 or len(arr) == 0:
        raise ClusteringError("centroid of an empty set")
    return 2 * arr.sum(axis=0, dtype=np.int64) > len(arr)


def cluster_cost(asg: ClusterAssignment, vectors: Mapping[int, np.ndarray]) -> int:
    if set(asg.assignment) != set(vectors):
        raise ClusteringError("assignment does not cover the vector keys")
    return sum(hamming(vectors[p], asg.centroids[c]) for p, c in asg.assignment.items())


def single_cluster(pods) -> ClusterAssignment:
    """Every pod in cluster 0; used when no clustering is wanted (Elmo)."""
    pods = sorted(pods)
    return ClusterAssignment(1, 1 if pods else 0, {p: 0 for p in pods}, (), 0)


def _distances(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    # |x| + |c| - 2 x.c  == popcount(x ^ c) for 0/1 vectors
    Xi = X.astype(np.int32)
    Ci = C.astype(np.int32)
    return Xi.sum(1)[:, None] + Ci.sum(1)[None, :] - 2 * (Xi @ Ci.T)


def _seed_centroids(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    count = len(X)
    chosen = [int(rng.integers(count))]
    nearest = _distances(X, X[chosen]).min(axis=1).astype(np.float64)
    while len(chosen) < k:
        weights = nearest**2
        total = weights.sum()
        if total > 0:
            pick = int(rng.choice(count, p=weights / total))
        else:
            rest = [i for i in range(count) if i not in chosen]
            pick = int(rest[rng.integers(len(rest))])
        chosen.append(pick)
        nearest = np.minimum(nearest, _distances(X, X[[pick]])[:, 0])
    return X[chosen].copy()


def _lloyd(X: np.ndarray, C: np.ndarray, max_iter: int):
    k = len(C)
    labels = None
    history: list[int] = []
    for _ in range(max_iter):
        D = _distances(X, C)
        new = D.argmin(axis=1)  # argmin keeps the lowest index on ties

        sizes = np.bincount(new, minlength=k)
        for empty in np.flatnonzero(sizes == 0):
            own = D[np.arange(len(X)), new]
            donors = sizes[new] > 1
            pick = int(np.flatnonzero(donors)[np.argmax(own[donors])])
            sizes[new[pick]] -= 1
            new[pick] = empty
            sizes[empty] = 1

        C = np.stack([centroid(X[new == c]) for c in range(k)])
        cost = int(_distances(X, C)[np.arange(len(X)), new].sum())
        if history and cost > history[-1]:
            raise AssertionError(f"k-means cost rose from {history[-1]} to {cost}")
        history.append(cost)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
    return new, C, history


def kmeans_hamming(
    vectors: Mapping[int, np.ndarray],
    k: int,
    seed: int,
    max_iter: int = DEFAULT_MAX_ITER,
    restarts: int = DEFAULT_RESTARTS,
) -> ClusterAssignment:
    """Partition pods into at most ``k`` clusters.

    The best of ``restarts`` seeded runs is returned (lowest cost, earliest
    restart on ties). ``k`` is clamped to the number of pods.
    """
    if not vectors:
        raise ClusteringError("no vectors to cluster")
    if k < 1:
        raise ClusteringError(f"k must be >= 1, got {k}")
    pods = sorted(vectors)
    X = np.stack([np.asarray(vectors[p], dtype=bool) for p in pods])
    k_eff = min(k, len(pods))

    if k_eff == len(pods):
        return ClusterAssignment(
            k, k_eff, {p: i for i, p in enumerate(pods)}, tuple(X.copy()), 0, (0,)
        )

    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, restarts)):
        C0 = _seed_centroids(X, k_eff, rng)
        labels, C, history = _lloyd(X, C0, max_iter)
        if best is None or history[-1] < best[2][-1]:
            best = (labels, C, history)

    labels, C, history = best
    # relabel clusters by first appearance so output is canonical
    order: dict[int, int] = {}
    for lab in labels:
        order.setdefault(int(lab), len(order))
    assignment = {p: order[int(lab)] for p, lab in zip(pods, labels)}
    centroids = [None] * k_eff
    for old, new in order.items():
        centroids[new] = C[old]
    return ClusterAssignment(k, k_eff, assignment, tuple(centroids), history[-1], tuple(history))
