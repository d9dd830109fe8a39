"""Closed-form metrics and the unit-traffic link-load model."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .clustering import ClusterAssignment, kmeans_hamming
from .encoder import PacketHeader, header_bits
from .forwarding import DeliveryReport
from .groups import MulticastGroup, destination_pods, generate_group, occupancy
from .topology import Direction, Layer, Topology

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EtReport:
    group_id: int
    d: int
    k: int
    et_elmo: int
    et_bert: int

    @property
    def savings(self) -> float | None:
        if self.et_elmo == 0:
            return None
        return 1.0 - self.et_bert / self.et_elmo


@dataclass(frozen=True)
class LayerLoad:
    mean: float
    std: float
    max: float
    total: float
    links: int


LinkLoadReport = dict[tuple[Layer, Direction], LayerLoad]


def _member_leaves(occ: np.ndarray, pods: Iterable[int]) -> np.ndarray:
    pods = list(pods)
    if not pods:
        return np.zeros((0, occ.shape[2]), dtype=bool)
    leaves = occ[pods].reshape(-1, occ.shape[2])
    return leaves[leaves.any(axis=1)]


def _et(leaves: np.ndarray, rule=None) -> int:
    if len(leaves) == 0:
        return 0
    if rule is not None:
        return int(np.count_nonzero(leaves ^ np.asarray(rule, dtype=bool)))
    rule = leaves.any(axis=0)
    et = int(np.count_nonzero(leaves ^ rule))
    # the OR covers every leaf, so XOR reduces to a popcount difference
    assert et == len(leaves) * int(rule.sum()) - int(leaves.sum())
    return et


def et_elmo(grp: MulticastGroup, topo: Topology, rule=None) -> int:
    """Extra deliveries of one OR rule shared by all destination leaves.

    ``rule`` overrides the computed OR bitmap.
    """
    occ = occupancy(topo, grp)
    return _et(_member_leaves(occ, destination_pods(topo, grp)), rule)


def et_bert(grp: MulticastGroup, topo: Topology, asg: ClusterAssignment) -> int:
    occ = occupancy(topo, grp)
    dest = set(destination_pods(topo, grp))
    return sum(
        _et(_member_leaves(occ, [p for p in pods if p in dest])) for pods in asg.clusters()
    )


def header_stats(headers: Sequence[PacketHeader], topo: Topology, scopes=None):
    """``(mean bits per copy, total bits, per-copy bits)``."""
    if not headers:
        raise ValueError("no headers")
    per_copy = [header_bits(h, topo, scopes) for h in headers]
    total = sum(per_copy)
    return total / len(per_copy), total, per_copy


def link_loads(
    report: DeliveryReport,
    topo: Topology,
    flow_pkts: int,
    headers: Sequence[PacketHeader],
    baseline_bits: int | None = None,
) -> LinkLoadReport:
    """Per-layer/direction load statistics in traffic units.

    A packet crossing a link costs ``1 + bits / baseline_bits`` units: one for
    the payload and the header scaled so the group's full Elmo header counts
    as one unit. ``baseline_bits`` defaults to the size of a lone header.
    Standard deviation is the population value over every link of the layer,
    idle links included.
    """
    if report.copies != len(headers):
        raise ValueError(f"report has {report.copies} copies, got {len(headers)} headers")
    if baseline_bits is None:
        if len(headers) != 1:
            raise ValueError("baseline_bits is required for multi-copy headers")
        baseline_bits = header_bits(headers[0], topo)
    out: LinkLoadReport = {}
    for key, pkts in report.link_packets.items():
        bits = report.link_bits[key]
        units = pkts.astype(np.float64)
        if baseline_bits > 0:
            units = units + bits / baseline_bits
        load = units * flow_pkts
        out[key] = LayerLoad(
            mean=float(load.mean()),
            std=float(load.std()),
            max=float(load.max()) if len(load) else 0.0,
            total=float(load.sum()),
            links=len(load),
        )
    return out


UPSTREAM_FABRIC = (
    (Layer.HOST_LEAF, Direction.UP),
    (Layer.LEAF_SPINE, Direction.UP),
    (Layer.SPINE_CORE, Direction.UP),
)
DOWNSTREAM_FABRIC = (
    (Layer.SPINE_CORE, Direction.DOWN),
    (Layer.LEAF_SPINE, Direction.DOWN),
)


def path_mean(loads: LinkLoadReport, keys) -> float:
    """Mean load per link over several layers taken together."""
    total = sum(loads[k].total for k in keys)
    links = sum(loads[k].links for k in keys)
    return total / links


def group_seed(seed: int, *parts: int) -> int:
    return int(np.random.SeedSequence([seed, *parts]).generate_state(1, np.uint32)[0])


def et_report(
    topo: Topology, grp: MulticastGroup, k: int, seed: int, restarts: int = 10
) -> tuple[EtReport, ClusterAssignment | None]:
    occ = occupancy(topo, grp)
    dest = destination_pods(topo, grp)
    elmo = _et(_member_leaves(occ, dest))
    if not dest:
        return EtReport(grp.group_id, grp.d, k, 0, 0), None
    asg = kmeans_hamming({p: occ[p].reshape(-1) for p in dest}, k, seed, restarts=restarts)
    bert = sum(_et(_member_leaves(occ, pods)) for pods in asg.clusters())
    return EtReport(grp.group_id, grp.d, k, elmo, bert), asg


def savings_curve(
    topo: Topology,
    d_values: Sequence[int],
    k_values: Sequence[int],
    n_groups: int,
    seed: int,
) -> dict[tuple[int, int], float]:
    """Mean savings per ``(d, k)``; groups with zero Elmo ET are left out."""
    if n_groups < 1:
        raise ValueError("n_groups must be >= 1")
    table: dict[tuple[int, int], float] = {}
    for d in d_values:
        groups = [generate_group(topo, d, group_seed(seed, d, g), g) for g in range(n_groups)]
        for k in k_values:
            vals = []
            for grp in groups:
                rep, _ = et_report(topo, grp, k, group_seed(seed, d, grp.group_id, k))
                if rep.savings is None:
                    log.info("group %d (d=%d) has no Elmo extra transmissions", grp.group_id, d)
                    continue
                vals.append(rep.savings)
            table[(d, k)] = float(np.mean(vals)) if vals else float("nan")
    return table
