"""Multicast groups, per-leaf port bitmaps and per-pod concatenated vectors.

Bitmaps are numpy ``bool`` arrays. Bit 0 is the lowest port index and is
printed leftmost, so ports {1, 2} of a 4-port leaf read ``0110``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .topology import Topology, TopologyError, locate_host


class GroupError(ValueError):
    pass


@dataclass(frozen=True)
class MulticastGroup:
    group_id: int
    source: int
    members: tuple[int, ...]  # sorted, source excluded

    def __post_init__(self) -> None:
        if not self.members:
            raise GroupError("a group needs at least one member")
        if self.source in self.members:
            raise GroupError(f"source {self.source} listed as a member")
        if len(set(self.members)) != len(self.members):
            raise GroupError("duplicate members")
        object.__setattr__(self, "members", tuple(sorted(int(h) for h in self.members)))

    @property
    def d(self) -> int:
        return len(self.members)

    def check(self, topo: Topology) -> None:
        for h in (self.source, *self.members):
            if not 0 <= h < topo.params.hosts:
                raise GroupError(f"host {h} not in topology ({topo.params.hosts} hosts)")

    def dump(self) -> str:
        return f"g {self.group_id} src {self.source} members {','.join(map(str, self.members))}"

    @classmethod
    def parse(cls, line: str) -> "MulticastGroup":
        parts = line.split()
        if len(parts) != 6 or parts[0] != "g" or parts[2] != "src" or parts[4] != "members":
            raise GroupError(f"malformed group line: {line!r}")
        try:
            members = tuple(int(h) for h in parts[5].split(","))
            return cls(int(parts[1]), int(parts[3]), members)
        except ValueError as exc:
            raise GroupError(f"malformed group line: {line!r}") from exc


def dump_groups(groups: Iterable[MulticastGroup]) -> str:
    return "".join(g.dump() + "\n" for g in groups)


def load_groups(text: str) -> list[MulticastGroup]:
    return [MulticastGroup.parse(line) for line in text.splitlines() if line.strip()]


def generate_group(topo: Topology, d: int, seed: int, group_id: int = 0) -> MulticastGroup:
    """Uniform random source plus ``d`` distinct members drawn from the other hosts."""
    hosts = topo.params.hosts
    if not 1 <= d <= hosts - 1:
        raise GroupError(f"d={d} outside [1, {hosts - 1}]")
    rng = np.random.default_rng(seed)
    source = int(rng.integers(hosts))
    picks = rng.choice(hosts - 1, size=d, replace=False)
    picks = picks + (picks >= source)  # skip over the source
    return MulticastGroup(group_id, source, tuple(int(h) for h in picks))


def occupancy(topo: Topology, grp: MulticastGroup) -> np.ndarray:
    """``(n, m, l)`` boolean array; True where a port serves a member."""
    occ = np.zeros(topo.params.hosts, dtype=bool)
    occ[np.asarray(grp.members, dtype=np.int64)] = True
    return occ.reshape(topo.n, topo.m, topo.l)


def leaf_bitmap(topo: Topology, grp: MulticastGroup, pod: int, leaf: int) -> np.ndarray:
    if not (0 <= pod < topo.n and 0 <= leaf < topo.m):
        raise TopologyError(f"no leaf ({pod}, {leaf})")
    bits = np.zeros(topo.l, dtype=bool)
    for h in grp.members:
        loc = locate_host(topo, h)
        if loc.pod == pod and loc.leaf == leaf:
            bits[loc.port] = True
    return bits


def pod_vector(topo: Topology, grp: MulticastGroup, pod: int) -> np.ndarray:
    if not 0 <= pod < topo.n:
        raise TopologyError(f"no pod {pod}")
    return occupancy(topo, grp)[pod].reshape(-1).copy()


def destination_pods(topo: Topology, grp: MulticastGroup) -> list[int]:
    """Pods holding at least one member, the source's pod excluded."""
    src_pod = locate_host(topo, grp.source).pod
    pods = {locate_host(topo, h).pod for h in grp.members}
    pods.discard(src_pod)
    return sorted(pods)


def to_str(bits) -> str:
    return "".join("1" if b else "0" for b in bits)


def from_str(text: str) -> np.ndarray:
    if set(text) - {"0", "1"}:
        raise ValueError(f"not a bit string: {text!r}")
    return np.array([c == "1" for c in text], dtype=bool)
