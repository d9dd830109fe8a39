"""P-rule construction for Elmo (one packet) and Bert (one packet per cluster).

Each header is an ordered tuple of :class:`PRule` s::

    [upstream-leaf] [upstream-spine] [core] downstream-spine* downstream-leaf*

Downstream-spine rules identify their target by pod index (every spine of a
pod has the same downstream ports). Destination-pod leaves share a single
OR-compacted downstream-leaf rule per packet; leaves in the source's own pod
that are reached through the upstream spine get exact per-leaf rules in the
designated copy (copy 0) so they never receive extra transmissions.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .clustering import ClusterAssignment
from .groups import MulticastGroup, destination_pods, occupancy
from .topology import Topology, locate_host

WIRE_VERSION = 1
RULES_PRESENT = 0x80  # set in the version byte when a rule stream follows
LAST_RULE_FLAG = 0x8000
MAX_IDS = 0x7FFF


class Scope(enum.IntEnum):
    UP_LEAF = 0
    UP_SPINE = 1
    CORE = 2
    DOWN_SPINE = 3
    DOWN_LEAF = 4

    @property
    def upstream(self) -> bool:
        return self in (Scope.UP_LEAF, Scope.UP_SPINE)

    @property
    def has_ids(self) -> bool:
        return self in (Scope.DOWN_SPINE, Scope.DOWN_LEAF)


DOWNSTREAM_SCOPES = (Scope.CORE, Scope.DOWN_SPINE, Scope.DOWN_LEAF)


class EncodeError(ValueError):
    pass


class DecodeError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class PRule:
    scope: Scope
    switch_ids: tuple[int, ...]
    bitmap: tuple[int, ...]  # 0/1 per port (or per leaf / pod), bit 0 first
    multipath: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "scope", Scope(self.scope))
        object.__setattr__(self, "switch_ids", tuple(int(i) for i in self.switch_ids))
        bitmap = self.bitmap
        if isinstance(bitmap, str):
            if set(bitmap) - {"0", "1"}:
                raise EncodeError(f"bitmap string {bitmap!r} is not binary")
            bitmap = [c == "1" for c in bitmap]
        object.__setattr__(self, "bitmap", tuple(1 if b else 0 for b in bitmap))
        if bool(self.switch_ids) != self.scope.has_ids:
            raise EncodeError(f"{self.scope.name} rule with switch_ids={self.switch_ids}")
        if self.multipath and not self.scope.upstream:
            raise EncodeError(f"multipath flag on {self.scope.name} rule")

    def ports(self) -> list[int]:
        return [i for i, b in enumerate(self.bitmap) if b]

    def __str__(self) -> str:
        ids = ",".join(map(str, self.switch_ids))
        bits = "".join(map(str, self.bitmap))
        mp = " -M" if self.multipath else ""
        return f"{self.scope.name}[{ids}]:{bits}{mp}" if ids else f"{self.scope.name}:{bits}{mp}"


@dataclass(frozen=True)
class PacketHeader:
    group_id: int
    copy_index: int
    rules: tuple[PRule, ...]

    def find(self, scope: Scope) -> PRule | None:
        for rule in self.rules:
            if rule.scope == scope:
                return rule
        return None

    def without(self, rule: PRule) -> "PacketHeader":
        rules = list(self.rules)
        rules.remove(rule)
        return PacketHeader(self.group_id, self.copy_index, tuple(rules))


def scope_width(scope: Scope, topo: Topology) -> int:
    return {
        Scope.UP_LEAF: topo.l,
        Scope.UP_SPINE: topo.m,
        Scope.CORE: topo.n,
        Scope.DOWN_SPINE: topo.m,
        Scope.DOWN_LEAF: topo.l,
    }[scope]


def id_width(scope: Scope, topo: Topology) -> int:
    if scope == Scope.DOWN_SPINE:
        population = topo.params.spines
    elif scope == Scope.DOWN_LEAF:
        population = topo.params.leaves
    else:
        return 0
    return max(1, math.ceil(math.log2(population)))


def id_limit(scope: Scope, topo: Topology) -> int:
    return topo.n if scope == Scope.DOWN_SPINE else topo.params.leaves


def rule_bits(rule: PRule, topo: Topology) -> int:
    width = scope_width(rule.scope, topo)
    if rule.scope.upstream:
        return width + 1
    return len(rule.switch_ids) * id_width(rule.scope, topo) + width


def header_bits(header: PacketHeader, topo: Topology, scopes=None) -> int:
    return sum(
        rule_bits(r, topo) for r in header.rules if scopes is None or r.scope in scopes
    )


def downstream_bits(header: PacketHeader, topo: Topology) -> int:
    return header_bits(header, topo, DOWNSTREAM_SCOPES)


def combine_or(bitmaps) -> np.ndarray:
    bitmaps = [np.asarray(b, dtype=bool) for b in bitmaps]
    if not bitmaps:
        raise EncodeError("nothing to combine")
    width = bitmaps[0].shape
    if any(b.shape != width for b in bitmaps):
        raise EncodeError("bitmap width mismatch")
    return np.logical_or.reduce(bitmaps)


# -- encoders ---------------------------------------------------------------


def _sort_key(rule: PRule):
    return (rule.scope, rule.switch_ids[0] if rule.switch_ids else -1)


def _encode_copy(
    topo: Topology,
    grp: MulticastGroup,
    occ: np.ndarray,
    pods: Sequence[int],
    copy_index: int,
    designated: bool,
    compact_bitmap=None,
) -> PacketHeader:
    src = locate_host(topo, grp.source)
    pod_occ = occ[src.pod]
    leaf_has = pod_occ.any(axis=1)
    local_leaves = [j for j in range(topo.m) if leaf_has[j] and j != src.leaf]
    rules: list[PRule] = []

    if designated:
        leaf_ports = pod_occ[src.leaf]
        climb = bool(local_leaves) or bool(pods)
        spine_ports = [j in local_leaves for j in range(topo.m)]
    else:
        leaf_ports = np.zeros(topo.l, dtype=bool)
        climb = True
        spine_ports = [False] * topo.m

    if leaf_ports.any() or climb:
        rules.append(PRule(Scope.UP_LEAF, (), leaf_ports, multipath=climb))
    if climb:
        rules.append(PRule(Scope.UP_SPINE, (), spine_ports, multipath=bool(pods)))
    if designated:
        for j in local_leaves:
            rules.append(PRule(Scope.DOWN_LEAF, (topo.leaf_id(src.pod, j),), pod_occ[j]))

    if pods:
        rules.append(PRule(Scope.CORE, (), [p in pods for p in range(topo.n)]))
        leaf_ids: list[int] = []
        bitmaps = []
        for p in sorted(pods):
            has = occ[p].any(axis=1)
            rules.append(PRule(Scope.DOWN_SPINE, (p,), has))
            for j in np.flatnonzero(has):
                leaf_ids.append(topo.leaf_id(p, int(j)))
                bitmaps.append(occ[p, j])
        bitmap = combine_or(bitmaps) if compact_bitmap is None else compact_bitmap
        rules.append(PRule(Scope.DOWN_LEAF, tuple(leaf_ids), bitmap))

    rules.sort(key=_sort_key)
    return PacketHeader(grp.group_id, copy_index, tuple(rules))


def encode_elmo(topo: Topology, grp: MulticastGroup, compact_bitmap=None) -> PacketHeader:
    """Single-packet header with one OR-compacted rule for all destination leaves.

    ``compact_bitmap`` replaces the computed OR, for replaying a stated rule.
    """
    occ = occupancy(topo, grp)
    return _encode_copy(topo, grp, occ, destination_pods(topo, grp), 0, True, compact_bitmap)


def encode_bert(topo: Topology, grp: MulticastGroup, asg: ClusterAssignment) -> list[PacketHeader]:
    occ = occupancy(topo, grp)
    dest = destination_pods(topo, grp)
    missing = set(dest) - set(asg.assignment)
    if missing:
        raise EncodeError(f"assignment does not cover pods {sorted(missing)}")
    clusters = [[] for _ in range(asg.k_effective)]
    for p in dest:
        clusters[asg.assignment[p]].append(p)
    clusters = [c for c in clusters if c] or [[]]
    return [
        _encode_copy(topo, grp, occ, pods, u, designated=(u == 0))
        for u, pods in enumerate(clusters)
    ]


# -- wire form --------------------------------------------------------------


def serialize_header(header: PacketHeader, topo: Topology) -> bytes:
    """Envelope (version, group, copy) followed by bit-packed rules.

    The version byte has its top bit set when rules follow, so a header cut
    down to its envelope is still detected. Each rule is
    ``scope:3 | multipath:1 | last:1 id_count:15 | ids | bitmap``, big-endian,
    and the rule stream is zero-padded to a byte boundary.
    """
    if not 0 <= header.group_id <= 0xFFFF:
        raise EncodeError(f"group id {header.group_id} does not fit 16 bits")
    if not 0 <= header.copy_index <= 0xFF:
        raise EncodeError(f"copy index {header.copy_index} does not fit 8 bits")
    acc = 0
    nbits = 0

    def put(value: int, width: int) -> None:
        nonlocal acc, nbits
        acc = (acc << width) | value
        nbits += width

    for i, rule in enumerate(header.rules):
        width = scope_width(rule.scope, topo)
        if len(rule.bitmap) != width:
            raise EncodeError(f"{rule.scope.name} bitmap width {len(rule.bitmap)} != {width}")
        if len(rule.switch_ids) > MAX_IDS:
            raise EncodeError(f"{len(rule.switch_ids)} switch ids exceed {MAX_IDS}")
        put(int(rule.scope), 3)
        put(int(rule.multipath), 1)
        last = LAST_RULE_FLAG if i == len(header.rules) - 1 else 0
        put(last | len(rule.switch_ids), 16)
        idw = id_width(rule.scope, topo)
        for sid in rule.switch_ids:
            if not 0 <= sid < id_limit(rule.scope, topo):
                raise EncodeError(f"switch id {sid} out of range for {rule.scope.name}")
            put(sid, idw)
        for b in rule.bitmap:
            put(b, 1)
    pad = -nbits % 8
    put(0, pad)
    flags = RULES_PRESENT if header.rules else 0
    envelope = bytes([WIRE_VERSION | flags]) + header.group_id.to_bytes(2, "big") + bytes([header.copy_index])
    return envelope + acc.to_bytes(nbits // 8, "big")


def deserialize_header(data: bytes, topo: Topology) -> PacketHeader:
    data = bytes(data)
    if len(data) < 4:
        raise DecodeError("truncated envelope", len(data))
    if data[0] & ~RULES_PRESENT != WIRE_VERSION:
        raise DecodeError(f"unknown wire version {data[0] & ~RULES_PRESENT}", 0)
    group_id = int.from_bytes(data[1:3], "big")
    copy_index = data[3]
    body = data[4:]
    total = len(body) * 8
    value = int.from_bytes(body, "big")
    pos = 0

    def take(width: int) -> int:
        nonlocal pos
        if pos + width > total:
            raise DecodeError("truncated rule", 4 + pos // 8)
        out = (value >> (total - pos - width)) & ((1 << width) - 1)
        pos += width
        return out

    rules: list[PRule] = []
    last = not data[0] & RULES_PRESENT
    if last and body:
        raise DecodeError("rule bytes after an empty envelope", 4)
    while not last:
        start = 4 + pos // 8
        code = take(3)
        if code > max(Scope):
            raise DecodeError(f"bad scope code {code}", start)
        scope = Scope(code)
        multipath = bool(take(1))
        count_field = take(16)
        last = bool(count_field & LAST_RULE_FLAG)
        count = count_field & MAX_IDS
        if bool(count) != scope.has_ids:
            raise DecodeError(f"{scope.name} rule with {count} switch ids", start)
        if multipath and not scope.upstream:
            raise DecodeError(f"multipath flag on {scope.name} rule", start)
        idw = id_width(scope, topo)
        ids = tuple(take(idw) for _ in range(count))
        if any(i >= id_limit(scope, topo) for i in ids):
            raise DecodeError(f"switch id out of range for {scope.name}", start)
        bitmap = tuple(take(1) for _ in range(scope_width(scope, topo)))
        rule = PRule(scope, ids, bitmap, multipath)
        if rules and _sort_key(rule) < _sort_key(rules[-1]):
            raise DecodeError("rules out of order", start)
        rules.append(rule)
    if total - pos >= 8:
        raise DecodeError("trailing bytes after last rule", 4 + (pos + 7) // 8)
    if value & ((1 << (total - pos)) - 1):
        raise DecodeError("nonzero padding", 4 + pos // 8)
    return PacketHeader(group_id, copy_index, tuple(rules))
