"""Hop-by-hop packet walk through the Clos switch model.

Every switch matches the rule meant for it, forwards accordingly and strips
that rule from the copy it emits. Upstream switches pick one uplink by
per-flow ECMP hashing. :func:`simulate_delivery` counts what every directed
link and every host sees, which makes it the brute-force check for the
closed-form extra-transmission counts in :mod:`closmcast.analytics`.
"""

from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .encoder import PacketHeader, Scope, header_bits, scope_width
from .groups import MulticastGroup
from .topology import Direction, Layer, LinkId, Topology

MAX_HOPS = 6  # host-leaf-spine-core-spine-leaf-host


class SwitchLayer(str, enum.Enum):
    LEAF = "leaf"
    SPINE = "spine"
    CORE = "core"


class Arrival(str, enum.Enum):
    FROM_HOST = "from-host"
    FROM_BELOW = "from-below"
    FROM_ABOVE = "from-above"


class ForwardingError(RuntimeError):
    pass


class SwitchContext(NamedTuple):
    layer: SwitchLayer
    switch_id: int  # layer-global ID
    pod: int  # -1 for cores
    arrival: Arrival


class Egress(NamedTuple):
    link: LinkId
    host: int | None = None
    next_hop: SwitchContext | None = None


EcmpPolicy = Callable[[Sequence[LinkId]], LinkId]


def ecmp_choose(flow_key: tuple[int, ...], options: Sequence[LinkId], seed: int, salt: int = 0) -> LinkId:
    """Hash ``(flow_key, seed, salt)`` onto one of ``options``.

    ``salt`` lets different hops of the same flow hash independently.
    """
    if not options:
        raise ForwardingError("ECMP with no options")
    if len(options) == 1:
        return options[0]
    payload = struct.pack(f">{len(flow_key) + 2}q", *flow_key, seed, salt)
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return options[int.from_bytes(digest, "big") % len(options)]


def _matching(header: PacketHeader, scope: Scope, switch_key: int | None, topo: Topology):
    found = None
    for rule in header.rules:
        if rule.scope != scope:
            continue
        if switch_key is not None and switch_key not in rule.switch_ids:
            continue
        if found is not None:
            raise ForwardingError(f"two {scope.name} rules match switch {switch_key}")
        found = rule
    if found is not None and len(found.bitmap) != scope_width(scope, topo):
        raise ForwardingError(
            f"{scope.name} bitmap width {len(found.bitmap)} != {scope_width(scope, topo)}"
        )
    return found


def process_at_switch(
    header: PacketHeader, ctx: SwitchContext, topo: Topology, ecmp: EcmpPolicy
) -> tuple[PacketHeader, list[Egress]]:
    out: list[Egress] = []
    t = topo

    if ctx.layer == SwitchLayer.LEAF:
        leaf = ctx.switch_id
        if ctx.arrival == Arrival.FROM_HOST:
            rule = _matching(header, Scope.UP_LEAF, None, t)
        else:
            rule = _matching(header, Scope.DOWN_LEAF, leaf, t)
        if rule is None:
            return header, out
        for port in rule.ports():
            host = leaf * t.l + port
            out.append(Egress(LinkId(Layer.HOST_LEAF, Direction.DOWN, host), host=host))
        if rule.multipath:
            options = [LinkId(Layer.LEAF_SPINE, Direction.UP, t.leaf_spine_link(leaf, a)) for a in range(t.s)]
            link = ecmp(options)
            a = link.index - leaf * t.s
            spine = t.spine_id(ctx.pod, a)
            out.append(Egress(link, next_hop=SwitchContext(SwitchLayer.SPINE, spine, ctx.pod, Arrival.FROM_BELOW)))
        return header.without(rule), out

    if ctx.layer == SwitchLayer.SPINE:
        spine = ctx.switch_id
        a = spine - ctx.pod * t.s
        if ctx.arrival == Arrival.FROM_BELOW:
            rule = _matching(header, Scope.UP_SPINE, None, t)
        else:
            rule = _matching(header, Scope.DOWN_SPINE, ctx.pod, t)
        if rule is None:
            return header, out
        for j in rule.ports():
            leaf = t.leaf_id(ctx.pod, j)
            link = LinkId(Layer.LEAF_SPINE, Direction.DOWN, t.leaf_spine_link(leaf, a))
            out.append(Egress(link, next_hop=SwitchContext(SwitchLayer.LEAF, leaf, ctx.pod, Arrival.FROM_ABOVE)))
        if rule.multipath:
            options = [LinkId(Layer.SPINE_CORE, Direction.UP, t.spine_core_link(spine, b)) for b in range(t.u)]
            link = ecmp(options)
            b = link.index - spine * t.u
            out.append(Egress(link, next_hop=SwitchContext(SwitchLayer.CORE, t.core_id(a, b), -1, Arrival.FROM_BELOW)))
        return header.without(rule), out

    rule = _matching(header, Scope.CORE, None, t)
    if rule is None:
        return header, out
    a, b = divmod(ctx.switch_id, t.u)
    for pod in rule.ports():
        spine = t.spine_id(pod, a)
        link = LinkId(Layer.SPINE_CORE, Direction.DOWN, t.spine_core_link(spine, b))
        out.append(Egress(link, next_hop=SwitchContext(SwitchLayer.SPINE, spine, pod, Arrival.FROM_ABOVE)))
    return header.without(rule), out


@dataclass
class DeliveryReport:
    """Counts from walking every header copy of one group.

    ``host_counts[c, h]`` is how many packets of copy ``c`` reached host ``h``.
    ``link_packets`` and ``link_bits`` hold, per ``(layer, direction)``, the
    packets crossing each directed link and the summed header bits they
    carried at that hop.
    """

    group_id: int
    source: int
    host_counts: np.ndarray
    link_packets: dict[tuple[Layer, Direction], np.ndarray]
    link_bits: dict[tuple[Layer, Direction], np.ndarray]
    paths: list[tuple[int, ...]] | None = field(default=None, repr=False)

    @property
    def copies(self) -> int:
        return self.host_counts.shape[0]

    def deliveries(self) -> np.ndarray:
        return self.host_counts.sum(axis=0)

    def non_member_deliveries(self, grp: MulticastGroup) -> int:
        per_host = self.deliveries()
        mask = np.ones(len(per_host), dtype=bool)
        mask[list(grp.members)] = False
        return int(per_host[mask].sum())

    def layer_totals(self) -> dict[tuple[Layer, Direction], int]:
        return {key: int(arr.sum()) for key, arr in self.link_packets.items()}


def simulate_delivery(
    topo: Topology,
    headers: Sequence[PacketHeader],
    source: int,
    seed: int,
    trace: bool = False,
) -> DeliveryReport:
    """Walk every copy from the source hypervisor down to the hosts.

    With ``trace=True`` the report also lists, for every delivered packet,
    the header sizes seen on each link of its path.
    """
    keys = [(layer, d) for layer in Layer for d in Direction]
    packets = {k: np.zeros(topo.link_count(k[0]), dtype=np.int64) for k in keys}
    bits = {k: np.zeros(topo.link_count(k[0]), dtype=np.int64) for k in keys}
    host_counts = np.zeros((len(headers), topo.params.hosts), dtype=np.int64)
    paths: list[tuple[int, ...]] | None = [] if trace else None
    group_id = headers[0].group_id if headers else 0
    src_leaf = topo.leaf_of_host(source)
    src_pod = topo.pod_of_leaf(src_leaf)

    for c, header in enumerate(headers):
        if not header.rules:
            continue
        flow = (header.group_id, header.copy_index)
        salts = {SwitchLayer.LEAF: 1, SwitchLayer.SPINE: 2}

        size = header_bits(header, topo)
        first = LinkId(Layer.HOST_LEAF, Direction.UP, topo.host_leaf_link(source))
        packets[(first.layer, first.direction)][first.index] += 1
        bits[(first.layer, first.direction)][first.index] += size
        ctx = SwitchContext(SwitchLayer.LEAF, src_leaf, src_pod, Arrival.FROM_HOST)
        stack = [(ctx, header, (size,))]
        while stack:
            ctx, hdr, trail = stack.pop()
            if len(trail) > MAX_HOPS:
                raise ForwardingError(f"copy {c} exceeded {MAX_HOPS} hops")

            def policy(options, _salt=salts.get(ctx.layer, 0)):
                return ecmp_choose(flow, options, seed, _salt)

            stripped, egress = process_at_switch(hdr, ctx, topo, policy)
            if not egress:
                continue
            size = header_bits(stripped, topo)
            for e in egress:
                key = (e.link.layer, e.link.direction)
                packets[key][e.link.index] += 1
                bits[key][e.link.index] += size
                if e.host is not None:
                    host_counts[c, e.host] += 1
                    if paths is not None:
                        paths.append(trail + (size,))
                else:
                    stack.append((e.next_hop, stripped, trail + (size,)))

    return DeliveryReport(group_id, source, host_counts, packets, bits, paths)
