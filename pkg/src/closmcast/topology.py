"""Parametric three-tier Clos topologies.

A topology has ``n`` pods, each with ``m`` leaf switches and ``s`` spine
switches. Every leaf serves ``l`` hosts (one per downstream port) and has one
uplink to each spine of its pod. Every spine has ``u`` uplinks; core
``(a, b)`` connects to spine ``a`` of every pod, so there are ``s * u`` cores
and any single core reaches every pod.

All IDs are dense 0-based integers per layer.
"""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np


class Layer(str, enum.Enum):
    HOST_LEAF = "host-leaf"
    LEAF_SPINE = "leaf-spine"
    SPINE_CORE = "spine-core"


class Direction(str, enum.Enum):
    UP = "up"
    DOWN = "down"


class TopologyError(ValueError):
    """Raised for invalid topology parameters or out-of-range IDs."""


@dataclass(frozen=True)
class TopologyParams:
    n: int  # pods
    m: int  # leaves per pod
    l: int  # host-facing ports per leaf  # noqa: E741
    s: int  # spines per pod
    u: int  # uplinks per spine

    def __post_init__(self) -> None:
        for name in ("n", "m", "l", "s", "u"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise TopologyError(f"{name} must be an integer, got {value!r}")
            if value < 1:
                raise TopologyError(f"{name} must be >= 1, got {value}")

    @property
    def hosts(self) -> int:
        return self.n * self.m * self.l

    @property
    def leaves(self) -> int:
        return self.n * self.m

    @property
    def spines(self) -> int:
        return self.n * self.s

    @property
    def cores(self) -> int:
        return self.s * self.u

    def as_dict(self) -> dict[str, int]:
        return {"n": self.n, "m": self.m, "l": self.l, "s": self.s, "u": self.u}

    def describe(self) -> str:
        return " ".join(f"{k}={v}" for k, v in self.as_dict().items())


class HostLocator(NamedTuple):
    pod: int
    leaf: int
    port: int


class LinkId(NamedTuple):
    layer: Layer
    direction: Direction
    index: int


def paper_preset() -> TopologyParams:
    """The 27,648-server evaluation topology (24 pods of 24 leaves x 48 ports)."""
    return TopologyParams(n=24, m=24, l=48, s=24, u=24)


def fig1_preset() -> TopologyParams:
    """The four-pod, 32-host topology of the worked example."""
    return TopologyParams(n=4, m=2, l=4, s=2, u=2)


PRESETS = {"paper": paper_preset, "fig1": fig1_preset}


@dataclass(frozen=True)
class Topology:
    """A built topology with its link table.

    ``links[layer]`` is a ``(count, 2)`` array of ``(lower, upper)`` node IDs,
    where the lower node is in the layer below (host, leaf or spine) and the
    upper node is in the layer above (leaf, spine or core). Each row is one
    physical link carrying two directed links, one per :class:`Direction`;
    the row number is the directed link's ``index``.
    """

    params: TopologyParams
    links: dict[Layer, np.ndarray] = field(repr=False)

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def m(self) -> int:
        return self.params.m

    @property
    def l(self) -> int:  # noqa: E743
        return self.params.l

    @property
    def s(self) -> int:
        return self.params.s

    @property
    def u(self) -> int:
        return self.params.u

    # -- ID helpers -------------------------------------------------------

    def host_id(self, pod: int, leaf: int, port: int) -> int:
        return (pod * self.m + leaf) * self.l + port

    def leaf_id(self, pod: int, leaf: int) -> int:
        return pod * self.m + leaf

    def spine_id(self, pod: int, spine: int) -> int:
        return pod * self.s + spine

    def core_id(self, a: int, b: int) -> int:
        return a * self.u + b

    def leaf_of_host(self, host: int) -> int:
        return host // self.l

    def pod_of_leaf(self, leaf: int) -> int:
        return leaf // self.m

    def pod_of_spine(self, spine: int) -> int:
        return spine // self.s

    # -- link index helpers ----------------------------------------------

    def host_leaf_link(self, host: int) -> int:
        return host

    def leaf_spine_link(self, leaf: int, spine_local: int) -> int:
        return leaf * self.s + spine_local

    def spine_core_link(self, spine: int, uplink: int) -> int:
        return spine * self.u + uplink

    def link_count(self, layer: Layer) -> int:
        return len(self.links[Layer(layer)])

    def serialize(self) -> bytes:
        """Stable byte form: parameters followed by the raw link tables."""
        parts = [self.params.describe().encode()]
        for layer in Layer:
            parts.append(np.ascontiguousarray(self.links[layer], dtype="<i8").tobytes())
        return b"\n".join(parts)

    def fingerprint(self) -> str:
        return hashlib.sha256(self.serialize()).hexdigest()[:16]


def build_topology(params: TopologyParams) -> Topology:
    if not isinstance(params, TopologyParams):
        raise TopologyError(f"expected TopologyParams, got {type(params).__name__}")
    n, m, l, s, u = params.n, params.m, params.l, params.s, params.u

    hosts = np.arange(n * m * l, dtype=np.int64)
    host_leaf = np.stack([hosts, hosts // l], axis=1)

    leaves = np.repeat(np.arange(n * m, dtype=np.int64), s)
    spine_local = np.tile(np.arange(s, dtype=np.int64), n * m)
    leaf_spine = np.stack([leaves, (leaves // m) * s + spine_local], axis=1)

    spines = np.repeat(np.arange(n * s, dtype=np.int64), u)
    uplink = np.tile(np.arange(u, dtype=np.int64), n * s)
    spine_core = np.stack([spines, (spines % s) * u + uplink], axis=1)

    links = {
        Layer.HOST_LEAF: host_leaf,
        Layer.LEAF_SPINE: leaf_spine,
        Layer.SPINE_CORE: spine_core,
    }
    for arr in links.values():
        arr.setflags(write=False)
    topo = Topology(params=params, links=links)
    _validate(topo)
    return topo


def _validate(topo: Topology) -> None:
    p = topo.params
    expected = {
        Layer.HOST_LEAF: p.n * p.m * p.l,
        Layer.LEAF_SPINE: p.n * p.m * p.s,
        Layer.SPINE_CORE: p.n * p.s * p.u,
    }
    for layer, count in expected.items():
        if len(topo.links[layer]) != count:
            raise TopologyError(
                f"{layer.value}: expected {count} links, built {len(topo.links[layer])}"
            )
    # every core reaches every pod exactly once
    per_core = np.bincount(topo.links[Layer.SPINE_CORE][:, 1], minlength=p.cores)
    if not np.all(per_core == p.n):
        raise TopologyError("core fan-out does not cover every pod")


def locate_host(topo: Topology, host: int) -> HostLocator:
    if not 0 <= host < topo.params.hosts:
        raise TopologyError(f"host {host} out of range [0, {topo.params.hosts})")
    leaf, port = divmod(int(host), topo.l)
    pod, leaf_local = divmod(leaf, topo.m)
    return HostLocator(pod, leaf_local, port)


def links_in_layer(topo: Topology, layer: Layer | str, direction: Direction | str) -> list[LinkId]:
    layer = Layer(layer)
    direction = Direction(direction)
    return [LinkId(layer, direction, i) for i in range(topo.link_count(layer))]
