"""Graph data model for the substrate network and slice requests."""

from __future__ import annotations

import copy
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, Iterator, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from .config import TopologyConfig
from .errors import ConfigError, RejectionError, ReleaseError, StructuralError

if TYPE_CHECKING:
    from .objective import Mapping

_LOGGER = logging.getLogger(__name__)

AllocationKey = Tuple[object, ...]


@dataclass
class PhysicalNode:
    id: int
    cap_cpu: int
    cap_ram: int
    max_cpu: int
    max_ram: int

    def __post_init__(self) -> None:
        if self.max_cpu <= 0 or self.max_ram <= 0:
            raise ConfigError(f"Node {self.id}: installed capacities must be > 0")
        if not (0 <= self.cap_cpu <= self.max_cpu and 0 <= self.cap_ram <= self.max_ram):
            raise ConfigError(f"Node {self.id}: residuals outside [0, max]")

    @classmethod
    def fresh(cls, node_id: int, max_cpu: int, max_ram: int) -> "PhysicalNode":
        return cls(node_id, max_cpu, max_ram, max_cpu, max_ram)


@dataclass
class PhysicalLink:
    id: int
    a: int
    b: int
    cap_bw: int
    max_bw: int

    def __post_init__(self) -> None:
        if self.a == self.b:
            raise ConfigError(f"Link {self.id}: endpoints must be distinct")
        if self.a > self.b:
            self.a, self.b = self.b, self.a
        if self.max_bw <= 0 or not 0 <= self.cap_bw <= self.max_bw:
            raise ConfigError(f"Link {self.id}: bandwidth outside [0, max] or max <= 0")

    @property
    def endpoints(self) -> Tuple[int, int]:
        return (self.a, self.b)

    def other(self, node: int) -> int:
        if node == self.a:
            return self.b
        if node == self.b:
            return self.a
        raise StructuralError(f"Node {node} is not an endpoint of link {self.id}")


@dataclass
class PsnGraph:
    """Physical substrate network with residual and installed capacities.

    ``allocations`` is the multiset of currently allocated (mapping, request)
    pairs, used to reject releases of mappings that are not allocated.
    """

    nodes: List[PhysicalNode]
    links: List[PhysicalLink]
    adjacency: List[List[int]] = field(default_factory=list)
    allocations: "Counter[AllocationKey]" = field(default_factory=Counter, repr=False)
    _pairs: Dict[Tuple[int, int], int] = field(
        default_factory=dict, init=False, repr=False, compare=False
    )
    _graph: Optional[nx.Graph] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self.adjacency:
            self.adjacency = [[] for _ in self.nodes]
            for link in self.links:
                self.adjacency[link.a].append(link.id)
                self.adjacency[link.b].append(link.id)
        self._pairs = {link.endpoints: link.id for link in self.links}

    @classmethod
    def from_edges(
        cls,
        node_caps: Sequence[Tuple[int, int]],
        edges: Sequence[Tuple[int, int, int]],
    ) -> "PsnGraph":
        """Build a fresh PSN from (max_cpu, max_ram) pairs and (a, b, max_bw) triples."""
        nodes = [PhysicalNode.fresh(i, cpu, ram) for i, (cpu, ram) in enumerate(node_caps)]
        links = [PhysicalLink(i, a, b, bw, bw) for i, (a, b, bw) in enumerate(edges)]
        psn = cls(nodes, links)
        psn.validate()
        return psn

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def total_cpu(self) -> int:
        return sum(node.max_cpu for node in self.nodes)

    def link_between(self, a: int, b: int) -> Optional[int]:
        return self._pairs.get((min(a, b), max(a, b)))

    def neighbors(self, node: int) -> Iterator[Tuple[int, PhysicalLink]]:
        for link_id in self.adjacency[node]:
            link = self.links[link_id]
            yield link.other(node), link

    def incident_bw(self, node: int) -> Tuple[int, int]:
        """Return (residual, installed) bandwidth summed over incident links."""
        residual = installed = 0
        for link_id in self.adjacency[node]:
            residual += self.links[link_id].cap_bw
            installed += self.links[link_id].max_bw
        return residual, installed

    def residuals(self) -> Tuple[Tuple[int, ...], Tuple[int, ...], Tuple[int, ...]]:
        return (
            tuple(node.cap_cpu for node in self.nodes),
            tuple(node.cap_ram for node in self.nodes),
            tuple(link.cap_bw for link in self.links),
        )

    def at_maxima(self) -> bool:
        return all(n.cap_cpu == n.max_cpu and n.cap_ram == n.max_ram for n in self.nodes) and all(
            link.cap_bw == link.max_bw for link in self.links
        )

    def clone(self) -> "PsnGraph":
        return copy.deepcopy(self)

    def topology(self) -> nx.Graph:
        """Cached structural view; edges carry the link id as ``id``."""
        if self._graph is None:
            self._graph = self.to_networkx()
        return self._graph

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(len(self.nodes)))
        for link in self.links:
            graph.add_edge(link.a, link.b, id=link.id)
        return graph

    def validate(self) -> None:
        for index, node in enumerate(self.nodes):
            if node.id != index:
                raise ConfigError(f"Node ids must be 0..n-1 in order, got {node.id} at {index}")
        if len(self.adjacency) != len(self.nodes):
            raise ConfigError("Adjacency length does not match node count")
        pairs = set()
        for index, link in enumerate(self.links):
            if link.id != index:
                raise ConfigError(f"Link ids must be 0..m-1 in order, got {link.id} at {index}")
            if not (0 <= link.a < len(self.nodes) and 0 <= link.b < len(self.nodes)):
                raise ConfigError(f"Link {link.id} refers to a missing node")
            if link.endpoints in pairs:
                raise ConfigError(f"Duplicate link between {link.a} and {link.b}")
            pairs.add(link.endpoints)
            if link.id not in self.adjacency[link.a] or link.id not in self.adjacency[link.b]:
                raise ConfigError(f"Link {link.id} missing from adjacency")
        for node_id, incident in enumerate(self.adjacency):
            for link_id in incident:
                if node_id not in self.links[link_id].endpoints:
                    raise ConfigError(f"Adjacency of node {node_id} lists foreign link {link_id}")
        if len(self.nodes) > 1 and not nx.is_connected(self.to_networkx()):
            raise ConfigError("PSN graph is not connected")


@dataclass(frozen=True)
class Vnf:
    index: int
    req_cpu: int
    req_ram: int

    def __post_init__(self) -> None:
        if self.req_cpu < 0 or self.req_ram < 0 or (self.req_cpu == 0 and self.req_ram == 0):
            raise ConfigError(f"VNF {self.index}: requirements must be >= 0 and not both zero")


@dataclass(frozen=True)
class VirtualLink:
    tail: int
    head: int
    req_bw: int

    def __post_init__(self) -> None:
        if self.req_bw < 0:
            raise ConfigError("Virtual link bandwidth must be >= 0")


@dataclass(frozen=True)
class NsprGraph:
    """Slice request: a chain of VNFs joined by virtual links."""

    vnfs: Tuple[Vnf, ...]
    vlinks: Tuple[VirtualLink, ...]

    def __post_init__(self) -> None:
        for position, vnf in enumerate(self.vnfs):
            if vnf.index != position:
                raise ConfigError("VNF indices must follow chain order")
        if len(self.vlinks) != max(0, len(self.vnfs) - 1):
            raise ConfigError("A chain of k VNFs needs exactly k-1 virtual links")
        for k, vlink in enumerate(self.vlinks):
            if (vlink.tail, vlink.head) != (k, k + 1):
                raise ConfigError(f"Virtual link {k} must join VNF {k} to VNF {k + 1}")

    @classmethod
    def chain(
        cls,
        requirements: Sequence[Tuple[int, int]],
        bandwidths: Sequence[int],
    ) -> "NsprGraph":
        vnfs = tuple(Vnf(i, cpu, ram) for i, (cpu, ram) in enumerate(requirements))
        vlinks = tuple(VirtualLink(k, k + 1, bw) for k, bw in enumerate(bandwidths))
        return cls(vnfs, vlinks)

    @property
    def size(self) -> int:
        return len(self.vnfs)

    @property
    def total_cpu(self) -> int:
        return sum(vnf.req_cpu for vnf in self.vnfs)

    @property
    def total_ram(self) -> int:
        return sum(vnf.req_ram for vnf in self.vnfs)

    def inbound_bw(self, vnf_index: int) -> int:
        return 0 if vnf_index == 0 else self.vlinks[vnf_index - 1].req_bw

    def signature(self) -> Tuple[object, ...]:
        return (
            tuple((v.req_cpu, v.req_ram) for v in self.vnfs),
            tuple(vl.req_bw for vl in self.vlinks),
        )


# -----------------------------------------------------------------------------


def _tier_profile(config: TopologyConfig, depth: int) -> Tuple[int, int, int]:
    tier = min(depth, len(config.tier_cpu) - 1)
    return config.tier_cpu[tier], config.tier_ram[tier], config.tier_bw[tier]


def _jitter(value: int, fraction: float, rng: np.random.Generator) -> int:
    if fraction <= 0.0:
        return value
    spread = int(value * fraction)
    return max(1, value + int(rng.integers(-spread, spread + 1)))


def build_psn(config: TopologyConfig) -> PsnGraph:
    """Build a hierarchical PSN: a balanced tree plus one shortcut ring per depth."""
    config.validate()
    rng = np.random.default_rng(config.seed)

    depths: List[int] = [0]
    parents: List[Optional[int]] = [None]
    frontier = 0
    while len(depths) < config.node_count:
        depth = depths[frontier]
        fanout = config.tier_fanouts[min(depth, len(config.tier_fanouts) - 1)]
        for _ in range(fanout):
            if len(depths) >= config.node_count:
                break
            depths.append(depth + 1)
            parents.append(frontier)
        frontier += 1

    nodes = []
    for node_id, depth in enumerate(depths):
        cpu, ram, _bw = _tier_profile(config, depth)
        nodes.append(
            PhysicalNode.fresh(
                node_id,
                _jitter(cpu, config.capacity_jitter, rng),
                _jitter(ram, config.capacity_jitter, rng),
            )
        )

    edges: List[Tuple[int, int, int]] = []
    seen = set()

    def _add(a: int, b: int, bw: int) -> None:
        pair = (min(a, b), max(a, b))
        if a == b or pair in seen:
            return
        seen.add(pair)
        edges.append((pair[0], pair[1], _jitter(bw, config.capacity_jitter, rng)))

    for child, parent in enumerate(parents):
        if parent is not None:
            _add(parent, child, _tier_profile(config, depths[child])[2])

    by_depth: Dict[int, List[int]] = {}
    for node_id, depth in enumerate(depths):
        by_depth.setdefault(depth, []).append(node_id)
    for depth, members in sorted(by_depth.items()):
        if len(members) < 2:
            continue
        bw = _tier_profile(config, depth)[2]
        for first, second in zip(members, members[1:]):
            _add(first, second, bw)
        if len(members) >= 3:
            _add(members[-1], members[0], bw)

    links = [PhysicalLink(i, a, b, bw, bw) for i, (a, b, bw) in enumerate(edges)]
    psn = PsnGraph(nodes, links)
    psn.validate()
    _LOGGER.debug(
        "Built PSN: nodes=%s links=%s total_cpu=%s", psn.node_count, len(links), psn.total_cpu
    )
    return psn


# -----------------------------------------------------------------------------


def _allocation_key(mapping: "Mapping", nspr: NsprGraph) -> AllocationKey:
    return (mapping.x, mapping.y, nspr.signature())


def resource_demand(
    psn: PsnGraph, mapping: "Mapping", nspr: NsprGraph
) -> Tuple[Dict[int, Tuple[int, int]], Dict[int, int]]:
    """Aggregate (cpu, ram) per node and bandwidth per link requested by a mapping."""
    if len(mapping.x) != nspr.size or len(mapping.y) != len(nspr.vlinks):
        raise StructuralError(
            f"Mapping shape ({len(mapping.x)}, {len(mapping.y)}) does not match request "
            f"({nspr.size}, {len(nspr.vlinks)})"
        )
    node_demand: Dict[int, Tuple[int, int]] = {}
    for vnf, node in zip(nspr.vnfs, mapping.x):
        if node is None:
            continue
        if not 0 <= node < psn.node_count:
            raise StructuralError(f"VNF {vnf.index} mapped to missing node {node}")
        cpu, ram = node_demand.get(node, (0, 0))
        node_demand[node] = (cpu + vnf.req_cpu, ram + vnf.req_ram)
    link_demand: Dict[int, int] = {}
    for vlink, path in zip(nspr.vlinks, mapping.y):
        if path is None:
            continue
        for link_id in path:
            if not 0 <= link_id < len(psn.links):
                raise StructuralError(f"Virtual link {vlink.tail} uses missing link {link_id}")
            link_demand[link_id] = link_demand.get(link_id, 0) + vlink.req_bw
    return node_demand, link_demand


def _apply(psn: PsnGraph, mapping: "Mapping", nspr: NsprGraph, sign: int) -> None:
    node_demand, link_demand = resource_demand(psn, mapping, nspr)
    for node_id, (cpu, ram) in node_demand.items():
        node = psn.nodes[node_id]
        node.cap_cpu -= sign * cpu
        node.cap_ram -= sign * ram
    for link_id, bw in link_demand.items():
        psn.links[link_id].cap_bw -= sign * bw


def allocate(psn: PsnGraph, mapping: "Mapping", nspr: NsprGraph) -> PsnGraph:
    """Commit a mapping to the PSN residuals; all or nothing."""
    from .objective import check_feasible

    violations = check_feasible(psn, nspr, mapping)
    if violations:
        raise RejectionError(violations)
    _apply(psn, mapping, nspr, +1)
    psn.allocations[_allocation_key(mapping, nspr)] += 1
    return psn


def release(psn: PsnGraph, mapping: "Mapping", nspr: NsprGraph) -> PsnGraph:
    """Undo a previous allocate of the same mapping and request."""
    key = _allocation_key(mapping, nspr)
    if psn.allocations.get(key, 0) <= 0:
        raise ReleaseError("Mapping is not allocated on this PSN (double or unknown release)")
    node_demand, link_demand = resource_demand(psn, mapping, nspr)
    for node_id, (cpu, ram) in node_demand.items():
        node = psn.nodes[node_id]
        if node.cap_cpu + cpu > node.max_cpu or node.cap_ram + ram > node.max_ram:
            raise ReleaseError(f"Release would exceed installed capacity on node {node_id}")
    for link_id, bw in link_demand.items():
        if psn.links[link_id].cap_bw + bw > psn.links[link_id].max_bw:
            raise ReleaseError(f"Release would exceed installed bandwidth on link {link_id}")
    _apply(psn, mapping, nspr, -1)
    psn.allocations[key] -= 1
    if psn.allocations[key] == 0:
        del psn.allocations[key]
    return psn


def reallocate(
    psn: PsnGraph,
    previous: Optional["Mapping"],
    mapping: "Mapping",
    nspr: NsprGraph,
) -> PsnGraph:
    """Replace an allocated partial mapping by an extended one; all or nothing."""
    if previous is None or not any(node is not None for node in previous.x):
        return allocate(psn, mapping, nspr)
    release(psn, previous, nspr)
    try:
        allocate(psn, mapping, nspr)
    except RejectionError:
        allocate(psn, previous, nspr)
        raise
    return psn
