"""Feasibility checking and the weighted placement objective."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

from .config import ObjectiveConfig
from .errors import ConfigError, ContractError
from .model import NsprGraph, PsnGraph, resource_demand

Path = Tuple[int, ...]


@dataclass(frozen=True)
class Mapping:
    """Placement decision: host per VNF (x) and physical path per virtual link (y)."""

    x: Tuple[Optional[int], ...]
    y: Tuple[Optional[Path], ...]

    @property
    def z(self) -> bool:
        return bool(self.x) and all(node is not None for node in self.x)

    @classmethod
    def empty(cls, n_vnfs: int) -> "Mapping":
        return cls((None,) * n_vnfs, (None,) * max(0, n_vnfs - 1))

    @classmethod
    def build(
        cls,
        x: Sequence[Optional[int]],
        y: Sequence[Optional[Sequence[int]]],
    ) -> "Mapping":
        return cls(
            tuple(x),
            tuple(None if path is None else tuple(path) for path in y),
        )

    def with_vnf(self, vnf_index: int, node: int, inbound: Optional[Sequence[int]]) -> "Mapping":
        x = list(self.x)
        y = list(self.y)
        x[vnf_index] = node
        if vnf_index > 0:
            y[vnf_index - 1] = None if inbound is None else tuple(inbound)
        return Mapping(tuple(x), tuple(y))


@dataclass(frozen=True)
class ObjectiveWeights:
    c1: float
    c2: float
    c3: float

    def __post_init__(self) -> None:
        if min(self.c1, self.c2, self.c3) < 0:
            raise ConfigError("Objective weights must be non-negative")
        if self.c1 == 0 and self.c2 == 0 and self.c3 == 0:
            raise ConfigError("Objective weights must not all be zero")

    @classmethod
    def default_for(cls, nspr: NsprGraph) -> "ObjectiveWeights":
        return cls(c1=nspr.size * 100.0, c2=1.0, c3=1.0)

    @classmethod
    def from_config(cls, config: ObjectiveConfig, nspr: NsprGraph) -> "ObjectiveWeights":
        c1 = nspr.size * 100.0 if config.c1 is None else config.c1
        return cls(c1=c1, c2=config.c2, c3=config.c3)


class ViolationKind(str, Enum):
    NODE_CPU = "NodeCpu"
    NODE_RAM = "NodeRam"
    LINK_BW = "LinkBw"
    PATH_DISCONNECTED = "PathDisconnected"
    INCOMPLETE_MAPPING = "IncompleteMapping"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    subject: int
    deficit: int = 0


def _path_violation(
    psn: PsnGraph, src: int, dst: int, path: Path
) -> bool:
    """True when ``path`` does not walk from ``src`` to ``dst`` without repeating a link."""
    if len(set(path)) != len(path):
        return True
    current = src
    for link_id in path:
        link = psn.links[link_id]
        if current not in link.endpoints:
            return True
        current = link.other(current)
    return current != dst


def check_feasible(psn: PsnGraph, nspr: NsprGraph, mapping: Mapping) -> List[Violation]:
    """List every constraint breached by placing ``mapping`` on the current residuals."""
    node_demand, link_demand = resource_demand(psn, mapping, nspr)
    violations: List[Violation] = []

    for node_id in sorted(node_demand):
        cpu, ram = node_demand[node_id]
        node = psn.nodes[node_id]
        if cpu > node.cap_cpu:
            violations.append(Violation(ViolationKind.NODE_CPU, node_id, cpu - node.cap_cpu))
        if ram > node.cap_ram:
            violations.append(Violation(ViolationKind.NODE_RAM, node_id, ram - node.cap_ram))

    for link_id in sorted(link_demand):
        link = psn.links[link_id]
        if link_demand[link_id] > link.cap_bw:
            violations.append(
                Violation(ViolationKind.LINK_BW, link_id, link_demand[link_id] - link.cap_bw)
            )

    for k, (vlink, path) in enumerate(zip(nspr.vlinks, mapping.y)):
        tail_host = mapping.x[vlink.tail]
        head_host = mapping.x[vlink.head]
        placed = tail_host is not None and head_host is not None
        if path is None:
            if placed:
                violations.append(Violation(ViolationKind.INCOMPLETE_MAPPING, k))
            continue
        if not placed:
            violations.append(Violation(ViolationKind.INCOMPLETE_MAPPING, k))
            continue
        assert tail_host is not None and head_host is not None
        if _path_violation(psn, tail_host, head_host, path):
            violations.append(Violation(ViolationKind.PATH_DISCONNECTED, k))

    return violations


def objective_terms(
    psn: PsnGraph, nspr: NsprGraph, mapping: Mapping
) -> Tuple[float, float, float]:
    """Return (acceptance, bandwidth consumption, load balancing) before weighting.

    The load-balancing term reads the residuals left once the whole mapping is
    placed on ``psn``.
    """
    node_demand, _ = resource_demand(psn, mapping, nspr)
    acceptance = 1.0 if mapping.z else 0.0
    bandwidth = float(
        sum(
            len(path) * vlink.req_bw
            for vlink, path in zip(nspr.vlinks, mapping.y)
            if path is not None
        )
    )
    load = 0.0
    for node_id in mapping.x:
        if node_id is None:
            continue
        node = psn.nodes[node_id]
        cpu, ram = node_demand[node_id]
        load += (node.cap_cpu - cpu) / node.max_cpu + (node.cap_ram - ram) / node.max_ram
    return acceptance, bandwidth, load


def objective_value(
    psn: PsnGraph, nspr: NsprGraph, mapping: Mapping, w: ObjectiveWeights
) -> float:
    violations = check_feasible(psn, nspr, mapping)
    if violations:
        raise ContractError(f"objective_value needs a feasible mapping, got {violations}")
    acceptance, bandwidth, load = objective_terms(psn, nspr, mapping)
    return w.c1 * acceptance - w.c2 * bandwidth + w.c3 * load
