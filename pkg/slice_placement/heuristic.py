"""Deterministic greedy placement (HEU) and bandwidth-aware virtual link routing."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import networkx as nx

from .errors import ContractError
from .model import NsprGraph, PsnGraph, reallocate
from .objective import Mapping

_LOGGER = logging.getLogger(__name__)

DEFAULT_C2_NORM = 0.1


@dataclass(frozen=True)
class CandidateScore:
    node: int
    score: float
    path: Tuple[int, ...]


def _feasible_view(psn: PsnGraph, req_bw: int) -> nx.Graph:
    graph = psn.topology()
    links = psn.links

    def _fits(a: int, b: int) -> bool:
        return links[graph[a][b]["id"]].cap_bw >= req_bw

    return nx.subgraph_view(graph, filter_edge=_fits)


def feasible_hops(psn: PsnGraph, src: int, req_bw: int) -> Dict[int, int]:
    """Hop distance from ``src`` to every node reachable over links with cap_bw >= req_bw."""
    return dict(nx.single_source_shortest_path_length(_feasible_view(psn, req_bw), src))


def map_virtual_link(psn: PsnGraph, src: int, dst: int, req_bw: int) -> Optional[List[int]]:
    """Minimum-hop bandwidth-feasible path from ``src`` to ``dst`` as link ids.

    Among equal-length paths the lexicographically smallest node sequence wins.
    """
    if src == dst:
        return []
    view = _feasible_view(psn, req_bw)
    dist = nx.single_source_shortest_path_length(view, dst)
    if src not in dist:
        return None
    graph = psn.topology()
    path: List[int] = []
    current = src
    while current != dst:
        step = min(n for n in view.neighbors(current) if dist.get(n) == dist[current] - 1)
        path.append(graph[current][step]["id"])
        current = step
    return path


def _check_order(partial: Mapping, nspr: NsprGraph, vnf_index: int) -> None:
    if not 0 <= vnf_index < nspr.size or len(partial.x) != nspr.size:
        raise ContractError(f"VNF index {vnf_index} out of range for a {nspr.size}-VNF request")
    placed = partial.x[:vnf_index]
    pending = partial.x[vnf_index:]
    if any(node is None for node in placed) or any(node is not None for node in pending):
        raise ContractError(f"VNFs must be placed in chain order before VNF {vnf_index}")


def heu_next_node(
    psn: PsnGraph,
    nspr: NsprGraph,
    partial: Mapping,
    vnf_index: int,
    c2_norm: float = DEFAULT_C2_NORM,
) -> Optional[CandidateScore]:
    """Best host for VNF ``vnf_index`` given residuals that already hold ``partial``."""
    _check_order(partial, nspr, vnf_index)
    vnf = nspr.vnfs[vnf_index]
    prev = partial.x[vnf_index - 1] if vnf_index > 0 else None
    hops: Optional[Dict[int, int]] = None
    if prev is not None:
        hops = feasible_hops(psn, prev, nspr.inbound_bw(vnf_index))

    best: Optional[Tuple[int, float]] = None
    for node in psn.nodes:
        if node.cap_cpu < vnf.req_cpu or node.cap_ram < vnf.req_ram:
            continue
        distance = 0
        if hops is not None:
            if node.id not in hops:
                continue
            distance = hops[node.id]
        score = (
            (node.cap_cpu - vnf.req_cpu) / node.max_cpu
            + (node.cap_ram - vnf.req_ram) / node.max_ram
            - c2_norm * distance
        )
        if best is None or score > best[1]:
            best = (node.id, score)

    if best is None:
        return None
    path: List[int] = []
    if prev is not None:
        routed = map_virtual_link(psn, prev, best[0], nspr.inbound_bw(vnf_index))
        assert routed is not None
        path = routed
    return CandidateScore(node=best[0], score=best[1], path=tuple(path))


def heu_place(
    psn: PsnGraph, nspr: NsprGraph, c2_norm: float = DEFAULT_C2_NORM
) -> Optional[Mapping]:
    """Greedy chain placement; returns None (reject) without touching ``psn``."""
    work = psn.clone()
    partial = Mapping.empty(nspr.size)
    for vnf_index in range(nspr.size):
        candidate = heu_next_node(work, nspr, partial, vnf_index, c2_norm)
        if candidate is None:
            _LOGGER.debug("HEU rejects request: no host for VNF %s", vnf_index)
            return None
        extended = partial.with_vnf(
            vnf_index, candidate.node, candidate.path if vnf_index > 0 else None
        )
        reallocate(work, partial, extended, nspr)
        partial = extended
    return partial
