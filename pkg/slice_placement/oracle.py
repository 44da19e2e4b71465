"""Exact depth-first branch-and-bound solver for small placement instances."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from typing import Optional, Tuple

from .heuristic import map_virtual_link
from .model import NsprGraph, PsnGraph, reallocate, release
from .objective import Mapping, ObjectiveWeights, objective_terms, objective_value

_LOGGER = logging.getLogger(__name__)

_BOUND_SLACK = 1e-9


@dataclass(frozen=True)
class OracleLimits:
    max_nodes: Optional[int] = 1_000_000
    time_limit_s: Optional[float] = None


@dataclass
class OracleResult:
    best: Optional[Tuple[Mapping, float]]
    nodes_explored: int
    certified: bool = True


class _Budget(Exception):
    pass


class _Search:
    def __init__(
        self,
        psn: PsnGraph,
        nspr: NsprGraph,
        weights: ObjectiveWeights,
        limits: OracleLimits,
    ) -> None:
        self.base = psn
        self.work = psn.clone()
        self.nspr = nspr
        self.weights = weights
        self.limits = limits
        self.deadline = (
            None if limits.time_limit_s is None else time.monotonic() + limits.time_limit_s
        )
        self.nodes_explored = 0
        self.best: Optional[Tuple[Mapping, float]] = None

    def _tick(self) -> None:
        self.nodes_explored += 1
        if self.limits.max_nodes is not None and self.nodes_explored > self.limits.max_nodes:
            raise _Budget()
        if self.deadline is not None and time.monotonic() > self.deadline:
            raise _Budget()

    def _upper_bound(self, partial: Mapping, remaining: int) -> float:
        # Placed VNFs can only lose residual ratio as more VNFs land, and each
        # remaining VNF contributes at most 2 to the load term.
        _acceptance, bandwidth, load = objective_terms(self.base, self.nspr, partial)
        w = self.weights
        return w.c1 - w.c2 * bandwidth + w.c3 * (load + 2.0 * remaining)

    def run(self) -> None:
        self._descend(Mapping.empty(self.nspr.size), 0)

    def _descend(self, partial: Mapping, vnf_index: int) -> None:
        if vnf_index == self.nspr.size:
            score = objective_value(self.base, self.nspr, partial, self.weights)
            if self.best is None or score > self.best[1]:
                self.best = (partial, score)
            return

        vnf = self.nspr.vnfs[vnf_index]
        prev = partial.x[vnf_index - 1] if vnf_index > 0 else None
        for node in self.work.nodes:
            self._tick()
            if node.cap_cpu < vnf.req_cpu or node.cap_ram < vnf.req_ram:
                continue
            path = None
            if prev is not None:
                path = map_virtual_link(
                    self.work, prev, node.id, self.nspr.inbound_bw(vnf_index)
                )
                if path is None:
                    continue
            extended = partial.with_vnf(vnf_index, node.id, path)
            remaining = self.nspr.size - vnf_index - 1
            if self.best is not None and (
                self._upper_bound(extended, remaining) < self.best[1] - _BOUND_SLACK
            ):
                continue
            reallocate(self.work, partial, extended, self.nspr)
            try:
                self._descend(extended, vnf_index + 1)
            finally:
                release(self.work, extended, self.nspr)
                if vnf_index > 0:
                    reallocate(self.work, None, partial, self.nspr)


def exact_place(
    psn: PsnGraph,
    nspr: NsprGraph,
    w: ObjectiveWeights,
    limits: Optional[OracleLimits] = None,
) -> OracleResult:
    """Best feasible complete mapping with vlinks on minimum-hop feasible paths."""
    limits = OracleLimits() if limits is None else limits
    if nspr.total_cpu > sum(n.cap_cpu for n in psn.nodes) or nspr.total_ram > sum(
        n.cap_ram for n in psn.nodes
    ):
        return OracleResult(best=None, nodes_explored=0, certified=True)

    search = _Search(psn, nspr, w, limits)
    certified = True
    try:
        search.run()
    except _Budget:
        certified = False
        _LOGGER.warning(
            "Oracle budget exhausted after %s nodes; returning best-so-far",
            search.nodes_explored,
        )
    return OracleResult(best=search.best, nodes_explored=search.nodes_explored, certified=certified)
