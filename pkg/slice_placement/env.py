"""Sequential per-VNF placement episodes over a live PSN."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .config import RewardConfig
from .errors import ContractError
from .heuristic import feasible_hops, map_virtual_link
from .model import NsprGraph, PsnGraph, reallocate, release
from .objective import Mapping

_LOGGER = logging.getLogger(__name__)

NO_PREVIOUS_NODE = -1

# Boolean vector over PSN nodes: True where the current VNF may be placed.
ActionMask = np.ndarray


@dataclass(frozen=True)
class EnvState:
    cap_cpu: np.ndarray
    cap_ram: np.ndarray
    bw_agg: np.ndarray
    placement_count: np.ndarray
    req_cpu: int
    req_ram: int
    req_bw: int
    m_v: int
    prev_node: int
    vnf_index: int


@dataclass(frozen=True)
class StepOutcome:
    next_state: EnvState
    reward: float
    done: bool
    accepted: bool = False


def observe(psn: PsnGraph, nspr: NsprGraph, partial: Mapping, vnf_index: int) -> EnvState:
    counts = np.zeros(psn.node_count, dtype=np.int64)
    for node in partial.x:
        if node is not None:
            counts[node] += 1
    if vnf_index < nspr.size:
        vnf = nspr.vnfs[vnf_index]
        req_cpu, req_ram, req_bw = vnf.req_cpu, vnf.req_ram, nspr.inbound_bw(vnf_index)
    else:
        req_cpu = req_ram = req_bw = 0
    prev = partial.x[vnf_index - 1] if 0 < vnf_index <= nspr.size else None
    return EnvState(
        cap_cpu=np.array([n.cap_cpu for n in psn.nodes], dtype=np.int64),
        cap_ram=np.array([n.cap_ram for n in psn.nodes], dtype=np.int64),
        bw_agg=np.array([psn.incident_bw(n.id)[0] for n in psn.nodes], dtype=np.int64),
        placement_count=counts,
        req_cpu=req_cpu,
        req_ram=req_ram,
        req_bw=req_bw,
        m_v=nspr.size - vnf_index,
        prev_node=NO_PREVIOUS_NODE if prev is None else prev,
        vnf_index=vnf_index,
    )


def valid_actions(state: EnvState, psn: PsnGraph) -> ActionMask:
    mask = (state.cap_cpu >= state.req_cpu) & (state.cap_ram >= state.req_ram)
    if state.prev_node != NO_PREVIOUS_NODE:
        reachable = np.zeros(psn.node_count, dtype=bool)
        reachable[list(feasible_hops(psn, state.prev_node, state.req_bw))] = True
        mask &= reachable
    return mask


def feature_size(node_count: int) -> int:
    return 4 * node_count + 5


def encode_state(state: EnvState, psn: PsnGraph, n_vnfs: int) -> np.ndarray:
    """Fixed-order feature vector of length 4*|N| + 5.

    Per node (node-major): cap_cpu/max_cpu, cap_ram/max_ram, bw_agg/bw_agg_max,
    placement_count/|V|; then req_cpu, req_ram, req_bw scaled by the PSN-wide
    maxima, m_v/|V| and (prev_node + 1)/|N| (0 for the first VNF).
    """
    max_cpu = np.array([n.max_cpu for n in psn.nodes], dtype=float)
    max_ram = np.array([n.max_ram for n in psn.nodes], dtype=float)
    bw_max = np.array([psn.incident_bw(n.id)[1] for n in psn.nodes], dtype=float)
    bw_ratio = np.divide(state.bw_agg, bw_max, out=np.zeros_like(bw_max), where=bw_max > 0)
    per_node = np.stack(
        [
            state.cap_cpu / max_cpu,
            state.cap_ram / max_ram,
            bw_ratio,
            state.placement_count / max(1, n_vnfs),
        ],
        axis=1,
    )
    link_max = max((link.max_bw for link in psn.links), default=1)
    tail = np.array(
        [
            state.req_cpu / max_cpu.max(),
            state.req_ram / max_ram.max(),
            state.req_bw / link_max,
            state.m_v / max(1, n_vnfs),
            (state.prev_node + 1) / psn.node_count,
        ]
    )
    return np.concatenate([per_node.ravel(), tail])


class SlicePlacementEnv:
    """One request at a time; placements are committed to ``psn`` step by step.

    The per-step reward is the marginal change of the weighted objective with
    weights (r_success, c2_r, c3_r), so an accepted episode's undiscounted
    return equals that objective evaluated on the pre-episode residuals.
    """

    def __init__(self, reward: Optional[RewardConfig] = None) -> None:
        self.reward = RewardConfig() if reward is None else reward
        self.psn: Optional[PsnGraph] = None
        self.nspr: Optional[NsprGraph] = None
        self.partial: Mapping = Mapping.empty(0)
        self.done = True
        self.accepted = False
        self._vnf_index = 0

    @property
    def mapping(self) -> Mapping:
        return self.partial

    def reset(self, psn: PsnGraph, nspr: NsprGraph) -> EnvState:
        if nspr.size == 0:
            raise ContractError("Cannot place an empty request")
        self.psn = psn
        self.nspr = nspr
        self.partial = Mapping.empty(nspr.size)
        self.done = False
        self.accepted = False
        self._vnf_index = 0
        return observe(psn, nspr, self.partial, 0)

    def valid_actions(self, state: EnvState) -> ActionMask:
        assert self.psn is not None
        return valid_actions(state, self.psn)

    def features(self, state: EnvState) -> np.ndarray:
        assert self.psn is not None and self.nspr is not None
        return encode_state(state, self.psn, self.nspr.size)

    def _load_term(self, mapping: Mapping) -> float:
        assert self.psn is not None
        total = 0.0
        for node_id in mapping.x:
            if node_id is not None:
                node = self.psn.nodes[node_id]
                total += node.cap_cpu / node.max_cpu + node.cap_ram / node.max_ram
        return total

    def _check_live(self, state: Optional[EnvState]) -> None:
        if self.done or self.psn is None or self.nspr is None:
            raise ContractError("Episode is finished; call reset() first")
        if state is not None and state.vnf_index != self._vnf_index:
            raise ContractError(
                f"Stale state for VNF {state.vnf_index}, episode is at VNF {self._vnf_index}"
            )

    def reject(self) -> StepOutcome:
        """Reject the request, rolling back every placement of this episode."""
        self._check_live(None)
        assert self.psn is not None and self.nspr is not None
        if any(node is not None for node in self.partial.x):
            release(self.psn, self.partial, self.nspr)
        self.partial = Mapping.empty(self.nspr.size)
        self.done = True
        self.accepted = False
        _LOGGER.debug("Episode rejected at VNF %s", self._vnf_index)
        return StepOutcome(
            next_state=observe(self.psn, self.nspr, self.partial, 0),
            reward=self.reward.r_reject,
            done=True,
            accepted=False,
        )

    def step(self, state: EnvState, action: int) -> StepOutcome:
        self._check_live(state)
        assert self.psn is not None and self.nspr is not None
        mask = self.valid_actions(state)
        if not 0 <= action < len(mask) or not mask[action]:
            return self.reject()

        k = self._vnf_index
        path = None
        if k > 0:
            path = map_virtual_link(self.psn, state.prev_node, action, state.req_bw)
            assert path is not None
        before = self._load_term(self.partial)
        extended = self.partial.with_vnf(k, action, path)
        reallocate(self.psn, self.partial, extended, self.nspr)
        self.partial = extended
        after = self._load_term(extended)

        hops = 0 if path is None else len(path)
        reward = self.reward.c3_r * (after - before) - self.reward.c2_r * hops * state.req_bw
        self._vnf_index = k + 1
        if self._vnf_index == self.nspr.size:
            self.done = True
            self.accepted = True
            reward += self.reward.r_success
        return StepOutcome(
            next_state=observe(self.psn, self.nspr, self.partial, self._vnf_index),
            reward=reward,
            done=self.done,
            accepted=self.accepted,
        )
