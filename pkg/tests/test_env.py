import itertools

import numpy as np
import pytest

from slice_placement.config import RewardConfig
from slice_placement.env import (
    NO_PREVIOUS_NODE,
    SlicePlacementEnv,
    encode_state,
    feature_size,
    observe,
    valid_actions,
)
from slice_placement.errors import ContractError
from slice_placement.heuristic import heu_place
from slice_placement.model import NsprGraph, PhysicalLink, PhysicalNode, PsnGraph, allocate, release
from slice_placement.objective import Mapping, ObjectiveWeights, check_feasible, objective_value


def _line_psn() -> PsnGraph:
    return PsnGraph.from_edges([(10, 10)] * 3, [(0, 1, 5), (1, 2, 5)])


def test_initial_observation_mirrors_psn() -> None:
    psn = _line_psn()
    nspr = NsprGraph.chain([(1, 1)] * 5, [1] * 4)
    state = observe(psn, nspr, Mapping.empty(5), 0)
    assert state.m_v == 5
    assert state.placement_count.sum() == 0
    assert state.prev_node == NO_PREVIOUS_NODE
    assert list(state.cap_cpu) == [n.cap_cpu for n in psn.nodes]
    assert list(state.cap_ram) == [n.cap_ram for n in psn.nodes]
    assert list(state.bw_agg) == [5, 10, 5]


def test_mask_on_fresh_psn_and_capacity_filter() -> None:
    psn = PsnGraph.from_edges([(10, 10), (1, 10), (10, 10)], [(0, 1, 5), (1, 2, 5)])
    env = SlicePlacementEnv()
    state = env.reset(psn, NsprGraph.chain([(2, 2)], []))
    assert list(env.valid_actions(state)) == [True, False, True]
    state = env.reset(_line_psn(), NsprGraph.chain([(2, 2)], []))
    assert env.valid_actions(state).all()


def test_saturated_cut_leaves_only_colocation() -> None:
    nodes = [PhysicalNode.fresh(0, 10, 10), PhysicalNode.fresh(1, 10, 10)]
    psn = PsnGraph(nodes, [PhysicalLink(0, 0, 1, 0, 5)])
    env = SlicePlacementEnv()
    state = env.reset(psn, NsprGraph.chain([(2, 2), (2, 2)], [1]))
    outcome = env.step(state, 0)
    assert list(valid_actions(outcome.next_state, psn)) == [True, False]


def test_mid_episode_step() -> None:
    env = SlicePlacementEnv()
    state = env.reset(_line_psn(), NsprGraph.chain([(2, 2)] * 3, [1, 1]))
    outcome = env.step(state, 1)
    assert not outcome.done
    assert outcome.next_state.m_v == 2
    assert outcome.next_state.prev_node == 1
    assert outcome.next_state.placement_count[1] == 1
    assert outcome.next_state.req_bw == 1


def test_ineligible_action_rolls_back() -> None:
    psn = PsnGraph.from_edges([(10, 10), (10, 10), (1, 1)], [(0, 1, 5), (1, 2, 5)])
    before = psn.residuals()
    env = SlicePlacementEnv()
    state = env.reset(psn, NsprGraph.chain([(2, 2), (2, 2)], [1]))
    state = env.step(state, 0).next_state
    outcome = env.step(state, 2)
    assert outcome.done
    assert not outcome.accepted
    assert outcome.reward == RewardConfig().r_reject
    assert psn.residuals() == before
    assert not psn.allocations


def test_single_vnf_final_step_reward() -> None:
    psn = PsnGraph.from_edges([(10, 10)], [])
    env = SlicePlacementEnv(RewardConfig(r_success=10.0, c2_r=0.1, c3_r=1.0))
    state = env.reset(psn, NsprGraph.chain([(2, 2)], []))
    outcome = env.step(state, 0)
    assert outcome.done and outcome.accepted
    assert outcome.reward == pytest.approx(11.6)


def test_colocated_chain_rewards_marginal_load() -> None:
    psn = PsnGraph.from_edges([(10, 10)], [])
    pre = psn.clone()
    nspr = NsprGraph.chain([(1, 1), (1, 1)], [1])
    env = SlicePlacementEnv(RewardConfig(r_success=10.0, c2_r=0.1, c3_r=1.0))
    first = env.step(env.reset(psn, nspr), 0)
    assert first.reward == pytest.approx(1.8)
    last = env.step(first.next_state, 0)
    assert last.done and last.accepted
    assert env.mapping == Mapping.build([0, 0], [[]])
    # the second VNF lowers both co-located load ratios from 0.9 to 0.8
    assert last.reward == pytest.approx(11.4)
    weights = ObjectiveWeights(10.0, 0.1, 1.0)
    assert first.reward + last.reward == pytest.approx(objective_value(pre, nspr, env.mapping, weights))


def test_episode_return_equals_reward_weighted_objective() -> None:
    psn = _line_psn()
    pre = psn.clone()
    nspr = NsprGraph.chain([(2, 2), (3, 3), (1, 1)], [1, 2])
    reward = RewardConfig()
    env = SlicePlacementEnv(reward)
    state = env.reset(psn, nspr)
    total = 0.0
    for action in (0, 1, 1):
        outcome = env.step(state, action)
        total += outcome.reward
        state = outcome.next_state
    assert outcome.accepted
    assert check_feasible(pre, nspr, env.mapping) == []
    weights = ObjectiveWeights(reward.r_success, reward.c2_r, reward.c3_r)
    assert total == pytest.approx(objective_value(pre, nspr, env.mapping, weights))
    assert len(psn.allocations) == 1


def test_reject_releases_partial_placement() -> None:
    psn = _line_psn()
    env = SlicePlacementEnv()
    state = env.reset(psn, NsprGraph.chain([(2, 2), (2, 2)], [1]))
    env.step(state, 0)
    outcome = env.reject()
    assert outcome.done and not outcome.accepted
    assert psn.at_maxima()


def test_finished_or_stale_episodes_are_contract_errors() -> None:
    env = SlicePlacementEnv()
    state = env.reset(_line_psn(), NsprGraph.chain([(1, 1), (1, 1)], [1]))
    env.step(state, 0)
    with pytest.raises(ContractError):
        env.step(state, 0)
    env.reject()
    with pytest.raises(ContractError):
        env.reject()


def test_feature_vector_layout() -> None:
    psn = _line_psn()
    nspr = NsprGraph.chain([(2, 2)] * 2, [1])
    state = observe(psn, nspr, Mapping.empty(2), 0)
    features = encode_state(state, psn, nspr.size)
    assert features.shape == (feature_size(psn.node_count),)
    assert np.all((features >= 0.0) & (features <= 1.0))
    assert features[:4].tolist() == [1.0, 1.0, 1.0, 0.0]
    assert features[-1] == 0.0


def _random_instance(rng: np.random.Generator) -> tuple:
    count = int(rng.integers(1, 6))
    caps = [(int(rng.integers(2, 9)), int(rng.integers(2, 9))) for _ in range(count)]
    edges = [(int(rng.integers(i)), i, int(rng.integers(1, 5))) for i in range(1, count)]
    pairs = {(a, b) for a, b, _ in edges}
    for a, b in itertools.combinations(range(count), 2):
        if (a, b) not in pairs and rng.random() < 0.3:
            edges.append((a, b, int(rng.integers(1, 5))))
    psn = PsnGraph.from_edges(caps, edges)

    def chain() -> NsprGraph:
        size = int(rng.integers(1, 5))
        return NsprGraph.chain(
            [(int(rng.integers(1, 5)), int(rng.integers(1, 5))) for _ in range(size)],
            [int(rng.integers(0, 4)) for _ in range(size - 1)],
        )

    # occupy part of the PSN so masks see residuals below the installed maxima
    if rng.random() < 0.5:
        tenant = chain()
        placed = heu_place(psn, tenant)
        if placed is not None:
            allocate(psn, placed, tenant)
    return psn, chain()


def test_random_episodes_keep_masks_sound_and_roll_back_exactly() -> None:
    rng = np.random.default_rng(31)
    reward = RewardConfig()
    weights = ObjectiveWeights(reward.r_success, reward.c2_r, reward.c3_r)
    env = SlicePlacementEnv(reward)
    accepted = rejected = 0
    for _ in range(6000):
        psn, nspr = _random_instance(rng)
        pre = psn.clone()
        state = env.reset(psn, nspr)
        total = 0.0
        while True:
            mask = env.valid_actions(state)
            if not mask.any():
                outcome = env.reject()
                break
            outcome = env.step(state, int(rng.choice(np.flatnonzero(mask))))
            total += outcome.reward
            assert outcome.accepted or not outcome.done
            if outcome.done:
                break
            state = outcome.next_state

        if outcome.accepted:
            accepted += 1
            assert check_feasible(pre, nspr, env.mapping) == []
            assert total == pytest.approx(objective_value(pre, nspr, env.mapping, weights))
            release(psn, env.mapping, nspr)
        else:
            rejected += 1
        assert psn.residuals() == pre.residuals()
        assert psn.allocations == pre.allocations
    assert accepted > 0 and rejected > 0
