import itertools
from pathlib import Path
from typing import Callable, List

import numpy as np
import pytest

from slice_placement.agent import (
    AgentParams,
    DenseNet,
    RmsProp,
    RolloutPool,
    Trajectory,
    TrajectoryStep,
    _masked_distribution,
    actor_objective,
    critic_loss,
    discounted_returns,
    heuristic_shaping,
    load_checkpoint,
    play_episode,
    policy_forward,
    sample_action,
    save_checkpoint,
    update,
)
from slice_placement.config import AgentConfig, RewardConfig
from slice_placement.env import SlicePlacementEnv, feature_size
from slice_placement.errors import ConfigError, ContractError, NoActionError, NumericalError
from slice_placement.heuristic import heu_place
from slice_placement.model import NsprGraph, PsnGraph, release
from slice_placement.objective import ObjectiveWeights, check_feasible, objective_value

BETAS = (0.0, 0.1, 0.5, 1.0, 2.0)


def _line_psn() -> PsnGraph:
    return PsnGraph.from_edges([(10, 10), (20, 20), (10, 10)], [(0, 1, 5), (1, 2, 5)])


def _params(node_count: int = 3, **hyper: float) -> AgentParams:
    return AgentParams.initialize(node_count, AgentConfig(hidden=16, **hyper))


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


def _numeric_grads(net: DenseNet, value: Callable[[], float], eps: float = 1e-5) -> List[np.ndarray]:
    grads = []
    for param in net.parameters():
        grad = np.zeros_like(param)
        for index in np.ndindex(param.shape):
            original = param[index]
            param[index] = original + eps
            upper = value()
            param[index] = original - eps
            lower = value()
            param[index] = original
            grad[index] = (upper - lower) / (2 * eps)
        grads.append(grad)
    return grads


def test_single_eligible_action_has_probability_one() -> None:
    params = _params()
    mask = np.array([False, True, False])
    dist = policy_forward(params.actor, np.random.default_rng(0).random(feature_size(3)), mask)
    assert dist.probs.tolist() == [0.0, 1.0, 0.0]


def test_zero_actor_is_uniform_over_eligible_nodes() -> None:
    actor = DenseNet.init([feature_size(4), 8, 8, 4], np.random.default_rng(0), zero=True)
    mask = np.array([True, False, True, True])
    dist = policy_forward(actor, np.ones(feature_size(4)), mask)
    assert dist.probs == pytest.approx([1 / 3, 0.0, 1 / 3, 1 / 3])
    assert dist.probs[1] == 0.0


def test_probabilities_sum_to_one() -> None:
    rng = np.random.default_rng(1)
    params = _params(node_count=6)
    for _ in range(50):
        mask = rng.random(6) < 0.5
        mask[int(rng.integers(6))] = True
        dist = policy_forward(params.actor, rng.random(feature_size(6)), mask)
        assert dist.probs.sum() == pytest.approx(1.0)
        assert np.all(dist.probs[~mask] == 0.0)


def test_policy_forward_checks_shapes() -> None:
    params = _params()
    with pytest.raises(ContractError):
        policy_forward(params.actor, np.zeros(5), np.ones(3, dtype=bool))


def test_shaping_worked_example() -> None:
    dist = _masked_distribution(np.array([1.0, 2.0]), np.array([True, True]))
    shaped = heuristic_shaping(dist, 0, AgentConfig(beta=2.0, eta=0.5))
    assert shaped.logits.tolist() == [4.0, 2.0]
    assert shaped.greedy() == 0
    assert heuristic_shaping(dist, 0, AgentConfig(beta=0.0)) is dist
    assert heuristic_shaping(dist, None, AgentConfig(beta=2.0)) is dist


def test_shaping_rejects_ineligible_recommendation() -> None:
    dist = _masked_distribution(np.array([1.0, 2.0]), np.array([True, False]))
    with pytest.raises(ContractError):
        heuristic_shaping(dist, 1, AgentConfig(beta=1.0))


def test_shaping_properties() -> None:
    rng = np.random.default_rng(7)
    for _ in range(1000):
        size = int(rng.integers(2, 9))
        logits = rng.normal(0.0, 3.0, size)
        mask = rng.random(size) < 0.6
        heu = int(rng.integers(size))
        mask[heu] = True
        dist = _masked_distribution(logits, mask)
        previous = -1.0
        for beta in BETAS:
            shaped = heuristic_shaping(dist, heu, AgentConfig(beta=beta, eta=0.5))
            assert np.all(shaped.probs[~mask] == 0.0)
            assert shaped.probs[heu] >= previous - 1e-12
            previous = shaped.probs[heu]
            if beta >= 1.0:
                assert int(np.argmax(np.where(mask, shaped.logits, -np.inf))) == heu


def test_sampling() -> None:
    single = _masked_distribution(np.zeros(3), np.array([False, False, True]))
    rng = np.random.default_rng(0)
    assert {sample_action(single, rng) for _ in range(50)} == {2}

    uniform = _masked_distribution(np.zeros(4), np.ones(4, dtype=bool))
    draws = np.array([sample_action(uniform, rng) for _ in range(100_000)])
    counts = np.bincount(draws, minlength=4)
    sigma = np.sqrt(100_000 * 0.25 * 0.75)
    assert np.all(np.abs(counts - 25_000) <= 4 * sigma)

    first = [sample_action(uniform, np.random.default_rng(42)) for _ in range(5)]
    second = [sample_action(uniform, np.random.default_rng(42)) for _ in range(5)]
    assert first == second

    with pytest.raises(NoActionError):
        sample_action(_masked_distribution(np.zeros(2), np.zeros(2, dtype=bool)), rng)


def test_actor_gradients_match_finite_differences() -> None:
    rng = np.random.default_rng(123)
    for _ in range(20):
        nodes = int(rng.integers(2, 5))
        net = DenseNet.init([feature_size(nodes), 6, 5, nodes], rng)
        steps = int(rng.integers(1, 5))
        features = rng.normal(size=(steps, feature_size(nodes)))
        masks = rng.random((steps, nodes)) < 0.7
        actions = np.empty(steps, dtype=int)
        for t in range(steps):
            masks[t, int(rng.integers(nodes))] = True
            actions[t] = int(rng.choice(np.flatnonzero(masks[t])))
        advantages = rng.normal(size=steps)

        def value() -> float:
            return actor_objective(net, features, masks, actions, advantages, 0.1)[0]

        _, analytic, _ = actor_objective(net, features, masks, actions, advantages, 0.1)
        for a, n in zip(analytic, _numeric_grads(net, value)):
            assert _relative_error(a, n) < 1e-3


def test_critic_gradients_match_finite_differences() -> None:
    rng = np.random.default_rng(321)
    for _ in range(20):
        net = DenseNet.init([7, 6, 5, 1], rng)
        steps = int(rng.integers(1, 5))
        features = rng.normal(size=(steps, 7))
        returns = rng.normal(size=steps)

        def value() -> float:
            return critic_loss(net, features, returns)[0]

        _, analytic = critic_loss(net, features, returns)
        for a, n in zip(analytic, _numeric_grads(net, value)):
            assert _relative_error(a, n) < 1e-3


def test_discounted_returns() -> None:
    assert discounted_returns([1.0, 1.0, 1.0], 0.5).tolist() == [1.75, 1.5, 1.0]
    assert discounted_returns([0.0], 0.5, bootstrap=2.0).tolist() == [1.0]


def _zero_trajectory(nodes: int) -> Trajectory:
    mask = np.array([True] * nodes)
    step = TrajectoryStep(np.ones(feature_size(nodes)), mask, 0, 0.0, np.zeros(nodes))
    return Trajectory([step, step])


def test_zero_advantage_leaves_actor_unchanged() -> None:
    rng = np.random.default_rng(0)
    hyper = AgentConfig(hidden=8, entropy_w=0.0)
    params = AgentParams(
        actor=DenseNet.init([feature_size(3), 8, 8, 3], rng),
        critic=DenseNet.init([feature_size(3), 8, 8, 1], rng, zero=True),
        hyper=hyper,
        actor_opt=RmsProp(hyper.actor_lr),
        critic_opt=RmsProp(hyper.critic_lr),
    )
    updated, diagnostics = update(params, _zero_trajectory(3))
    for before, after in zip(params.actor.parameters(), updated.actor.parameters()):
        assert np.array_equal(before, after)
    assert diagnostics.actor_grad_norm == 0.0
    assert diagnostics.critic_loss == 0.0


def test_update_learns_from_an_episode() -> None:
    params = _params()
    env = SlicePlacementEnv(RewardConfig())
    episode = play_episode(
        env,
        _line_psn(),
        NsprGraph.chain([(2, 2), (2, 2)], [1]),
        params,
        rng=np.random.default_rng(0),
    )
    updated, diagnostics = update(params, episode.trajectory)
    assert np.isfinite(diagnostics.actor_loss)
    assert diagnostics.critic_grad_norm > 0.0
    assert not np.array_equal(params.critic.weights[0], updated.critic.weights[0])
    assert updated.critic_opt.square_avg
    assert not params.critic_opt.square_avg


def test_update_errors() -> None:
    params = _params()
    with pytest.raises(ContractError):
        update(params, Trajectory([]))
    with pytest.raises(ContractError):
        update(params, Trajectory(_zero_trajectory(3).steps, terminal=False))
    broken = _zero_trajectory(3)
    broken.steps[0] = TrajectoryStep(broken.steps[0].features, broken.steps[0].mask, 0, float("nan"), np.zeros(3))
    with pytest.raises(NumericalError):
        update(params, broken)


def test_strong_shaping_greedy_episode_follows_heuristic() -> None:
    psn = _line_psn()
    pre = psn.clone()
    nspr = NsprGraph.chain([(4, 4), (6, 6), (3, 3)], [2, 1])
    reward = RewardConfig()
    params = _params(beta=2.0)
    episode = play_episode(SlicePlacementEnv(reward), psn, nspr, params, shaping=True, greedy=True)
    assert episode.accepted
    assert episode.mapping == heu_place(pre, nspr)
    weights = ObjectiveWeights(reward.r_success, reward.c2_r, reward.c3_r)
    assert episode.total_return == pytest.approx(objective_value(pre, nspr, episode.mapping, weights))


def test_rejected_episode_restores_psn() -> None:
    psn = _line_psn()
    nspr = NsprGraph.chain([(15, 15), (15, 15)], [1])
    episode = play_episode(SlicePlacementEnv(), psn, nspr, _params(), rng=np.random.default_rng(0))
    assert not episode.accepted
    assert episode.mapping is None
    assert episode.total_return == pytest.approx(
        sum(step.reward for step in episode.trajectory.steps)
    )
    assert psn.at_maxima()


def test_sampling_episode_needs_rng() -> None:
    with pytest.raises(ContractError):
        play_episode(SlicePlacementEnv(), _line_psn(), NsprGraph.chain([(1, 1)], []), _params())


def test_rollout_pool_preserves_job_order() -> None:
    with RolloutPool(3) as pool:
        assert pool.run([lambda i=i: i for i in range(6)]) == list(range(6))
    assert RolloutPool(1).run([lambda: "serial"]) == ["serial"]


def test_checkpoint_round_trip(tmp_path: Path) -> None:
    params = _params(beta=0.5)
    path = tmp_path / "agent" / "checkpoint.npz"
    save_checkpoint(params, path)
    loaded = load_checkpoint(path)
    assert loaded.hyper == params.hyper
    assert loaded.actor.activations == ["relu", "relu", "linear"]
    for before, after in zip(
        params.actor.parameters() + params.critic.parameters(),
        loaded.actor.parameters() + loaded.critic.parameters(),
    ):
        assert np.array_equal(before, after)


def test_missing_checkpoint_is_a_config_error(tmp_path: Path) -> None:
    with pytest.raises(ConfigError):
        load_checkpoint(tmp_path / "nope.npz")


def _random_instance(rng: np.random.Generator) -> tuple:
    count = int(rng.integers(1, 6))
    caps = [(int(rng.integers(2, 9)), int(rng.integers(2, 9))) for _ in range(count)]
    edges = [(int(rng.integers(i)), i, int(rng.integers(1, 5))) for i in range(1, count)]
    pairs = {(a, b) for a, b, _ in edges}
    for a, b in itertools.combinations(range(count), 2):
        if (a, b) not in pairs and rng.random() < 0.3:
            edges.append((a, b, int(rng.integers(1, 5))))
    size = int(rng.integers(1, 5))
    nspr = NsprGraph.chain(
        [(int(rng.integers(1, 5)), int(rng.integers(1, 5))) for _ in range(size)],
        [int(rng.integers(0, 4)) for _ in range(size - 1)],
    )
    return PsnGraph.from_edges(caps, edges), nspr


@pytest.mark.parametrize("shaping", [False, True])
def test_sampled_episodes_match_objective_and_restore_psn(shaping: bool) -> None:
    rng = np.random.default_rng(57 if shaping else 5)
    reward = RewardConfig()
    weights = ObjectiveWeights(reward.r_success, reward.c2_r, reward.c3_r)
    env = SlicePlacementEnv(reward)
    params = {nodes: _params(nodes, beta=1.0) for nodes in range(1, 6)}
    accepted = rejected = 0
    for _ in range(2000):
        psn, nspr = _random_instance(rng)
        pre = psn.clone()
        episode = play_episode(env, psn, nspr, params[psn.node_count], rng=rng, shaping=shaping)
        if episode.accepted:
            accepted += 1
            assert episode.mapping is not None
            assert check_feasible(pre, nspr, episode.mapping) == []
            assert episode.total_return == pytest.approx(
                objective_value(pre, nspr, episode.mapping, weights)
            )
            release(psn, episode.mapping, nspr)
        else:
            rejected += 1
            assert episode.mapping is None
        assert psn.residuals() == pre.residuals()
        assert not psn.allocations
    assert accepted > 0 and rejected > 0
