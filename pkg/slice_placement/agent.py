"""Masked advantage actor-critic with the heuristic shaping layer."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import log_softmax, softmax

from .config import AgentConfig
from .env import ActionMask, SlicePlacementEnv, feature_size
from .errors import ConfigError, ContractError, NoActionError, NumericalError
from .heuristic import DEFAULT_C2_NORM, heu_next_node
from .model import NsprGraph, PsnGraph
from .objective import Mapping

_LOGGER = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
_ACTIVATIONS = ("relu", "linear")


@dataclass
class DenseNet:
    """Fully connected network; weights[i] has shape (fan_in, fan_out)."""

    weights: List[np.ndarray]
    biases: List[np.ndarray]
    activations: List[str]

    def __post_init__(self) -> None:
        if not (len(self.weights) == len(self.biases) == len(self.activations)) or not self.weights:
            raise ContractError("DenseNet needs one weight, bias and activation per layer")
        for i, (weight, bias, activation) in enumerate(
            zip(self.weights, self.biases, self.activations)
        ):
            if activation not in _ACTIVATIONS:
                raise ContractError(f"Unknown activation {activation!r}")
            if bias.shape != (weight.shape[1],):
                raise ContractError(f"Layer {i}: bias shape {bias.shape} != ({weight.shape[1]},)")
            if i > 0 and self.weights[i - 1].shape[1] != weight.shape[0]:
                raise ContractError(f"Layer {i}: input width does not match previous layer")

    @classmethod
    def init(
        cls, sizes: Sequence[int], rng: np.random.Generator, zero: bool = False
    ) -> "DenseNet":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init; ReLU hidden, linear output."""
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 0.0 if zero else 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(rng.uniform(-bound, bound, size=fan_out))
        activations = ["relu"] * (len(weights) - 1) + ["linear"]
        return cls(weights, biases, activations)

    @property
    def input_size(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_size(self) -> int:
        return self.weights[-1].shape[1]

    def parameters(self) -> List[np.ndarray]:
        params: List[np.ndarray] = []
        for weight, bias in zip(self.weights, self.biases):
            params.extend((weight, bias))
        return params

    def with_parameters(self, params: Sequence[np.ndarray]) -> "DenseNet":
        return DenseNet(list(params[0::2]), list(params[1::2]), list(self.activations))

    def copy(self) -> "DenseNet":
        return self.with_parameters([p.copy() for p in self.parameters()])

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.parameters())

    def forward_cache(self, inputs: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
        """Batched forward pass; the cache holds each layer's input and pre-activation."""
        cache: List[np.ndarray] = []
        hidden = np.atleast_2d(inputs)
        for weight, bias, activation in zip(self.weights, self.biases, self.activations):
            pre = hidden @ weight + bias
            cache.extend((hidden, pre))
            hidden = np.maximum(pre, 0.0) if activation == "relu" else pre
        return hidden, cache

    def forward(self, inputs: np.ndarray) -> np.ndarray:
        out, _ = self.forward_cache(inputs)
        return out[0] if np.ndim(inputs) == 1 else out

    def backward(self, cache: List[np.ndarray], grad_out: np.ndarray) -> List[np.ndarray]:
        """Gradients in ``parameters()`` order for d(sum of grad_out * output)."""
        grads: List[np.ndarray] = [np.empty(0)] * (2 * len(self.weights))
        grad = np.atleast_2d(grad_out)
        for layer in reversed(range(len(self.weights))):
            layer_input, pre = cache[2 * layer], cache[2 * layer + 1]
            if self.activations[layer] == "relu":
                grad = grad * (pre > 0.0)
            grads[2 * layer] = layer_input.T @ grad
            grads[2 * layer + 1] = grad.sum(axis=0)
            grad = grad @ self.weights[layer].T
        return grads


@dataclass
class RmsProp:
    lr: float
    decay: float = 0.99
    eps: float = 1e-8
    square_avg: List[np.ndarray] = field(default_factory=list)

    def step(
        self, params: Sequence[np.ndarray], grads: Sequence[np.ndarray], ascend: bool = False
    ) -> List[np.ndarray]:
        if not self.square_avg:
            self.square_avg = [np.zeros_like(p) for p in params]
        sign = 1.0 if ascend else -1.0
        updated = []
        for i, (param, grad) in enumerate(zip(params, grads)):
            self.square_avg[i] = self.decay * self.square_avg[i] + (1.0 - self.decay) * grad**2
            updated.append(param + sign * self.lr * grad / (np.sqrt(self.square_avg[i]) + self.eps))
        return updated

    def copy(self) -> "RmsProp":
        return RmsProp(self.lr, self.decay, self.eps, [s.copy() for s in self.square_avg])


@dataclass
class AgentParams:
    actor: DenseNet
    critic: DenseNet
    hyper: AgentConfig
    actor_opt: RmsProp
    critic_opt: RmsProp

    @classmethod
    def initialize(cls, node_count: int, hyper: AgentConfig) -> "AgentParams":
        hyper.validate()
        actor_rng, critic_rng = (
            np.random.default_rng(s) for s in np.random.SeedSequence(hyper.seed).spawn(2)
        )
        inputs = feature_size(node_count)
        return cls(
            actor=DenseNet.init([inputs, hyper.hidden, hyper.hidden, node_count], actor_rng),
            critic=DenseNet.init([inputs, hyper.hidden, hyper.hidden, 1], critic_rng),
            hyper=hyper,
            actor_opt=RmsProp(hyper.actor_lr),
            critic_opt=RmsProp(hyper.critic_lr),
        )

    def snapshot(self) -> "AgentParams":
        return AgentParams(
            self.actor.copy(),
            self.critic.copy(),
            AgentConfig(**asdict(self.hyper)),
            self.actor_opt.copy(),
            self.critic_opt.copy(),
        )


@dataclass
class TrajectoryStep:
    features: np.ndarray
    mask: ActionMask
    action: int
    reward: float
    logits: np.ndarray


@dataclass
class Trajectory:
    steps: List[TrajectoryStep]
    terminal: bool = True
    bootstrap_features: Optional[np.ndarray] = None

    @property
    def total_reward(self) -> float:
        return float(sum(step.reward for step in self.steps))


@dataclass(frozen=True)
class ActionDistribution:
    probs: np.ndarray
    logits: np.ndarray
    mask: ActionMask

    @property
    def no_action(self) -> bool:
        return not bool(self.mask.any())

    def greedy(self) -> int:
        if self.no_action:
            raise NoActionError("No eligible action")
        return int(np.argmax(np.where(self.mask, self.logits, -np.inf)))


@dataclass(frozen=True)
class UpdateDiagnostics:
    actor_loss: float
    critic_loss: float
    entropy: float
    actor_grad_norm: float
    critic_grad_norm: float


def _masked_distribution(logits: np.ndarray, mask: ActionMask) -> ActionDistribution:
    if not mask.any():
        return ActionDistribution(np.zeros_like(logits), logits, mask)
    probs = softmax(np.where(mask, logits, -np.inf))
    return ActionDistribution(probs, logits, mask)


def policy_forward(actor: DenseNet, features: np.ndarray, mask: ActionMask) -> ActionDistribution:
    if features.shape != (actor.input_size,) or mask.shape != (actor.output_size,):
        raise ContractError(
            f"Features {features.shape} / mask {mask.shape} do not match actor "
            f"({actor.input_size} -> {actor.output_size})"
        )
    logits = actor.forward(features)
    if not np.all(np.isfinite(logits)):
        raise NumericalError("Actor produced non-finite logits")
    return _masked_distribution(logits, mask)


def heuristic_shaping(
    dist: ActionDistribution, heu_action: Optional[int], hyper: AgentConfig
) -> ActionDistribution:
    """Lift the recommended action's logit eta above the eligible maximum, scaled by beta."""
    if heu_action is None or hyper.beta == 0:
        return dist
    if not 0 <= heu_action < len(dist.mask) or not dist.mask[heu_action]:
        raise ContractError(f"Heuristic recommends ineligible action {heu_action}")
    eligible_max = float(np.max(dist.logits[dist.mask]))
    bonus = eligible_max - float(dist.logits[heu_action]) + hyper.eta
    shaped = dist.logits.copy()
    shaped[heu_action] += hyper.beta * bonus
    return _masked_distribution(shaped, dist.mask)


def sample_action(dist: ActionDistribution, rng: np.random.Generator) -> int:
    if dist.no_action:
        raise NoActionError("No eligible action to sample")
    return int(rng.choice(len(dist.probs), p=dist.probs))


# -----------------------------------------------------------------------------


def discounted_returns(rewards: Sequence[float], gamma: float, bootstrap: float = 0.0) -> np.ndarray:
    returns = np.empty(len(rewards))
    running = bootstrap
    for t in reversed(range(len(rewards))):
        running = rewards[t] + gamma * running
        returns[t] = running
    return returns


def actor_objective(
    actor: DenseNet,
    features: np.ndarray,
    masks: np.ndarray,
    actions: np.ndarray,
    advantages: np.ndarray,
    entropy_w: float,
) -> Tuple[float, List[np.ndarray], float]:
    """Return (sum_t A_t log pi(a_t) + entropy_w * sum_t H_t, gradients, sum_t H_t)."""
    logits, cache = actor.forward_cache(features)
    log_probs = log_softmax(np.where(masks, logits, -np.inf), axis=1)
    probs = np.exp(log_probs)
    safe_log = np.where(masks, log_probs, 0.0)
    entropies = -np.sum(probs * safe_log, axis=1)
    rows = np.arange(len(actions))
    objective = float(np.sum(advantages * log_probs[rows, actions]) + entropy_w * entropies.sum())

    one_hot = np.zeros_like(probs)
    one_hot[rows, actions] = 1.0
    grad_logits = advantages[:, None] * (one_hot - probs)
    grad_logits -= entropy_w * probs * (safe_log + entropies[:, None])
    return objective, actor.backward(cache, grad_logits), float(entropies.sum())


def critic_loss(
    critic: DenseNet, features: np.ndarray, returns: np.ndarray
) -> Tuple[float, List[np.ndarray]]:
    """Return (sum_t (R_t - v_t)^2, gradients)."""
    values, cache = critic.forward_cache(features)
    errors = returns - values[:, 0]
    loss = float(np.sum(errors**2))
    return loss, critic.backward(cache, (-2.0 * errors)[:, None])


def _norm(grads: Sequence[np.ndarray]) -> float:
    return float(np.sqrt(sum(np.sum(g**2) for g in grads)))


def update(params: AgentParams, traj: Trajectory) -> Tuple[AgentParams, UpdateDiagnostics]:
    """One advantage actor-critic step on a trajectory; ``params`` is not modified."""
    if not traj.steps:
        raise ContractError("Cannot update on an empty trajectory")
    features = np.stack([step.features for step in traj.steps])
    masks = np.stack([step.mask for step in traj.steps])
    actions = np.array([step.action for step in traj.steps])
    rewards = [step.reward for step in traj.steps]
    if not np.all(np.isfinite(rewards)):
        raise NumericalError("Trajectory holds non-finite rewards")

    bootstrap = 0.0
    if not traj.terminal:
        if traj.bootstrap_features is None:
            raise ContractError("Truncated trajectory needs bootstrap features")
        bootstrap = float(params.critic.forward(traj.bootstrap_features)[0])

    hyper = params.hyper
    returns = discounted_returns(rewards, hyper.gamma, bootstrap)
    values = params.critic.forward(features)[:, 0]
    advantages = returns - values

    objective, actor_grads, entropy = actor_objective(
        params.actor, features, masks, actions, advantages, hyper.entropy_w
    )
    loss, critic_grads = critic_loss(params.critic, features, returns)
    actor_norm, critic_norm = _norm(actor_grads), _norm(critic_grads)
    if not all(np.isfinite([objective, loss, actor_norm, critic_norm])):
        raise NumericalError("Non-finite loss or gradient; parameters left unchanged")

    updated = params.snapshot()
    updated.actor = updated.actor.with_parameters(
        updated.actor_opt.step(updated.actor.parameters(), actor_grads, ascend=True)
    )
    updated.critic = updated.critic.with_parameters(
        updated.critic_opt.step(updated.critic.parameters(), critic_grads)
    )
    if not (updated.actor.is_finite() and updated.critic.is_finite()):
        raise NumericalError("Update produced non-finite parameters")
    return updated, UpdateDiagnostics(
        actor_loss=-objective,
        critic_loss=loss,
        entropy=entropy / len(traj.steps),
        actor_grad_norm=actor_norm,
        critic_grad_norm=critic_norm,
    )


# -----------------------------------------------------------------------------


@dataclass
class EpisodeResult:
    trajectory: Trajectory
    accepted: bool
    total_return: float
    mapping: Optional[Mapping]


def play_episode(
    env: SlicePlacementEnv,
    psn: PsnGraph,
    nspr: NsprGraph,
    params: AgentParams,
    *,
    rng: Optional[np.random.Generator] = None,
    shaping: bool = False,
    greedy: bool = False,
    c2_norm: float = DEFAULT_C2_NORM,
) -> EpisodeResult:
    """Place ``nspr`` on ``psn`` with the actor; accepted mappings stay allocated."""
    if not greedy and rng is None:
        raise ContractError("Sampling episodes need an rng")
    state = env.reset(psn, nspr)
    steps: List[TrajectoryStep] = []
    total = 0.0
    while True:
        mask = env.valid_actions(state)
        if not mask.any():
            outcome = env.reject()
            total += outcome.reward
            if steps:
                steps[-1].reward += outcome.reward
            break
        features = env.features(state)
        dist = policy_forward(params.actor, features, mask)
        behaviour = dist
        if shaping:
            candidate = heu_next_node(psn, nspr, env.partial, state.vnf_index, c2_norm)
            behaviour = heuristic_shaping(
                dist, None if candidate is None else candidate.node, params.hyper
            )
        if greedy:
            action = behaviour.greedy()
        else:
            assert rng is not None
            action = sample_action(behaviour, rng)
        outcome = env.step(state, action)
        steps.append(TrajectoryStep(features, mask, action, outcome.reward, dist.logits))
        total += outcome.reward
        if outcome.done:
            break
        state = outcome.next_state
    return EpisodeResult(
        trajectory=Trajectory(steps, terminal=True),
        accepted=env.accepted,
        total_return=total,
        mapping=env.mapping if env.accepted else None,
    )


class RolloutPool:
    """Runs independent episodes concurrently; each job owns its env and PSN copy."""

    def __init__(self, workers: int) -> None:
        self.workers = max(1, workers)
        self._executor: Optional[ThreadPoolExecutor] = None
        if self.workers > 1:
            self._executor = ThreadPoolExecutor(
                max_workers=self.workers, thread_name_prefix="rollout"
            )

    def run(self, jobs: Sequence[Callable[[], EpisodeResult]]) -> List[EpisodeResult]:
        if self._executor is None:
            return [job() for job in jobs]
        futures = [self._executor.submit(job) for job in jobs]
        return [future.result() for future in futures]

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def __enter__(self) -> "RolloutPool":
        return self

    def __exit__(self, *_exc: object) -> None:
        self.close()


# -----------------------------------------------------------------------------


def save_checkpoint(params: AgentParams, path: Path) -> None:
    arrays: Dict[str, np.ndarray] = {
        "format_version": np.array(CHECKPOINT_FORMAT_VERSION),
        "hyper": np.array(json.dumps(asdict(params.hyper), sort_keys=True)),
    }
    for name, net in (("actor", params.actor), ("critic", params.critic)):
        arrays[f"{name}/activations"] = np.array(net.activations)
        for i, (weight, bias) in enumerate(zip(net.weights, net.biases)):
            arrays[f"{name}/W{i}"] = weight
            arrays[f"{name}/b{i}"] = bias
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as checkpoint_file:
        np.savez(checkpoint_file, **arrays)
    _LOGGER.info("Saved checkpoint: %s", path)


def load_checkpoint(path: Path) -> AgentParams:
    if not path.exists():
        raise ConfigError(f"Checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as data:
        version = int(data["format_version"])
        if version != CHECKPOINT_FORMAT_VERSION:
            raise ConfigError(f"Unsupported checkpoint version {version} in {path}")
        hyper = AgentConfig(**json.loads(str(data["hyper"])))
        nets = {}
        for name in ("actor", "critic"):
            activations = [str(a) for a in data[f"{name}/activations"]]
            nets[name] = DenseNet(
                [data[f"{name}/W{i}"] for i in range(len(activations))],
                [data[f"{name}/b{i}"] for i in range(len(activations))],
                activations,
            )
    _LOGGER.debug("Loaded checkpoint: %s", path)
    return AgentParams(
        nets["actor"], nets["critic"], hyper, RmsProp(hyper.actor_lr), RmsProp(hyper.critic_lr)
    )
