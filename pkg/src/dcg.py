"""
Coordination-graph Q-learning.

A shared utility network maps each agent's observation to one value per action;
a shared payoff network maps an ordered observation pair to an |A| x |A| matrix,
symmetrized over both orderings so edge direction does not matter. Acting uses
Max-Plus on the resulting FactorizedQ, training regresses q_tot onto one-step TD
targets from a target network. The empty topology reduces this to a sum of
independent utilities.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union
import json
import logging

import numpy as np

from .config import LearnerConfig
from .coord_graph import (
    UNAVAILABLE,
    FactorizedQ,
    Topology,
    brute_force_argmax,
    make_topology,
    max_plus,
)
from .errors import CheckpointError, ContractError
from .mlp import Mlp, OptState, backward, forward, load_mlp, mlp_init, opt_step, save_mlp

logger = logging.getLogger(__name__)


@dataclass
class DcgModel:
    utility: Mlp
    payoff: Mlp
    obs_size: int
    n_actions: int

    def __post_init__(self):
        if self.utility.sizes[0] != self.obs_size or self.utility.sizes[-1] != self.n_actions:
            raise ContractError(f"Utility net {self.utility.sizes} does not map {self.obs_size} -> {self.n_actions}")
        if self.payoff.sizes[0] != 2 * self.obs_size or self.payoff.sizes[-1] != self.n_actions ** 2:
            raise ContractError(
                f"Payoff net {self.payoff.sizes} does not map {2 * self.obs_size} -> {self.n_actions ** 2}"
            )

    def copy(self) -> "DcgModel":
        return DcgModel(self.utility.copy(), self.payoff.copy(), self.obs_size, self.n_actions)


def dcg_model_new(
    obs_size: int,
    n_actions: int,
    hidden_sizes: Sequence[int] = (64, 64),
    seed=0,
    init_scale: float = 1.0,
) -> DcgModel:
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(int(seed))
    utility_seed, payoff_seed = seed.spawn(2)
    hidden = list(hidden_sizes)
    return DcgModel(
        utility=mlp_init([obs_size] + hidden + [n_actions], utility_seed, init_scale),
        payoff=mlp_init([2 * obs_size] + hidden + [n_actions * n_actions], payoff_seed, init_scale),
        obs_size=obs_size,
        n_actions=n_actions,
    )


@dataclass
class Transition:
    obs: np.ndarray
    masks: np.ndarray
    joint_action: np.ndarray
    reward: float
    next_obs: np.ndarray
    next_masks: np.ndarray
    terminal: bool


@dataclass
class Batch:
    """Stacked transitions; per-agent arrays have shape (B, n, ...)."""

    obs: np.ndarray
    masks: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    next_masks: np.ndarray
    terminals: np.ndarray

    def __len__(self) -> int:
        return len(self.rewards)


def stack_batch(transitions: Sequence[Transition]) -> Batch:
    if not transitions:
        raise ContractError("Empty batch")
    return Batch(
        obs=np.stack([t.obs for t in transitions]),
        masks=np.stack([t.masks for t in transitions]),
        actions=np.stack([np.asarray(t.joint_action, dtype=np.int64) for t in transitions]),
        rewards=np.array([t.reward for t in transitions], dtype=float),
        next_obs=np.stack([t.next_obs for t in transitions]),
        next_masks=np.stack([t.next_masks for t in transitions]),
        terminals=np.array([t.terminal for t in transitions], dtype=bool),
    )


class ReplayBuffer:
    """Fixed-capacity FIFO replay memory."""

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ContractError("Replay capacity must be positive")
        self.capacity = capacity
        self._items: List[Transition] = []
        self._next = 0

    def __len__(self) -> int:
        return len(self._items)

    def add(self, transition: Transition):
        if len(self._items) < self.capacity:
            self._items.append(transition)
        else:
            self._items[self._next] = transition
        self._next = (self._next + 1) % self.capacity

    def items(self) -> List[Transition]:
        """Contents from oldest to newest."""
        if len(self._items) < self.capacity:
            return list(self._items)
        return self._items[self._next:] + self._items[: self._next]

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        if batch_size > len(self._items):
            raise ContractError(f"Cannot sample {batch_size} from {len(self._items)} transitions")
        idx = rng.choice(len(self._items), size=batch_size, replace=False)
        return stack_batch([self._items[i] for i in idx])


def _edge_index(topology: Topology) -> Tuple[np.ndarray, np.ndarray]:
    if not topology.edges:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    edges = np.array(topology.edges, dtype=np.int64)
    return edges[:, 0], edges[:, 1]


def _payoff_inputs(obs: np.ndarray, topology: Topology) -> np.ndarray:
    """Rows are [o_i, o_j] for every (batch, edge), followed by [o_j, o_i]."""
    src, dst = _edge_index(topology)
    B, _, d = obs.shape
    fwd = np.concatenate([obs[:, src], obs[:, dst]], axis=2).reshape(-1, 2 * d)
    rev = np.concatenate([obs[:, dst], obs[:, src]], axis=2).reshape(-1, 2 * d)
    return np.concatenate([fwd, rev], axis=0)


def _factor_outputs(model: DcgModel, obs: np.ndarray, topology: Topology) -> Tuple[np.ndarray, np.ndarray]:
    """
    Raw utilities (B, n, A) and symmetrized payoffs (B, E, A, A) for a batch of
    joint observations.
    """
    obs = np.asarray(obs, dtype=float)
    if obs.ndim != 3 or obs.shape[1] != topology.n or obs.shape[2] != model.obs_size:
        raise ContractError(
            f"Observations of shape {obs.shape} do not fit {topology.n} agents x {model.obs_size}"
        )
    B, n, d = obs.shape
    A = model.n_actions
    utilities = forward(model.utility, obs.reshape(B * n, d)).reshape(B, n, A)
    E = len(topology.edges)
    if E == 0:
        return utilities, np.zeros((B, 0, A, A))
    out = forward(model.payoff, _payoff_inputs(obs, topology))
    fwd = out[: B * E].reshape(B, E, A, A)
    rev = out[B * E:].reshape(B, E, A, A)
    return utilities, (fwd + rev.transpose(0, 1, 3, 2)) / 2.0


def _to_factorized(utilities: np.ndarray, payoffs: np.ndarray, masks=None) -> FactorizedQ:
    if masks is not None:
        utilities = np.where(np.asarray(masks, dtype=bool), utilities, UNAVAILABLE)
    return FactorizedQ(utilities=list(utilities), payoffs=list(payoffs))


def factorize(model: DcgModel, observations: np.ndarray, topology: Topology, masks=None) -> FactorizedQ:
    """FactorizedQ of one joint observation; unavailable actions get UNAVAILABLE utility."""
    utilities, payoffs = _factor_outputs(model, np.asarray(observations)[None], topology)
    return _to_factorized(utilities[0], payoffs[0], masks)


def batch_q_tot(utilities: np.ndarray, payoffs: np.ndarray, actions: np.ndarray, topology: Topology) -> np.ndarray:
    B, n = actions.shape
    rows = np.arange(B)
    q = utilities[rows[:, None], np.arange(n)[None, :], actions].sum(axis=1)
    src, dst = _edge_index(topology)
    for e in range(len(src)):
        q = q + payoffs[rows, e, actions[:, src[e]], actions[:, dst[e]]]
    return q


def select_actions(
    fq: FactorizedQ,
    topology: Topology,
    masks,
    epsilon: float,
    rng: Optional[np.random.Generator] = None,
    iterations: int = 8,
    damping: Optional[float] = None,
) -> Tuple[int, ...]:
    """
    Epsilon-greedy joint action: each agent independently explores with
    probability epsilon (uniform over its available actions), the rest follow
    the Max-Plus joint action.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ContractError(f"epsilon must be in [0, 1], got {epsilon}")
    masks = np.asarray(masks, dtype=bool)
    if epsilon > 0.0:
        if rng is None:
            raise ContractError("Exploration needs a random generator")
        explore = rng.random(topology.n) < epsilon
    else:
        explore = np.zeros(topology.n, dtype=bool)

    joint = [0] * topology.n
    if not explore.all():
        joint = list(max_plus(fq, topology, masks, iterations=iterations, damping=damping).joint_action)
    for agent in np.flatnonzero(explore):
        joint[agent] = int(rng.choice(np.flatnonzero(masks[agent])))
    return tuple(int(a) for a in joint)


def _best_value(fq: FactorizedQ, topology: Topology, masks, iterations: int, damping, exhaustive_max_agents: int) -> float:
    if topology.n <= exhaustive_max_agents:
        return brute_force_argmax(fq, topology, masks)[1]
    return max_plus(fq, topology, masks, iterations=iterations, damping=damping).value


def td_targets(
    batch: Batch,
    target: DcgModel,
    topology: Topology,
    gamma: float,
    iterations: int = 8,
    damping: Optional[float] = None,
    exhaustive_max_agents: int = 4,
) -> np.ndarray:
    """y = r + gamma * (1 - terminal) * max q_tot of the target network at the next observations."""
    if len(batch) == 0:
        raise ContractError("Empty batch")
    targets = batch.rewards.astype(float).copy()
    live = np.flatnonzero(~batch.terminals)
    if gamma == 0.0 or len(live) == 0:
        return targets
    utilities, payoffs = _factor_outputs(target, batch.next_obs[live], topology)
    for k, b in enumerate(live):
        fq = _to_factorized(utilities[k], payoffs[k], batch.next_masks[b])
        best = _best_value(fq, topology, batch.next_masks[b], iterations, damping, exhaustive_max_agents)
        targets[b] += gamma * best
    return targets


@dataclass
class DcgOptimizer:
    utility: OptState
    payoff: OptState

    @classmethod
    def for_model(cls, model: DcgModel, learning_rate: float) -> "DcgOptimizer":
        return cls(OptState.for_model(model.utility, learning_rate), OptState.for_model(model.payoff, learning_rate))


def loss_and_gradients(model: DcgModel, batch: Batch, targets: np.ndarray, topology: Topology):
    """
    Mean squared TD error of q_tot at the stored joint actions.

    Returns:
        Tuple of (loss, utility-net gradients, payoff-net gradients)
    """
    B, n, d = batch.obs.shape
    A = model.n_actions
    actions = batch.actions
    utilities, payoffs = _factor_outputs(model, batch.obs, topology)
    q = batch_q_tot(utilities, payoffs, actions, topology)
    errors = q - targets
    loss = float(np.mean(errors ** 2))
    dq = 2.0 * errors / B

    upstream_u = np.zeros((B, n, A))
    upstream_u[np.arange(B)[:, None], np.arange(n)[None, :], actions] = dq[:, None]
    grads_u = backward(model.utility, batch.obs.reshape(B * n, d), upstream_u.reshape(B * n, A))

    src, dst = _edge_index(topology)
    E = len(src)
    if E == 0:
        grads_p = [np.zeros_like(p) for p in model.payoff.params()]
        return loss, grads_u, grads_p
    # f_ij(a_i, a_j) = (fwd[a_i * A + a_j] + rev[a_j * A + a_i]) / 2
    upstream_fwd = np.zeros((B, E, A * A))
    upstream_rev = np.zeros((B, E, A * A))
    rows = np.arange(B)
    for e in range(E):
        ai, aj = actions[:, src[e]], actions[:, dst[e]]
        upstream_fwd[rows, e, ai * A + aj] += dq / 2.0
        upstream_rev[rows, e, aj * A + ai] += dq / 2.0
    upstream_p = np.concatenate([upstream_fwd.reshape(B * E, A * A), upstream_rev.reshape(B * E, A * A)])
    grads_p = backward(model.payoff, _payoff_inputs(batch.obs, topology), upstream_p)
    return loss, grads_u, grads_p


def train_step(
    model: DcgModel,
    target: DcgModel,
    batch: Batch,
    opt: DcgOptimizer,
    topology: Topology,
    config: LearnerConfig,
) -> float:
    """One TD regression step; returns the loss before the update."""
    targets = td_targets(
        batch,
        target,
        topology,
        config.gamma,
        iterations=config.max_plus_iterations,
        damping=config.max_plus_damping,
        exhaustive_max_agents=config.exhaustive_max_agents,
    )
    loss, grads_u, grads_p = loss_and_gradients(model, batch, targets, topology)
    opt_step(model.utility, opt.utility, grads_u)
    opt_step(model.payoff, opt.payoff, grads_p)
    return loss


def sync_target(model: DcgModel, target: DcgModel):
    """Copy online parameters into the target network."""
    for net, target_net in ((model.utility, target.utility), (model.payoff, target.payoff)):
        for src, dst in zip(net.params(), target_net.params()):
            dst[...] = src


def greedy_episode(model: DcgModel, env, topology: Topology, iterations: int = 8, damping=None, on_step=None):
    """
    Play one episode with epsilon = 0.

    Returns:
        Tuple of (return, length, captures, miscaptures)
    """
    state, obs, masks = env.reset()
    if on_step is not None:
        on_step(state, None, 0.0, {}, False)
    total, length, captures, miscaptures = 0.0, 0, 0, 0
    done = False
    while not done:
        fq = factorize(model, obs, topology, masks)
        joint = select_actions(fq, topology, masks, 0.0, iterations=iterations, damping=damping)
        state, obs, masks, reward, done, info = env.step(joint)
        total += reward
        length += 1
        captures += info["captures"]
        miscaptures += info["miscaptures"]
        if on_step is not None:
            on_step(state, joint, reward, info, done)
    return total, length, captures, miscaptures


def evaluate(model: DcgModel, env_factory: Callable, seed: int, episodes: int, topology: Topology,
             iterations: int = 8, damping=None) -> float:
    """Mean greedy return over episodes on a freshly seeded environment."""
    env = env_factory(seed)
    returns = [greedy_episode(model, env, topology, iterations, damping)[0] for _ in range(episodes)]
    return float(np.mean(returns))


@dataclass
class EpisodeMetrics:
    episode: int
    env_step: int
    train_return: float
    length: int
    epsilon: float
    loss_mean: float
    captures: int
    miscaptures: int
    eval_return_mean: float


@dataclass
class TrainResult:
    metrics: List[EpisodeMetrics]
    model: DcgModel
    evaluations: List[Tuple[int, float]] = field(default_factory=list)
    env_steps: int = 0


def derive_seeds(seed: int) -> dict:
    """Independent streams for the env, the networks, exploration and evaluation."""
    env_ss, model_ss, explore_ss, eval_ss = np.random.SeedSequence(seed).spawn(4)
    return {
        "env": int(env_ss.generate_state(1)[0]),
        "model": model_ss,
        "explore": explore_ss,
        "eval": int(eval_ss.generate_state(1)[0]),
    }


def train(
    env_factory: Callable,
    topology_kind: str,
    config: LearnerConfig,
    seed: int,
    eval_every: int = 0,
    eval_episodes: int = 1,
    on_episode: Optional[Callable[[EpisodeMetrics], None]] = None,
) -> TrainResult:
    """
    Train a coordination-graph Q-learner for config.max_env_steps steps.

    Args:
        env_factory: Called with an integer seed, returns an environment
        topology_kind: full, empty, line or cycle
        eval_every: Greedy evaluation period in env steps (0 disables)
        on_episode: Called with every finished episode's metrics
    """
    seeds = derive_seeds(seed)
    env = env_factory(seeds["env"])
    topology = make_topology(topology_kind, env.n_agents)
    model = dcg_model_new(env.obs_size, env.n_actions, config.hidden_sizes, seeds["model"], config.init_scale)
    target = model.copy()
    opt = DcgOptimizer.for_model(model, config.learning_rate)
    replay = ReplayBuffer(config.replay_capacity)
    rng = np.random.default_rng(seeds["explore"])
    iterations, damping = config.max_plus_iterations, config.max_plus_damping

    def run_eval(step: int) -> float:
        value = evaluate(model, env_factory, seeds["eval"], eval_episodes, topology, iterations, damping)
        evaluations.append((step, value))
        logger.debug(f"seed {seed} step {step}: eval return {value:.3f}")
        return value

    evaluations: List[Tuple[int, float]] = []
    last_eval = run_eval(0) if eval_every else float("nan")
    metrics: List[EpisodeMetrics] = []
    env_step = 0

    while env_step < config.max_env_steps:
        state, obs, masks = env.reset()
        ep_return, length, captures, miscaptures = 0.0, 0, 0, 0
        losses: List[float] = []
        epsilon = config.epsilon_at(env_step)
        done = False
        while not done and env_step < config.max_env_steps:
            epsilon = config.epsilon_at(env_step)
            fq = factorize(model, obs, topology, masks)
            joint = select_actions(fq, topology, masks, epsilon, rng, iterations, damping)
            state, next_obs, next_masks, reward, done, info = env.step(joint)
            replay.add(Transition(
                obs=obs,
                masks=masks,
                joint_action=np.array(joint, dtype=np.int64),
                reward=float(reward),
                next_obs=next_obs,
                next_masks=next_masks,
                terminal=bool(done and not info.get("truncated", False)),
            ))
            env_step += 1
            ep_return += reward
            length += 1
            captures += info["captures"]
            miscaptures += info["miscaptures"]

            if len(replay) >= config.train_start and env_step % config.train_every == 0:
                batch = replay.sample(config.batch_size, rng)
                losses.append(train_step(model, target, batch, opt, topology, config))
            if env_step % config.target_sync_period == 0:
                sync_target(model, target)
            if eval_every and env_step % eval_every == 0:
                last_eval = run_eval(env_step)
            obs, masks = next_obs, next_masks

        row = EpisodeMetrics(
            episode=len(metrics),
            env_step=env_step,
            train_return=float(ep_return),
            length=length,
            epsilon=float(epsilon),
            loss_mean=float(np.mean(losses)) if losses else 0.0,
            captures=captures,
            miscaptures=miscaptures,
            eval_return_mean=last_eval,
        )
        metrics.append(row)
        if on_episode is not None:
            on_episode(row)
        if config.log_interval and len(metrics) % config.log_interval == 0:
            logger.info(
                f"seed {seed} episode {row.episode} step {env_step}: return {row.train_return:.2f}, "
                f"eval {row.eval_return_mean:.2f}, eps {row.epsilon:.3f}, loss {row.loss_mean:.4f}, "
                f"replay {len(replay)}"
            )

    return TrainResult(metrics=metrics, model=model, evaluations=evaluations, env_steps=env_step)


def save_checkpoint(model: DcgModel, directory: Union[str, Path], config_hash: str, step: int, seed: int) -> Path:
    """One network file per net plus manifest.json."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_mlp(model.utility, directory / "utility.sgmlp")
    save_mlp(model.payoff, directory / "payoff.sgmlp")
    manifest = {
        "config_hash": config_hash,
        "step": int(step),
        "seed": int(seed),
        "obs_size": model.obs_size,
        "n_actions": model.n_actions,
    }
    with open(directory / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2)
    return directory


def load_checkpoint(directory: Union[str, Path], config_hash: Optional[str] = None,
                    obs_size: Optional[int] = None, n_actions: Optional[int] = None) -> Tuple[DcgModel, dict]:
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    if not manifest_path.exists():
        raise CheckpointError(f"{directory}: no manifest.json")
    with open(manifest_path) as f:
        manifest = json.load(f)
    if config_hash is not None and manifest.get("config_hash") != config_hash:
        raise CheckpointError(
            f"Checkpoint was trained with config {manifest.get('config_hash')}, current config is {config_hash}"
        )
    for key, expected in (("obs_size", obs_size), ("n_actions", n_actions)):
        if expected is not None and manifest.get(key) != expected:
            raise CheckpointError(f"Checkpoint {key} {manifest.get(key)} does not match {expected}")

    utility = load_mlp(directory / "utility.sgmlp")
    payoff = load_mlp(directory / "payoff.sgmlp")
    try:
        model = DcgModel(utility, payoff, manifest["obs_size"], manifest["n_actions"])
    except (ContractError, KeyError) as exc:
        raise CheckpointError(f"{directory}: inconsistent networks ({exc})") from exc
    return model, manifest
