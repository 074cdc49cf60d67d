"""DQN agent: epsilon-greedy acting, replay memory, target network, episode loop."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .config import AgentConfig, DemandSchedule
from .nn import Adam, Network, copy_params, forward, load_weights, loss_and_grads, save_weights
from .rewards import RewardSpec, compute_reward
from .state import OBS_DIM

log = logging.getLogger(__name__)

STAGES = (2, 3, 4)
N_ACTIONS = len(STAGES)


def select_action(q_values, epsilon: float, rng: np.random.Generator) -> int:
    """Epsilon-greedy over the three stages; greedy ties go to the lowest index."""
    if rng.random() < epsilon:
        return int(rng.integers(N_ACTIONS))
    return int(np.argmax(q_values))


def td_target(reward, next_q_target, gamma: float):
    """``R + gamma * max_a Q(s', a; theta_minus)``; works on scalars or batches."""
    return reward + gamma * np.max(next_q_target, axis=-1)


def epsilon_at(episode: int, total: int, cfg: AgentConfig) -> float:
    """Linear decay over the first ``epsilon_decay_fraction`` of episodes (0-based index)."""
    span = max(cfg.epsilon_decay_fraction * total, 1.0)
    frac = min(episode / span, 1.0)
    return cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac


def training_curriculum(total_episodes: int = 1500, min_rate: float = 1200.0, max_rate: float = 2571.0) -> list:
    """Vehicle rate per episode, rising linearly from ``min_rate`` to ``max_rate``."""
    if total_episodes == 1:
        return [min_rate]
    step = (max_rate - min_rate) / (total_episodes - 1)
    return [min_rate + step * e for e in range(total_episodes)]


class ReplayMemory:
    """FIFO ring buffer of transitions.  Observations are stored as float32."""

    def __init__(self, capacity: int, obs_dim: int = OBS_DIM):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.next_obs = np.zeros((capacity, obs_dim), dtype=np.float32)
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.ptr = 0
        self.size = 0

    def __len__(self):
        return self.size

    def push(self, obs, action, reward, next_obs):
        if not np.isfinite(reward):
            raise ValueError(f"non-finite reward {reward}")
        i = self.ptr
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        self.ptr = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch: int, rng: np.random.Generator):
        idx = rng.integers(0, self.size, size=batch)
        return (self.obs[idx].astype(np.float64), self.actions[idx], self.rewards[idx],
                self.next_obs[idx].astype(np.float64))


class DQNAgent:
    def __init__(self, cfg: AgentConfig, seed: int = 0, obs_dim: int = OBS_DIM):
        self.cfg = cfg
        self.seed = seed
        seeds = np.random.SeedSequence(seed).generate_state(2)
        self.net = Network.init((obs_dim, *cfg.hidden_sizes, N_ACTIONS), seed=int(seeds[0]))
        self.target = copy_params(self.net)
        self.adam = Adam(self.net.params, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
        self.memory = ReplayMemory(cfg.replay_capacity, obs_dim)
        self.rng = np.random.default_rng(int(seeds[1]))
        self.episodes_done = 0

    def q_values(self, obs):
        return forward(self.net, obs)

    def act(self, obs, epsilon: float) -> int:
        # same draw sequence as select_action, without the forward pass on exploration
        if self.rng.random() < epsilon:
            return int(self.rng.integers(N_ACTIONS))
        return int(np.argmax(self.q_values(obs)))

    def learn(self) -> list:
        """Run the configured number of minibatch updates.  Skipped while memory is underfull."""
        cfg = self.cfg
        if len(self.memory) < cfg.minibatch_size:
            log.info("replay memory underfull (%d < %d); update skipped", len(self.memory), cfg.minibatch_size)
            return []
        losses = []
        for _ in range(cfg.updates_per_episode):
            obs, actions, rewards, next_obs = self.memory.sample(cfg.minibatch_size, self.rng)
            y = td_target(rewards, forward(self.target, next_obs), cfg.gamma)
            loss, grads = loss_and_grads(self.net, obs, actions, y)
            self.adam.step(self.net.params, grads)
            losses.append(loss)
        return losses

    def end_episode(self) -> list:
        losses = self.learn()
        self.episodes_done += 1
        if self.episodes_done % self.cfg.target_sync_period == 0:
            self.target = copy_params(self.net)
        return losses

    def save(self, directory, extra=None):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        save_weights(self.net, d / "weights.bin")
        save_weights(self.target, d / "target.bin")
        np.savez(d / "adam.npz", **self.adam.state_dict())
        meta = {
            "format": 1,
            "agent": asdict(self.cfg),
            "seed": self.seed,
            "episodes_done": self.episodes_done,
            "rng_state": self.rng.bit_generator.state,
        }
        meta.update(extra or {})
        (d / "agent.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=list))

    @classmethod
    def load(cls, directory, cfg: AgentConfig | None = None) -> "DQNAgent":
        d = Path(directory)
        meta = json.loads((d / "agent.json").read_text())
        if cfg is None:
            cfg = AgentConfig(**{**meta["agent"], "hidden_sizes": tuple(meta["agent"]["hidden_sizes"])})
        agent = cls(cfg, meta["seed"])
        sizes = agent.net.sizes
        agent.net = load_weights(d / "weights.bin", sizes)
        target_path = d / "target.bin"
        agent.target = load_weights(target_path, sizes) if target_path.exists() else copy_params(agent.net)
        agent.adam = Adam(agent.net.params, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
        if (d / "adam.npz").exists():
            with np.load(d / "adam.npz") as state:
                agent.adam.load_state_dict(state)
        agent.episodes_done = meta["episodes_done"]
        agent.rng.bit_generator.state = meta["rng_state"]
        return agent


def run_episode(agent, env, spec: RewardSpec, *, seed: int, demand: DemandSchedule | None = None,
                epsilon: float = 0.0, train: bool = True, on_decision=None) -> dict:
    """Play one episode; store transitions and learn at the end when ``train``.

    ``on_decision(env, ctx, action, reward)`` is called at every decision point
    (``reward`` is ``None`` for the first one).
    """
    env.reset(seed, demand)
    prev_obs = prev_action = None
    total_reward = 0.0
    n_trans = 0
    while env.run_to_decision():
        ctx = env.close_interval()
        obs = env.observation()
        reward = None
        if prev_obs is not None:
            reward = compute_reward(spec, ctx)
            total_reward += reward
            n_trans += 1
            if train:
                agent.memory.push(prev_obs, prev_action, reward, obs)
        action = agent.act(obs, epsilon)
        env.act(STAGES[action])
        if on_decision is not None:
            on_decision(env, ctx, STAGES[action], reward)
        prev_obs, prev_action = obs, action
    if prev_obs is not None and env.clock > env.t_p:
        # time-limit truncation: the final interval still bootstraps
        ctx = env.close_interval()
        reward = compute_reward(spec, ctx)
        total_reward += reward
        n_trans += 1
        if train:
            agent.memory.push(prev_obs, prev_action, reward, env.observation())
    losses = agent.end_episode() if train else []
    m = env.metrics()
    return {
        "total_reward": total_reward,
        "transitions": n_trans,
        "decisions": env.n_decisions,
        "mean_loss": float(np.mean(losses)) if losses else float("nan"),
        "vehicle_wait": m.vehicle_wait_mean,
        "ped_wait": m.ped_wait_mean,
        "metrics": m,
    }
