"""Off-policy value trainers: independent, additive, and monotonic-mixed.

A single parameter-shared Q-network serves all agents (observation plus an
agent one-hot in, per-action values out).  The three algorithms differ only
in how per-agent chosen values combine into the joint value that the TD
loss is taken on:

    iql   per-agent values, per-agent targets, losses averaged together
    vdn   q_tot = sum_i q_i
    qmix  q_tot = mixer(q_1..q_n; state), monotone in every q_i

Targets use frozen copies of the network (and mixer) refreshed by hard
synchronization every ``target_period`` training episodes, with per-agent
greedy next actions.  Action selection is epsilon-greedy over each agent's
own observation only; the global state never enters this path.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ConfigurationError, NotReadyError
from ..tinynn import Adam, DenseNet
from .buffer import Episode, EpisodeBuffer
from .common import (
    ANNEAL_STEPS,
    EPS_FINAL,
    EPS_START,
    action_mask_bias,
    agent_inputs,
    epsilon_schedule,
    load_checkpoint,
    pad_observations,
    prefix_state,
    save_checkpoint,
    unprefix_state,
)
from .mixing import MixingNet

VALUE_ALGORITHMS = ("iql", "vdn", "qmix")


@dataclass
class ValueTrainerConfig:
    algorithm: str
    obs_dim: int
    state_dim: int
    n_agents: int
    action_sizes: List[int]
    hidden: Tuple[int, int] = (64, 64)
    gamma: float = 0.99
    lr: float = 5e-4
    batch_size: int = 32
    buffer_capacity: int = 5000
    eps_start: float = EPS_START
    eps_final: float = EPS_FINAL
    anneal_steps: int = ANNEAL_STEPS
    target_period: int = 200
    embed_dim: int = 32
    hyper_hidden: int = 64
    reward_mode: str = "global"
    seed: int = 0

    def validate(self) -> None:
        if self.algorithm not in VALUE_ALGORITHMS:
            raise ConfigurationError(f"unknown value algorithm {self.algorithm!r}")
        if len(self.action_sizes) != self.n_agents:
            raise ConfigurationError("action_sizes must list one size per agent")
        if self.reward_mode not in ("global", "local"):
            raise ConfigurationError(f"unknown reward mode {self.reward_mode!r}")
        if self.reward_mode == "local" and self.algorithm != "iql":
            raise ConfigurationError(
                "local rewards only make sense for independent learners (iql)"
            )


class ValueTrainer:
    def __init__(self, config: ValueTrainerConfig):
        config.validate()
        self.config = config
        self.n_actions = max(config.action_sizes)
        rng = np.random.default_rng(config.seed)
        in_dim = config.obs_dim + config.n_agents
        self.q_net = DenseNet([in_dim, *config.hidden, self.n_actions], rng)
        self.target_net = self.q_net.copy()
        self.mixer: Optional[MixingNet] = None
        self.target_mixer: Optional[MixingNet] = None
        if config.algorithm == "qmix":
            self.mixer = MixingNet(config.state_dim, config.n_agents,
                                   config.embed_dim, config.hyper_hidden, rng)
            self.target_mixer = self.mixer.copy()
        self.opt = Adam(self._online_params(), lr=config.lr)
        self.buffer = EpisodeBuffer(config.buffer_capacity)
        self.train_steps = 0
        self.env_steps = 0
        self.episodes_seen = 0
        self._last_sync = 0
        self._eye = np.eye(config.n_agents)
        self._mask = action_mask_bias(config.action_sizes, self.n_actions)

    def _online_params(self) -> List[np.ndarray]:
        params = self.q_net.params
        if self.mixer is not None:
            params = params + self.mixer.params
        return params

    # -- acting --------------------------------------------------------------

    def epsilon(self, env_steps: Optional[int] = None) -> float:
        steps = self.env_steps if env_steps is None else env_steps
        return epsilon_schedule(steps, self.config.anneal_steps,
                                self.config.eps_start, self.config.eps_final)

    def q_values(self, observations: Sequence[np.ndarray]) -> np.ndarray:
        obs = pad_observations(observations, self.config.obs_dim)
        x = agent_inputs(obs[None, :, :], self._eye)
        return self.q_net.predict(x) + self._mask

    def select_actions(self, observations: Sequence[np.ndarray], eps: float,
                       rng: np.random.Generator) -> List[int]:
        """Per-agent epsilon-greedy over each agent's own observation."""
        greedy = np.argmax(self.q_values(observations), axis=1)
        actions = []
        for i in range(self.config.n_agents):
            if eps > 0.0 and rng.random() < eps:
                actions.append(int(rng.integers(self.config.action_sizes[i])))
            else:
                actions.append(int(greedy[i]))
        return actions

    # -- learning ------------------------------------------------------------

    def joint_value(self, qs: np.ndarray, states: np.ndarray) -> np.ndarray:
        """Combine per-agent chosen values (B, n) into the trained joint value."""
        if self.config.algorithm == "iql":
            return qs
        if self.config.algorithm == "vdn":
            return qs.sum(axis=1)
        return self.mixer.predict(qs, states)

    def td_update(self, episodes: Optional[Sequence[Episode]] = None) -> float:
        """One TD step on a batch of episodes; samples the buffer by default."""
        cfg = self.config
        if episodes is None:
            episodes = self.buffer.sample(cfg.batch_size, np.random.default_rng(
                cfg.seed + self.train_steps + 1))
        obs_t = np.concatenate([ep.observations[:-1] for ep in episodes])
        obs_tp1 = np.concatenate([ep.observations[1:] for ep in episodes])
        actions = np.concatenate([ep.actions for ep in episodes])
        done = np.concatenate([ep.terminated for ep in episodes]).astype(np.float64)
        if cfg.reward_mode == "local":
            for ep in episodes:
                if ep.local_rewards is None:
                    raise ConfigurationError("episode carries no local rewards")
            rewards = np.concatenate([ep.local_rewards for ep in episodes])  # (B, n)
        else:
            rewards = np.concatenate([ep.rewards for ep in episodes])        # (B,)
        b, n = actions.shape

        x = agent_inputs(obs_t, self._eye)
        q_all, cache = self.q_net.forward(x)
        flat_actions = actions.reshape(b * n)
        rows = np.arange(b * n)
        q_chosen = q_all[rows, flat_actions].reshape(b, n)

        x_next = agent_inputs(obs_tp1, self._eye)
        q_next = self.target_net.predict(x_next) + np.tile(self._mask, (b, 1))
        next_max = q_next.max(axis=1).reshape(b, n)

        gamma_mask = cfg.gamma * (1.0 - done)
        if cfg.algorithm == "iql":
            if cfg.reward_mode == "local":
                y = rewards + gamma_mask[:, None] * next_max
            else:
                y = rewards[:, None] + gamma_mask[:, None] * next_max
            diff = q_chosen - y
            loss = float(np.mean(diff ** 2))
            d_chosen = 2.0 * diff / diff.size
            mixer_grads: List[np.ndarray] = []
        elif cfg.algorithm == "vdn":
            q_tot = q_chosen.sum(axis=1)
            y = rewards + gamma_mask * next_max.sum(axis=1)
            diff = q_tot - y
            loss = float(np.mean(diff ** 2))
            d_chosen = np.repeat((2.0 * diff / b)[:, None], n, axis=1)
            mixer_grads = []
        else:  # qmix
            states_t = np.concatenate([ep.states[:-1] for ep in episodes])
            states_tp1 = np.concatenate([ep.states[1:] for ep in episodes])
            q_tot, mix_cache = self.mixer.forward(q_chosen, states_t)
            y = rewards + gamma_mask * self.target_mixer.predict(next_max, states_tp1)
            diff = q_tot - y
            loss = float(np.mean(diff ** 2))
            mixer_grads, d_chosen = self.mixer.backward(mix_cache, 2.0 * diff / b)

        d_all = np.zeros_like(q_all)
        d_all[rows, flat_actions] = d_chosen.reshape(b * n)
        q_grads, _ = self.q_net.backward(cache, d_all)
        self.opt.step(self._online_params(), q_grads + mixer_grads)
        self.train_steps += 1
        if not all(np.all(np.isfinite(p)) for p in self.q_net.params):
            raise FloatingPointError("non-finite parameters after update")
        return loss

    def observe_episode(self, episode: Episode) -> None:
        self.buffer.add(episode)
        self.episodes_seen += 1
        self.env_steps += episode.length

    def ready(self) -> bool:
        return len(self.buffer) >= self.config.batch_size

    def maybe_sync_target(self, episode_count: Optional[int] = None) -> bool:
        """Hard-copy online parameters to targets every ``target_period`` episodes."""
        count = self.episodes_seen if episode_count is None else episode_count
        period = self.config.target_period
        if count > 0 and count % period == 0 and count != self._last_sync:
            self.sync_target()
            self._last_sync = count
            return True
        return False

    def sync_target(self) -> None:
        self.target_net.copy_from(self.q_net)
        if self.mixer is not None:
            self.target_mixer.copy_from(self.mixer)

    # -- persistence -----------------------------------------------------------

    def save(self, path: str) -> None:
        arrays: Dict[str, np.ndarray] = {}
        arrays.update(prefix_state("q", self.q_net.state()))
        arrays.update(prefix_state("target", self.target_net.state()))
        arrays.update(prefix_state("opt", self.opt.state()))
        if self.mixer is not None:
            arrays.update(prefix_state("mixer", self.mixer.state()))
            arrays.update(prefix_state("target_mixer", self.target_mixer.state()))
        arrays["counters"] = np.asarray(
            [self.train_steps, self.env_steps, self.episodes_seen, self._last_sync],
            dtype=np.int64,
        )
        cfg = asdict(self.config)
        cfg["kind"] = "value"
        save_checkpoint(path, cfg, arrays)

    @classmethod
    def load(cls, path: str) -> "ValueTrainer":
        cfg, arrays = load_checkpoint(path)
        cfg.pop("kind", None)
        cfg["hidden"] = tuple(cfg["hidden"])
        trainer = cls(ValueTrainerConfig(**cfg))
        trainer.q_net = DenseNet.from_state(unprefix_state("q", arrays))
        trainer.target_net = DenseNet.from_state(unprefix_state("target", arrays))
        trainer.opt = Adam.from_state(unprefix_state("opt", arrays))
        if trainer.config.algorithm == "qmix":
            trainer.mixer = MixingNet.from_state(unprefix_state("mixer", arrays))
            trainer.target_mixer = MixingNet.from_state(
                unprefix_state("target_mixer", arrays))
        counters = arrays["counters"]
        trainer.train_steps, trainer.env_steps = int(counters[0]), int(counters[1])
        trainer.episodes_seen, trainer._last_sync = int(counters[2]), int(counters[3])
        return trainer
