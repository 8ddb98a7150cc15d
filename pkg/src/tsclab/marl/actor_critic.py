"""On-policy advantage actor-critic, independent or centralized-critic.

One parameter-shared softmax actor acts from local observations for every
agent.  The critic input distinguishes the variants: ``ia2c`` values each
agent's own observation, ``maa2c`` values the global state (so training is
centralized while execution stays decentralized).  Returns are n-step
bootstrapped to the episode end, with the final value used only when the
episode was cut by a time limit.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ConfigurationError, StaleTrajectoryError
from ..tinynn import Adam, DenseNet
from .buffer import Episode
from .common import (
    action_mask_bias,
    agent_inputs,
    load_checkpoint,
    pad_observations,
    prefix_state,
    save_checkpoint,
    unprefix_state,
)

AC_ALGORITHMS = ("ia2c", "maa2c")


@dataclass
class A2CConfig:
    algorithm: str
    obs_dim: int
    state_dim: int
    n_agents: int
    action_sizes: List[int]
    hidden: Tuple[int, int] = (64, 64)
    gamma: float = 0.99
    lr: float = 5e-4
    entropy_coeff: float = 0.01
    n_rollouts: int = 4
    reward_mode: str = "global"
    seed: int = 0

    def validate(self) -> None:
        if self.algorithm not in AC_ALGORITHMS:
            raise ConfigurationError(f"unknown actor-critic algorithm {self.algorithm!r}")
        if len(self.action_sizes) != self.n_agents:
            raise ConfigurationError("action_sizes must list one size per agent")
        if self.reward_mode not in ("global", "local"):
            raise ConfigurationError(f"unknown reward mode {self.reward_mode!r}")
        if self.reward_mode == "local" and self.algorithm != "ia2c":
            raise ConfigurationError(
                "local rewards only make sense for independent learners (ia2c)"
            )


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


class ActorCriticTrainer:
    def __init__(self, config: A2CConfig):
        config.validate()
        self.config = config
        self.n_actions = max(config.action_sizes)
        rng = np.random.default_rng(config.seed)
        in_dim = config.obs_dim + config.n_agents
        self.actor = DenseNet([in_dim, *config.hidden, self.n_actions], rng)
        critic_in = in_dim if config.algorithm == "ia2c" else config.state_dim
        self.critic = DenseNet([critic_in, *config.hidden, 1], rng)
        self.actor_opt = Adam(self.actor.params, lr=config.lr)
        self.critic_opt = Adam(self.critic.params, lr=config.lr)
        self.policy_version = 0
        self.env_steps = 0
        self.episodes_seen = 0
        self._eye = np.eye(config.n_agents)
        self._mask = action_mask_bias(config.action_sizes, self.n_actions)

    # -- acting --------------------------------------------------------------

    def policy_probs(self, observations: Sequence[np.ndarray]) -> np.ndarray:
        obs = pad_observations(observations, self.config.obs_dim)
        x = agent_inputs(obs[None, :, :], self._eye)
        logits = self.actor.predict(x) + self._mask
        return np.exp(_log_softmax(logits))

    def select_actions(self, observations: Sequence[np.ndarray],
                       rng: Optional[np.random.Generator] = None,
                       greedy: bool = False) -> List[int]:
        probs = self.policy_probs(observations)
        if greedy:
            return [int(a) for a in probs.argmax(axis=1)]
        if rng is None:
            raise ValueError("sampling mode needs an rng")
        return [int(rng.choice(self.n_actions, p=row)) for row in probs]

    # -- learning ------------------------------------------------------------

    def a2c_update(self, trajectories: Sequence[Episode]) -> Tuple[float, float, float]:
        """One synchronous update; returns (policy loss, value loss, entropy)."""
        cfg = self.config
        for tr in trajectories:
            if tr.policy_version != self.policy_version:
                raise StaleTrajectoryError(
                    f"trajectory from policy version {tr.policy_version}, "
                    f"trainer is at {self.policy_version}"
                )
            if cfg.reward_mode == "local" and tr.local_rewards is None:
                raise ConfigurationError("trajectory carries no local rewards")

        n = cfg.n_agents
        gamma = cfg.gamma

        # critic forward over all T+1 time points of every trajectory
        if cfg.algorithm == "ia2c":
            critic_x = np.concatenate(
                [agent_inputs(tr.observations, self._eye) for tr in trajectories]
            )
            critic_cols = n
        else:
            critic_x = np.concatenate([tr.states for tr in trajectories])
            critic_cols = 1
        values_flat, critic_cache = self.critic.forward(critic_x)

        returns_rows: List[np.ndarray] = []
        value_upstream = np.zeros_like(values_flat)
        offset = 0
        total_steps = 0
        for tr in trajectories:
            t = tr.length
            rows = (t + 1) * critic_cols
            v = values_flat[offset: offset + rows, 0].reshape(t + 1, critic_cols)
            if cfg.reward_mode == "local":
                rew = tr.local_rewards                      # (T, n)
            else:
                rew = np.repeat(tr.rewards[:, None], critic_cols, axis=1)
            ret = np.zeros((t, critic_cols))
            carry = v[t] if tr.truncated else np.zeros(critic_cols)
            for k in range(t - 1, -1, -1):
                carry = rew[k] + gamma * carry
                ret[k] = carry
            returns_rows.append(ret)
            # value targets exclude the bootstrap row
            diff = (v[:t] - ret).reshape(-1)
            value_upstream[offset: offset + t * critic_cols, 0] = diff
            offset += rows
            total_steps += t

        value_count = total_steps * critic_cols
        value_loss = float(np.sum(value_upstream ** 2) / value_count)
        critic_grads, _ = self.critic.backward(
            critic_cache, 2.0 * value_upstream / value_count)
        self.critic_opt.step(self.critic.params, critic_grads)

        # advantages: returns minus detached values, broadcast to every agent
        adv_rows = []
        offset = 0
        for tr, ret in zip(trajectories, returns_rows):
            t = tr.length
            rows = (t + 1) * critic_cols
            v = values_flat[offset: offset + rows, 0].reshape(t + 1, critic_cols)
            adv = ret - v[:t]
            if critic_cols == 1:
                adv = np.repeat(adv, n, axis=1)
            adv_rows.append(adv)
            offset += rows
        advantages = np.concatenate(adv_rows)               # (B, n)

        actor_x = np.concatenate(
            [agent_inputs(tr.observations[:-1], self._eye) for tr in trajectories]
        )
        actions = np.concatenate([tr.actions for tr in trajectories]).reshape(-1)
        logits, actor_cache = self.actor.forward(actor_x)
        logits = logits + np.tile(self._mask, (total_steps, 1))
        logp = _log_softmax(logits)
        probs = np.exp(logp)
        rows_idx = np.arange(actions.size)
        chosen_logp = logp[rows_idx, actions]
        plogp = np.where(probs > 0.0, probs * logp, 0.0)
        entropy = -plogp.sum(axis=1)

        adv_flat = advantages.reshape(-1)
        count = actions.size
        policy_loss = float(
            -(chosen_logp * adv_flat).mean() - cfg.entropy_coeff * entropy.mean()
        )
        onehot = np.zeros_like(probs)
        onehot[rows_idx, actions] = 1.0
        d_logits = (probs - onehot) * adv_flat[:, None] / count
        d_logits += cfg.entropy_coeff * probs * (logp + entropy[:, None]) / count
        actor_grads, _ = self.actor.backward(actor_cache, d_logits)
        self.actor_opt.step(self.actor.params, actor_grads)

        self.policy_version += 1
        for tr in trajectories:
            self.episodes_seen += 1
            self.env_steps += tr.length
        if not all(np.all(np.isfinite(p)) for p in self.actor.params + self.critic.params):
            raise FloatingPointError("non-finite parameters after update")
        return policy_loss, value_loss, float(entropy.mean())

    # -- persistence -----------------------------------------------------------

    def save(self, path: str) -> None:
        arrays: Dict[str, np.ndarray] = {}
        arrays.update(prefix_state("actor", self.actor.state()))
        arrays.update(prefix_state("critic", self.critic.state()))
        arrays.update(prefix_state("actor_opt", self.actor_opt.state()))
        arrays.update(prefix_state("critic_opt", self.critic_opt.state()))
        arrays["counters"] = np.asarray(
            [self.policy_version, self.env_steps, self.episodes_seen], dtype=np.int64
        )
        cfg = asdict(self.config)
        cfg["kind"] = "actor_critic"
        save_checkpoint(path, cfg, arrays)

    @classmethod
    def load(cls, path: str) -> "ActorCriticTrainer":
        cfg, arrays = load_checkpoint(path)
        cfg.pop("kind", None)
        cfg["hidden"] = tuple(cfg["hidden"])
        trainer = cls(A2CConfig(**cfg))
        trainer.actor = DenseNet.from_state(unprefix_state("actor", arrays))
        trainer.critic = DenseNet.from_state(unprefix_state("critic", arrays))
        trainer.actor_opt = Adam.from_state(unprefix_state("actor_opt", arrays))
        trainer.critic_opt = Adam.from_state(unprefix_state("critic_opt", arrays))
        counters = arrays["counters"]
        trainer.policy_version = int(counters[0])
        trainer.env_steps = int(counters[1])
        trainer.episodes_seen = int(counters[2])
        return trainer
