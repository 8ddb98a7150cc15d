"""Episode storage shared by the trainers.

``Episode`` records one full rollout with the trailing observation/state
kept for bootstrapping.  The replay buffer holds complete episodes in a
fixed-capacity ring; stored arrays are frozen so off-policy training can
never mutate history.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from ..errors import NotReadyError


@dataclass(frozen=True)
class Episode:
    """One rollout: T steps, with observations/states at T+1 time points.

    ``terminated`` is 1.0 at genuinely terminal steps; ``truncated`` marks
    the episode as cut by a time limit (so on-policy returns bootstrap from
    the final value).  ``policy_version`` is set when the episode is
    collected for on-policy use.
    """

    observations: np.ndarray          # (T+1, n, obs_dim)
    states: np.ndarray                # (T+1, state_dim)
    actions: np.ndarray               # (T, n) int
    rewards: np.ndarray               # (T,)
    terminated: np.ndarray            # (T,)
    truncated: bool = True
    local_rewards: Optional[np.ndarray] = None   # (T, n)
    policy_version: Optional[int] = None

    @property
    def length(self) -> int:
        return self.actions.shape[0]

    @property
    def episode_return(self) -> float:
        return float(self.rewards.sum())

    def frozen(self) -> "Episode":
        for arr in (self.observations, self.states, self.actions,
                    self.rewards, self.terminated, self.local_rewards):
            if arr is not None:
                arr.setflags(write=False)
        return self


class EpisodeBuffer:
    """FIFO ring of complete episodes."""

    def __init__(self, capacity: int = 5000):
        if capacity < 1:
            raise ValueError("buffer capacity must be positive")
        self.capacity = capacity
        self._episodes: List[Episode] = []
        self._cursor = 0

    def __len__(self) -> int:
        return len(self._episodes)

    def add(self, episode: Episode) -> None:
        episode = episode.frozen()
        if len(self._episodes) < self.capacity:
            self._episodes.append(episode)
        else:
            self._episodes[self._cursor] = episode
            self._cursor = (self._cursor + 1) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator) -> List[Episode]:
        if len(self._episodes) < batch_size:
            raise NotReadyError(
                f"buffer holds {len(self._episodes)} episodes, need {batch_size}"
            )
        idx = rng.choice(len(self._episodes), size=batch_size, replace=False)
        return [self._episodes[i] for i in idx]
