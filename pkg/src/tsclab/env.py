"""Cooperative multi-agent environment over the queue simulator.

Each signalized intersection is an agent.  Observations are visibility-
limited per-lane features plus the current green phase one-hot; the global
state is the same layout over every lane with no visibility cap.  Actions
are applied every ``action_interval`` seconds and any phase change passes
through an enforced yellow interval.  The shared reward is the negated
network-wide queue length, so all controllers maximize.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigurationError
from .mesosim import DEFAULT_SATURATION_FLOW, FlowSpec, Simulation
from .netgraph import RoadNetwork

FREE_SELECT = "free_select"
ROUND_ROBIN = "round_robin"
ACTION_MODES = (FREE_SELECT, ROUND_ROBIN)

INFO_KEYS = ("queue_sum", "mean_delay", "mean_speed", "mean_occupancy", "completed", "dropped")


@dataclass
class EnvConfig:
    network: RoadNetwork
    flows: List[FlowSpec]
    action_mode: str = ROUND_ROBIN
    episode_limit: int = 72
    action_interval: int = 5
    yellow_duration: int = 5
    visibility: float = 50.0
    saturation_flow: float = DEFAULT_SATURATION_FLOW
    local_rewards: bool = False
    seed: int = 0

    def validate(self) -> None:
        if self.action_mode not in ACTION_MODES:
            raise ConfigurationError(f"unknown action mode {self.action_mode!r}")
        if self.episode_limit < 1:
            raise ConfigurationError(
                f"episode_limit must be at least 1, got {self.episode_limit}"
            )
        if self.action_interval < 1:
            raise ConfigurationError("action_interval must be at least 1")
        if self.yellow_duration != self.action_interval:
            raise ConfigurationError(
                "yellow_duration must equal action_interval "
                f"(got {self.yellow_duration} vs {self.action_interval})"
            )
        if self.visibility <= 0:
            raise ConfigurationError("visibility must be positive")
        if not self.network.signals:
            raise ConfigurationError("network has no signals")


@dataclass
class StepResult:
    observations: List[np.ndarray]
    state: np.ndarray
    reward: float
    terminated: bool
    info: Dict[str, object]


class TrafficEnv:
    """Episodic reset/step interface with per-agent observations.

    Action semantics:
      * ``free_select``: action k targets green phase k (size = P_i).
      * ``round_robin``: action 0 keeps the current green, action 1 advances
        to the next phase in cyclic order (size = 2).
    """

    def __init__(self, config: EnvConfig):
        config.validate()
        self.config = config
        self.net = config.network
        self.agents: List[str] = list(self.net.signal_ids)
        self._signals = {s.id: s for s in self.net.signals}
        self._phase_counts = [s.n_phases for s in self.net.signals]
        self._lane_order = self.net.sorted_lane_ids
        self._capacity = {lid: self.net.lanes[lid].capacity for lid in self._lane_order}
        self.observation_sizes = [
            3 * len(s.incoming_lanes) + s.n_phases for s in self.net.signals
        ]
        self.state_size = 3 * len(self._lane_order) + sum(self._phase_counts)
        self.sim: Optional[Simulation] = None
        self._step_count = 0
        self._terminated = False

    # -- spec --------------------------------------------------------------

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def episode_limit(self) -> int:
        return self.config.episode_limit

    @property
    def terminated(self) -> bool:
        return self._terminated

    @property
    def ready(self) -> bool:
        return self.sim is not None and not self._terminated

    def action_space_size(self, agent_index: int) -> int:
        if self.config.action_mode == FREE_SELECT:
            return self._phase_counts[agent_index]
        return 2

    @property
    def action_sizes(self) -> List[int]:
        return [self.action_space_size(i) for i in range(self.n_agents)]

    # -- lifecycle -----------------------------------------------------------

    def reset(self, seed: Optional[int] = None) -> Tuple[List[np.ndarray], np.ndarray]:
        self.sim = Simulation(
            self.net,
            self.config.flows,
            seed=self.config.seed if seed is None else seed,
            saturation_flow=self.config.saturation_flow,
        )
        self._step_count = 0
        self._terminated = False
        return self.observations(), self.global_state()

    def step(self, actions: Sequence[int]) -> StepResult:
        if self.sim is None:
            raise RuntimeError("step before reset")
        if self._terminated:
            raise RuntimeError("episode terminated; reset required")
        if len(actions) != self.n_agents:
            raise ValueError(f"expected {self.n_agents} actions, got {len(actions)}")

        for i, (agent, action) in enumerate(zip(self.agents, actions)):
            target = self._resolve_action(i, int(action))
            self.sim.set_phase(agent, target)

        for _ in range(self.config.action_interval):
            self.sim.promote_due(self.config.yellow_duration)
            self.sim.spawn()
            self.sim.tick()

        metrics = self.sim.gather(self.config.visibility)
        obs = self._observations_from(metrics)
        state = self._state_from(metrics)
        queue_sum = sum(m[1] for m in metrics.values())
        reward = -float(queue_sum)
        self._step_count += 1
        self._terminated = self._step_count >= self.config.episode_limit
        info = self._info_from(metrics, queue_sum)
        return StepResult(
            observations=obs,
            state=state,
            reward=reward,
            terminated=self._terminated,
            info=info,
        )

    def _resolve_action(self, agent_index: int, action: int) -> int:
        size = self.action_space_size(agent_index)
        if not (0 <= action < size):
            raise ValueError(
                f"agent {self.agents[agent_index]}: action {action} out of range [0, {size})"
            )
        if self.config.action_mode == FREE_SELECT:
            return action
        current = self.phase_ids()[agent_index]
        if action == 0:
            return current
        return (current + 1) % self._phase_counts[agent_index]

    # -- views ---------------------------------------------------------------

    def phase_ids(self) -> List[int]:
        assert self.sim is not None
        return [self.sim.state.signal_states[a].phase_id for a in self.agents]

    def lane_queue_counts(self) -> Dict[str, int]:
        """Full-lane halted counts, the quantity rule-based controllers read."""
        assert self.sim is not None
        return {
            lid: len(ls.queued) for lid, ls in self.sim.state.lane_states.items()
        }

    def compute_reward(self) -> float:
        assert self.sim is not None
        return -float(self.sim.queue_total())

    def observations(self) -> List[np.ndarray]:
        assert self.sim is not None
        return self._observations_from(self.sim.gather(self.config.visibility))

    def global_state(self) -> np.ndarray:
        assert self.sim is not None
        return self._state_from(self.sim.gather(self.config.visibility))

    def _observations_from(self, metrics) -> List[np.ndarray]:
        phase_ids = self.phase_ids()
        out = []
        for i, agent in enumerate(self.agents):
            sig = self._signals[agent]
            vec = np.zeros(self.observation_sizes[i], dtype=np.float64)
            k = 0
            for lid in sig.incoming_lanes:
                n_full, q_full, n_vis, q_vis = metrics[lid]
                cap = self._capacity[lid]
                vec[k] = n_vis / cap
                vec[k + 1] = 1.0 if n_vis == 0 else (n_vis - q_vis) / n_vis
                vec[k + 2] = q_vis / cap
                k += 3
            vec[k + phase_ids[i]] = 1.0
            out.append(vec)
        return out

    def _state_from(self, metrics) -> np.ndarray:
        vec = np.zeros(self.state_size, dtype=np.float64)
        k = 0
        for lid in self._lane_order:
            n_full, q_full, _, _ = metrics[lid]
            cap = self._capacity[lid]
            vec[k] = n_full / cap
            vec[k + 1] = 1.0 if n_full == 0 else (n_full - q_full) / n_full
            vec[k + 2] = q_full / cap
            k += 3
        for i, pid in enumerate(self.phase_ids()):
            vec[k + pid] = 1.0
            k += self._phase_counts[i]
        return vec

    def _info_from(self, metrics, queue_sum: int) -> Dict[str, object]:
        n_total = sum(m[0] for m in metrics.values())
        mean_delay = 0.0 if n_total == 0 else queue_sum / n_total
        occupancy = float(
            np.mean([m[0] / self._capacity[lid] for lid, m in metrics.items()])
        )
        counters = self.sim.state.counters
        info: Dict[str, object] = {
            "queue_sum": int(queue_sum),
            "mean_delay": float(mean_delay),
            "mean_speed": float(1.0 - mean_delay),
            "mean_occupancy": occupancy,
            "completed": int(counters.completed),
            "dropped": int(counters.dropped),
        }
        if self.config.local_rewards:
            queues = self.lane_queue_counts()
            info["local_rewards"] = [
                -float(sum(queues[lid] for lid in self._signals[a].incoming_lanes))
                for a in self.agents
            ]
        return info
