"""Rule-based signal controllers.

All controllers are classical formulations driven by full-lane halted
counts (loop-detector style totals, not the 50 m observation window) plus
their own timers; they never touch vehicle-level simulator internals.
Each controller declares the action mode it requires.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .env import FREE_SELECT, ROUND_ROBIN, TrafficEnv
from .errors import ConfigurationError

DEFAULT_FIXED_GREEN = 25.0
DEFAULT_SOTL_THETA = 30.0
DEFAULT_SOTL_MIN_GREEN = 10.0


def _phase_lane_sets(env: TrafficEnv):
    """Per agent, per green phase: (feeding lanes, movement lane pairs)."""
    per_agent = []
    for agent in env.agents:
        sig = env.net.signal_by_id[agent]
        phases = []
        for phase in sig.green_phases:
            pairs = [
                (env.net.movements[mid].from_lane, env.net.movements[mid].to_lane)
                for mid in phase.permitted
            ]
            feeding = tuple(sorted({f for f, _ in pairs}))
            phases.append((feeding, tuple(pairs)))
        per_agent.append(phases)
    return per_agent


class FixedTimeController:
    """Round-robin advance every ``fixed_green`` seconds of green."""

    required_mode = ROUND_ROBIN

    def __init__(self, fixed_green: float = DEFAULT_FIXED_GREEN):
        self.fixed_green = fixed_green
        self._elapsed: List[float] = []

    def reset(self, env: TrafficEnv) -> None:
        self._elapsed = [0.0] * env.n_agents

    def act(self, env: TrafficEnv) -> List[int]:
        interval = env.config.action_interval
        actions = []
        for i in range(env.n_agents):
            if self._elapsed[i] >= self.fixed_green:
                actions.append(1)
                self._elapsed[i] = 0.0
            else:
                actions.append(0)
                self._elapsed[i] += interval
        return actions


class GreedyController:
    """Select the phase whose feeding lanes hold the most halted vehicles."""

    required_mode = FREE_SELECT

    def __init__(self):
        self._phases = None

    def reset(self, env: TrafficEnv) -> None:
        self._phases = _phase_lane_sets(env)

    def act(self, env: TrafficEnv) -> List[int]:
        queues = env.lane_queue_counts()
        actions = []
        for phases in self._phases:
            sums = [sum(queues[l] for l in feeding) for feeding, _ in phases]
            actions.append(int(np.argmax(sums)))  # argmax takes the lowest index on ties
        return actions


class MaxPressureController:
    """Maximize upstream-minus-downstream queue differential per phase.

    A new green is held for at least ``min_green`` seconds (one action
    interval by default) before another phase may be selected.
    """

    required_mode = FREE_SELECT

    def __init__(self, min_green: Optional[float] = None):
        self.min_green = min_green
        self._phases = None
        self._elapsed: List[float] = []

    def reset(self, env: TrafficEnv) -> None:
        self._phases = _phase_lane_sets(env)
        self._elapsed = [0.0] * env.n_agents

    def act(self, env: TrafficEnv) -> List[int]:
        interval = env.config.action_interval
        min_green = self.min_green if self.min_green is not None else float(interval)
        queues = env.lane_queue_counts()
        current = env.phase_ids()
        actions = []
        for i, phases in enumerate(self._phases):
            if self._elapsed[i] < min_green:
                actions.append(current[i])
                self._elapsed[i] += interval
                continue
            pressures = [
                sum(queues[f] - queues[t] for f, t in pairs) for _, pairs in phases
            ]
            target = int(np.argmax(pressures))
            if target != current[i]:
                self._elapsed[i] = 0.0
            else:
                self._elapsed[i] += interval
            actions.append(target)
        return actions


class SotlController:
    """Self-organizing threshold rule on accumulated red-approach demand.

    Every step the controller integrates halted vehicles on lanes not served
    by the current green (vehicle-seconds); once the green has lasted
    ``min_green`` and the integral reaches ``theta`` it advances and resets.
    """

    required_mode = ROUND_ROBIN

    def __init__(self, theta: float = DEFAULT_SOTL_THETA,
                 min_green: float = DEFAULT_SOTL_MIN_GREEN):
        self.theta = theta
        self.min_green = min_green
        self._phases = None
        self._elapsed: List[float] = []
        self._counter: List[float] = []
        self._incoming: List[Tuple[str, ...]] = []

    def reset(self, env: TrafficEnv) -> None:
        self._phases = _phase_lane_sets(env)
        self._elapsed = [0.0] * env.n_agents
        self._counter = [0.0] * env.n_agents
        self._incoming = [
            env.net.signal_by_id[a].incoming_lanes for a in env.agents
        ]

    def act(self, env: TrafficEnv) -> List[int]:
        interval = env.config.action_interval
        queues = env.lane_queue_counts()
        current = env.phase_ids()
        actions = []
        for i, phases in enumerate(self._phases):
            served = set(phases[current[i]][0])
            red_demand = sum(q for lid in self._incoming[i]
                             if lid not in served and (q := queues[lid]))
            self._counter[i] += red_demand * interval
            if self._elapsed[i] >= self.min_green and self._counter[i] >= self.theta:
                actions.append(1)
                self._elapsed[i] = 0.0
                self._counter[i] = 0.0
            else:
                actions.append(0)
                self._elapsed[i] += interval
        return actions


class RandomController:
    """Uniform random actions; the reference floor for comparisons."""

    required_mode = None  # any

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self._sizes: List[int] = []

    def reseed(self, seed: int) -> None:
        self.seed = seed

    def reset(self, env: TrafficEnv) -> None:
        self._rng = np.random.default_rng(self.seed)
        self._sizes = env.action_sizes

    def act(self, env: TrafficEnv) -> List[int]:
        return [int(self._rng.integers(size)) for size in self._sizes]


CONTROLLER_KINDS = {
    "fixed_time": FixedTimeController,
    "greedy": GreedyController,
    "max_pressure": MaxPressureController,
    "sotl": SotlController,
    "random": RandomController,
}


def make_controller(spec: dict, seed: int = 0):
    """Build a controller from a run-config dict like {"kind": "sotl", ...}."""
    if "kind" not in spec:
        raise ConfigurationError("controller spec needs a 'kind' field")
    kind = spec["kind"]
    if kind not in CONTROLLER_KINDS:
        raise ConfigurationError(
            f"unknown controller kind {kind!r}; choose from {sorted(CONTROLLER_KINDS)}"
        )
    params = {k: v for k, v in spec.items() if k != "kind"}
    if kind == "random":
        params.setdefault("seed", seed)
    try:
        return CONTROLLER_KINDS[kind](**params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for controller {kind!r}: {exc}") from exc


def check_controller_mode(controller, env: TrafficEnv) -> None:
    required = getattr(controller, "required_mode", None)
    if required is not None and env.config.action_mode != required:
        raise ConfigurationError(
            f"{type(controller).__name__} requires action mode {required!r}, "
            f"environment uses {env.config.action_mode!r}"
        )
