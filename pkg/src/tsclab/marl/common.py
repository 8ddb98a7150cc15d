"""Shared trainer plumbing: exploration schedule, input building, checkpoints."""

from __future__ import annotations

import json
from typing import Dict, List, Sequence, Tuple

import numpy as np

EPS_START = 1.0
EPS_FINAL = 0.05
ANNEAL_STEPS = 50_000


def epsilon_schedule(env_steps: int, anneal_steps: int = ANNEAL_STEPS,
                     start: float = EPS_START, final: float = EPS_FINAL) -> float:
    """Linear decay from ``start`` to ``final`` over ``anneal_steps``, then flat."""
    if env_steps < 0:
        raise ValueError("env_steps must be non-negative")
    if env_steps >= anneal_steps:
        return final
    return start + (final - start) * (env_steps / anneal_steps)


def pad_observations(obs_list: Sequence[np.ndarray], width: int) -> np.ndarray:
    """Stack per-agent observations into (n, width), zero-padding short rows."""
    n = len(obs_list)
    out = np.zeros((n, width), dtype=np.float64)
    for i, o in enumerate(obs_list):
        out[i, : o.shape[0]] = o
    return out


def agent_inputs(obs: np.ndarray, eye: np.ndarray) -> np.ndarray:
    """Append agent one-hots: (B, n, d) -> (B*n, d + n)."""
    b, n, d = obs.shape
    ids = np.broadcast_to(eye, (b, n, n))
    return np.concatenate([obs, ids], axis=2).reshape(b * n, d + n)


def action_mask_bias(action_sizes: Sequence[int], n_actions: int) -> np.ndarray:
    """(n, n_actions) additive bias: 0 for valid actions, -1e9 for padding."""
    bias = np.full((len(action_sizes), n_actions), -1e9, dtype=np.float64)
    for i, size in enumerate(action_sizes):
        bias[i, :size] = 0.0
    return bias


def save_checkpoint(path: str, config: dict, arrays: Dict[str, np.ndarray]) -> None:
    payload = dict(arrays)
    payload["config_json"] = np.array(json.dumps(config, sort_keys=True))
    np.savez(path, **payload)


def load_checkpoint(path: str) -> Tuple[dict, Dict[str, np.ndarray]]:
    with np.load(path, allow_pickle=False) as data:
        arrays = {k: np.array(v) for k, v in data.items()}
    config = json.loads(str(arrays.pop("config_json")))
    return config, arrays


def prefix_state(prefix: str, state: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
    return {f"{prefix}/{k}": v for k, v in state.items()}


def unprefix_state(prefix: str, arrays: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
    head = prefix + "/"
    return {k[len(head):]: v for k, v in arrays.items() if k.startswith(head)}
