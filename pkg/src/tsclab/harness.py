"""Training and evaluation orchestration.

Drives episodes across parallel environments, feeds the trainers, runs
greedy evaluations on a fixed cadence, and writes all run artifacts
(``metrics.csv``, ``eval.csv``, ``train.jsonl``, ``run.json``, checkpoints)
under one output directory.  Every stochastic choice derives from the run
seed, and parallel results merge in environment-index order, so a run is
bit-reproducible end to end.

Episode counting is global across parallel environments: the evaluation
cadence of "every N episodes" means N episodes summed over all workers.
"""

from __future__ import annotations

import csv
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .baselines import RandomController, check_controller_mode, make_controller
from .env import EnvConfig, TrafficEnv
from .errors import ConfigurationError
from .marl import (
    AC_ALGOS,
    ALL_ALGOS,
    VALUE_ALGOS,
    A2CConfig,
    ActorCriticTrainer,
    Episode,
    ValueTrainer,
    ValueTrainerConfig,
)
from .marl.common import load_checkpoint, pad_observations
from .mesosim import FlowSpec, flows_from_document, load_flows
from .netgraph import generate_grid, load_network, parse_network

METRICS_COLUMNS = (
    "episode", "env_steps", "epsilon", "loss", "return", "queue", "delay",
    "speed", "occupancy", "travel_time", "wait_time", "completed", "dropped",
)
EVAL_COLUMNS = (
    "eval_round", "episode", "env_steps", "return", "queue", "delay", "speed",
    "occupancy", "travel_time", "wait_time", "completed", "dropped",
)

EVAL_SEED_OFFSET = 500_000_000


@dataclass
class RunConfig:
    scenario: dict
    algorithm: Optional[str] = None
    controller: Optional[dict] = None
    total_env_steps: int = 4_320_000
    eval_interval: int = 200
    eval_episodes: int = 10
    parallel_envs: int = 4
    seed: int = 0
    out_dir: str = "runs/out"
    trainer: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.eval_interval < 1:
            raise ConfigurationError("eval_interval must be at least 1")
        if self.parallel_envs < 1:
            raise ConfigurationError("parallel_envs must be at least 1")
        if self.eval_episodes < 1:
            raise ConfigurationError("eval_episodes must be at least 1")
        if self.algorithm is not None and self.algorithm not in ALL_ALGOS:
            raise ConfigurationError(
                f"unknown algorithm {self.algorithm!r}; choose from {sorted(ALL_ALGOS)}"
            )


def load_run_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))
    return run_config_from_dict(raw, base_dir=base)


def run_config_from_dict(raw: dict, base_dir: str = ".") -> RunConfig:
    known = {f for f in RunConfig.__dataclass_fields__}
    unknown = set(raw) - known
    if unknown:
        raise ConfigurationError(f"unknown run-config fields: {sorted(unknown)}")
    cfg = RunConfig(**raw)
    cfg.validate()
    cfg.scenario = dict(cfg.scenario)
    cfg.scenario["_base_dir"] = base_dir
    return cfg


def build_env_config(scenario: dict, seed: int = 0) -> EnvConfig:
    """Resolve a scenario dict (inline grid or file paths) into an EnvConfig."""
    base = scenario.get("_base_dir", ".")

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    network = scenario.get("network")
    if isinstance(network, str):
        net = load_network(resolve(network))
    elif isinstance(network, dict) and "grid" in network:
        g = network["grid"]
        net = generate_grid(
            rows=int(g["rows"]), cols=int(g["cols"]),
            edge_length=float(g.get("edge_length", 200.0)),
            speed_limit=float(g.get("speed_limit", 13.89)),
            phase_scheme=g.get("phase_scheme", "two_phase"),
            visibility=float(g.get("visibility", 50.0)),
        )
    elif isinstance(network, dict):
        net = parse_network(network)
    else:
        raise ConfigurationError("scenario.network must be a path, grid spec, or document")

    flows = scenario.get("flows", [])
    if isinstance(flows, str):
        flow_list = load_flows(resolve(flows))
    else:
        flow_list = flows_from_document(flows)

    return EnvConfig(
        network=net,
        flows=flow_list,
        action_mode=scenario.get("action_mode", "round_robin"),
        episode_limit=int(scenario.get("episode_limit", 72)),
        action_interval=int(scenario.get("action_interval", 5)),
        yellow_duration=int(scenario.get("yellow_duration", 5)),
        visibility=float(scenario.get("visibility", 50.0)),
        saturation_flow=float(scenario.get("saturation_flow", 0.5)),
        local_rewards=bool(scenario.get("local_rewards", False)),
        seed=seed,
    )


def make_trainer(algorithm: str, env: TrafficEnv, overrides: dict, seed: int):
    common = dict(
        obs_dim=max(env.observation_sizes),
        state_dim=env.state_size,
        n_agents=env.n_agents,
        action_sizes=env.action_sizes,
        seed=seed,
    )
    if env.config.local_rewards:
        common["reward_mode"] = "local"
    if algorithm in VALUE_ALGOS:
        config_cls, trainer_cls = ValueTrainerConfig, ValueTrainer
        other_fields = set(A2CConfig.__dataclass_fields__)
    elif algorithm in AC_ALGOS:
        config_cls, trainer_cls = A2CConfig, ActorCriticTrainer
        other_fields = set(ValueTrainerConfig.__dataclass_fields__)
    else:
        raise ConfigurationError(f"unknown algorithm {algorithm!r}")
    known = set(config_cls.__dataclass_fields__)
    for key, value in overrides.items():
        if key in known:
            common[key] = value
        elif key not in other_fields:
            raise ConfigurationError(f"unknown trainer option {key!r}")
        # options for the other trainer family are tolerated so presets can share
    if "hidden" in common:
        common["hidden"] = tuple(common["hidden"])
    return trainer_cls(config_cls(algorithm=algorithm, **common))


# ---------------------------------------------------------------------------
# Policies: anything with reset(env, seed) and act(env, observations)


class TrainerPolicy:
    """Acts with a trainer; greedy by default, exploring when asked."""

    def __init__(self, trainer, epsilon: float = 0.0, sample: bool = False):
        self.trainer = trainer
        self.epsilon = epsilon
        self.sample = sample
        self._rng = np.random.default_rng(0)

    def reset(self, env: TrafficEnv, seed: int) -> None:
        self._rng = np.random.default_rng([seed, 17])

    def act(self, env: TrafficEnv, observations) -> List[int]:
        if isinstance(self.trainer, ValueTrainer):
            return self.trainer.select_actions(observations, self.epsilon, self._rng)
        if self.sample:
            return self.trainer.select_actions(observations, rng=self._rng)
        return self.trainer.select_actions(observations, greedy=True)


class ControllerPolicy:
    def __init__(self, controller):
        self.controller = controller

    def reset(self, env: TrafficEnv, seed: int) -> None:
        if hasattr(self.controller, "reseed"):
            self.controller.reseed(seed)
        self.controller.reset(env)

    def act(self, env: TrafficEnv, observations) -> List[int]:
        return self.controller.act(env)


# ---------------------------------------------------------------------------
# Rollouts


def rollout_episode(env: TrafficEnv, policy, seed: int,
                    policy_version: Optional[int] = None) -> Tuple[Episode, dict]:
    """Run one full episode; returns the stored episode and its metric row."""
    obs, state = env.reset(seed=seed)
    policy.reset(env, seed)
    width = max(env.observation_sizes)
    obs_hist = [pad_observations(obs, width)]
    state_hist = [state]
    actions_hist: List[List[int]] = []
    rewards: List[float] = []
    local_rewards: List[List[float]] = []
    infos: List[dict] = []
    terminated_col: List[float] = []
    done = False
    while not done:
        actions = policy.act(env, obs)
        res = env.step(actions)
        obs = res.observations
        obs_hist.append(pad_observations(obs, width))
        state_hist.append(res.state)
        actions_hist.append(list(actions))
        rewards.append(res.reward)
        infos.append(res.info)
        terminated_col.append(1.0 if res.terminated else 0.0)
        if "local_rewards" in res.info:
            local_rewards.append(res.info["local_rewards"])
        done = res.terminated

    episode = Episode(
        observations=np.asarray(obs_hist),
        states=np.asarray(state_hist),
        actions=np.asarray(actions_hist, dtype=np.int64),
        rewards=np.asarray(rewards),
        terminated=np.asarray(terminated_col),
        truncated=True,
        local_rewards=np.asarray(local_rewards) if local_rewards else None,
        policy_version=policy_version,
    )
    return episode, _episode_stats(env, rewards, infos)


def _episode_stats(env: TrafficEnv, rewards: Sequence[float], infos: Sequence[dict]) -> dict:
    sim = env.sim
    waits = list(sim.state.completed_wait_ticks) + [
        v.wait_ticks for v in sim.state.vehicles.values()
    ]
    travel = sim.state.completed_travel_times
    return {
        "return": float(np.sum(rewards)),
        "queue": float(np.mean([i["queue_sum"] for i in infos])),
        "delay": float(np.mean([i["mean_delay"] for i in infos])),
        "speed": float(np.mean([i["mean_speed"] for i in infos])),
        "occupancy": float(np.mean([i["mean_occupancy"] for i in infos])),
        "travel_time": float(np.mean(travel)) if travel else 0.0,
        "wait_time": float(np.mean(waits)) if waits else 0.0,
        "completed": int(sim.state.counters.completed),
        "dropped": int(sim.state.counters.dropped),
    }


def run_parallel(envs: Sequence[TrafficEnv], make_policy: Callable[[int], object],
                 seeds: Sequence[int],
                 policy_version: Optional[int] = None) -> List[Tuple[Episode, dict]]:
    """Roll one episode in every environment; results in env-index order."""
    if len(envs) == 1:
        return [rollout_episode(envs[0], make_policy(0), seeds[0], policy_version)]
    with ThreadPoolExecutor(max_workers=len(envs)) as pool:
        futures = [
            pool.submit(rollout_episode, env, make_policy(i), seeds[i], policy_version)
            for i, env in enumerate(envs)
        ]
        return [f.result() for f in futures]


# ---------------------------------------------------------------------------
# Evaluation


@dataclass
class EvalReport:
    per_episode: List[dict]
    aggregate: dict

    @classmethod
    def from_rows(cls, rows: Sequence[dict]) -> "EvalReport":
        keys = rows[0].keys()
        aggregate = {k: float(np.mean([r[k] for r in rows])) for k in keys}
        return cls(per_episode=list(rows), aggregate=aggregate)

    def to_json(self) -> dict:
        return {"aggregate": self.aggregate, "per_episode": self.per_episode}


def evaluate(policy, env: TrafficEnv, episodes: int, seed: int) -> EvalReport:
    """Deterministic greedy evaluation: episode i uses seed + i."""
    rows = []
    for i in range(episodes):
        _, stats = rollout_episode(env, policy, seed + i)
        rows.append(stats)
    return EvalReport.from_rows(rows)


def evaluate_controller(controller, env: TrafficEnv, episodes: int, seed: int) -> EvalReport:
    check_controller_mode(controller, env)
    return evaluate(ControllerPolicy(controller), env, episodes, seed)


# ---------------------------------------------------------------------------
# Output plumbing


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


class _CsvSink:
    def __init__(self, path: str, columns: Sequence[str]):
        self.columns = columns
        self._fh = open(path, "w", encoding="utf-8", newline="")
        self._fh.write(",".join(columns) + "\n")

    def write(self, row: dict) -> None:
        self._fh.write(",".join(_fmt(row.get(c)) for c in self.columns) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def write_run_metadata(config: RunConfig, out_dir: str) -> None:
    scenario = {k: v for k, v in config.scenario.items() if not k.startswith("_")}
    payload = {
        "config": {**asdict(config), "scenario": scenario},
        "seed": config.seed,
        "versions": {
            "tsclab": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
    }
    with open(os.path.join(out_dir, "run.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _rollout_seed(base_seed: int, episode_index: int) -> int:
    return base_seed * 1_000_003 + episode_index


def _eval_seed(base_seed: int, eval_round: int) -> int:
    return base_seed * 1_000_003 + EVAL_SEED_OFFSET + eval_round * 100_000


# ---------------------------------------------------------------------------
# Training


def train(config: RunConfig) -> Dict[str, str]:
    """Full training run; returns paths of the emitted artifacts."""
    config.validate()
    if config.algorithm is None:
        raise ConfigurationError("train needs an 'algorithm'")
    out = config.out_dir
    os.makedirs(out, exist_ok=True)
    write_run_metadata(config, out)

    envs = [TrafficEnv(build_env_config(config.scenario, seed=config.seed + i))
            for i in range(config.parallel_envs)]
    eval_env = TrafficEnv(build_env_config(config.scenario, seed=config.seed))
    trainer = make_trainer(config.algorithm, envs[0], config.trainer, config.seed)
    on_policy = isinstance(trainer, ActorCriticTrainer)
    episode_limit = envs[0].episode_limit

    metrics = _CsvSink(os.path.join(out, "metrics.csv"), METRICS_COLUMNS)
    evals = _CsvSink(os.path.join(out, "eval.csv"), EVAL_COLUMNS)
    jsonl = open(os.path.join(out, "train.jsonl"), "w", encoding="utf-8")
    ckpt_path = lambda tag: os.path.join(out, f"ckpt_{tag}.npz")
    trainer.save(ckpt_path("ep000000"))

    episodes_done = 0
    env_steps = 0
    eval_round = 0
    recent_returns: List[float] = []

    def log_episode(stats: dict, loss: Optional[float], epsilon: Optional[float]) -> None:
        row = {"episode": episodes_done, "env_steps": env_steps,
               "epsilon": epsilon, "loss": loss, **stats}
        metrics.write(row)
        recent_returns.append(stats["return"])
        del recent_returns[:-100]
        jsonl.write(json.dumps({
            "episode": episodes_done, "env_steps": env_steps,
            "loss": loss, "epsilon": epsilon,
            "mean_return": float(np.mean(recent_returns)),
        }) + "\n")
        jsonl.flush()

    def run_eval() -> None:
        nonlocal eval_round
        eval_round += 1
        policy = TrainerPolicy(trainer)  # epsilon 0 / greedy
        report = evaluate(policy, eval_env, config.eval_episodes,
                          _eval_seed(config.seed, eval_round))
        evals.write({"eval_round": eval_round, "episode": episodes_done,
                     "env_steps": env_steps, **report.aggregate})
        trainer.save(ckpt_path(f"ep{episodes_done:06d}"))

    try:
        while env_steps < config.total_env_steps:
            if on_policy:
                seeds = [_rollout_seed(config.seed, episodes_done + i)
                         for i in range(len(envs))]
                make_policy = lambda i: TrainerPolicy(trainer, sample=True)
                results = run_parallel(envs, make_policy, seeds,
                                       policy_version=trainer.policy_version)
                policy_loss, value_loss, _ = trainer.a2c_update(
                    [ep for ep, _ in results])
                before = episodes_done
                for ep, stats in results:
                    episodes_done += 1
                    env_steps += ep.length
                    log_episode(stats, policy_loss, None)
                if episodes_done // config.eval_interval > before // config.eval_interval:
                    run_eval()
            else:
                epsilon = trainer.epsilon(env_steps)
                seeds = [_rollout_seed(config.seed, episodes_done + i)
                         for i in range(len(envs))]
                make_policy = lambda i: TrainerPolicy(trainer, epsilon=epsilon)
                results = run_parallel(envs, make_policy, seeds)
                for ep, stats in results:
                    trainer.observe_episode(ep)
                    episodes_done += 1
                    env_steps += ep.length
                    loss = trainer.td_update() if trainer.ready() else None
                    trainer.maybe_sync_target(episodes_done)
                    log_episode(stats, loss, epsilon)
                    if episodes_done % config.eval_interval == 0:
                        run_eval()
    finally:
        trainer.save(ckpt_path("final"))
        metrics.close()
        evals.close()
        jsonl.close()

    return {
        "metrics": os.path.join(out, "metrics.csv"),
        "eval": os.path.join(out, "eval.csv"),
        "checkpoint": ckpt_path("final"),
        "run": os.path.join(out, "run.json"),
    }


def run_baseline(config: RunConfig) -> EvalReport:
    """Evaluate a rule-based controller on the scenario; writes eval.csv."""
    config.validate()
    if config.controller is None:
        raise ConfigurationError("run-baseline needs a 'controller'")
    out = config.out_dir
    os.makedirs(out, exist_ok=True)
    write_run_metadata(config, out)
    env = TrafficEnv(build_env_config(config.scenario, seed=config.seed))
    controller = make_controller(config.controller, seed=config.seed)
    check_controller_mode(controller, env)
    report = evaluate(ControllerPolicy(controller), env, config.eval_episodes,
                      _eval_seed(config.seed, 0))
    sink = _CsvSink(os.path.join(out, "eval.csv"), EVAL_COLUMNS)
    sink.write({"eval_round": 0, "episode": 0, "env_steps": 0, **report.aggregate})
    sink.close()
    with open(os.path.join(out, "eval.json"), "w", encoding="utf-8") as fh:
        json.dump(report.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report


def load_trainer(path: str):
    config, _ = load_checkpoint(path)
    if config.get("kind") == "actor_critic":
        return ActorCriticTrainer.load(path)
    return ValueTrainer.load(path)


def evaluate_checkpoint(config: RunConfig, checkpoint: str) -> EvalReport:
    config.validate()
    env = TrafficEnv(build_env_config(config.scenario, seed=config.seed))
    trainer = load_trainer(checkpoint)
    report = evaluate(TrainerPolicy(trainer), env, config.eval_episodes,
                      _eval_seed(config.seed, 0))
    out = config.out_dir
    os.makedirs(out, exist_ok=True)
    sink = _CsvSink(os.path.join(out, "eval.csv"), EVAL_COLUMNS)
    sink.write({"eval_round": 0, "episode": 0, "env_steps": 0, **report.aggregate})
    sink.close()
    return report


def measure_sim_rate(env: TrafficEnv, sim_seconds: int = 20_000, seed: int = 0) -> float:
    """Simulated seconds per wall second under a random controller."""
    controller = RandomController(seed=seed)
    policy = ControllerPolicy(controller)
    interval = env.config.action_interval
    steps_needed = sim_seconds // interval
    done_steps = 0
    start = time.perf_counter()
    episode = 0
    while done_steps < steps_needed:
        env.reset(seed=seed + episode)
        policy.reset(env, seed + episode)
        obs = None
        for _ in range(env.episode_limit):
            res = env.step(policy.act(env, obs))
            done_steps += 1
            if res.terminated or done_steps >= steps_needed:
                break
        episode += 1
    elapsed = time.perf_counter() - start
    return done_steps * interval / elapsed
