#!/usr/bin/env python3
"""Measure simulated seconds per wall second under a random controller."""

import argparse
import json
import os

from tsclab.env import TrafficEnv
from tsclab.harness import build_env_config, load_run_config, measure_sim_rate


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--preset", default=os.path.join(
        os.path.dirname(__file__), "..", "presets", "desk_2x2_random.json"))
    parser.add_argument("--sim-seconds", type=int, default=20000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    config = load_run_config(args.preset)
    env = TrafficEnv(build_env_config(config.scenario, seed=args.seed))
    rate = measure_sim_rate(env, sim_seconds=args.sim_seconds, seed=args.seed)
    print(json.dumps({"sim_seconds_per_wall_second": round(rate, 1)}))


if __name__ == "__main__":
    main()
