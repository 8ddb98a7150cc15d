#!/usr/bin/env python3
"""Evaluate every rule-based controller on the desk 2x2 scenario."""

import argparse
import copy
import json
import os

from tsclab.harness import load_run_config, run_baseline

PRESETS = {
    "fixed_time": "desk_2x2_fixed.json",
    "greedy": "desk_2x2_greedy.json",
    "max_pressure": "desk_2x2_maxpressure.json",
    "sotl": "desk_2x2_sotl.json",
    "random": "desk_2x2_random.json",
}


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--presets-dir", default=os.path.join(
        os.path.dirname(__file__), "..", "presets"))
    parser.add_argument("--episodes", type=int, default=10)
    parser.add_argument("--seed", type=int, default=None)
    args = parser.parse_args()

    rows = {}
    for name, preset in PRESETS.items():
        config = load_run_config(os.path.join(args.presets_dir, preset))
        config.eval_episodes = args.episodes
        if args.seed is not None:
            config.seed = args.seed
        report = run_baseline(config)
        rows[name] = report.aggregate
        print(f"{name:14s} queue={report.aggregate['queue']:8.2f} "
              f"delay={report.aggregate['delay']:.3f} "
              f"travel={report.aggregate['travel_time']:7.1f}")
    print(json.dumps(rows, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
