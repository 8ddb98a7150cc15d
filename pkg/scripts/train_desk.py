#!/usr/bin/env python3
"""Train one desk-scale preset: python scripts/train_desk.py presets/desk_2x2_iql.json"""

import argparse

from tsclab.harness import load_run_config, train


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("preset")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out-dir", default=None)
    args = parser.parse_args()
    config = load_run_config(args.preset)
    if args.seed is not None:
        config.seed = args.seed
    if args.out_dir is not None:
        config.out_dir = args.out_dir
    artifacts = train(config)
    for name, path in artifacts.items():
        print(f"{name}: {path}")


if __name__ == "__main__":
    main()
