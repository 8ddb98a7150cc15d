"""Command-line entry point.

Exit codes: 0 success, 1 runtime error, 2 usage error.  Runtime failures
print one machine-parsable line to stderr: ``error: <Kind>: <message>``.
When a flag duplicates a key present in the config file, the file wins and
a warning is printed.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import List, Optional

from . import __version__
from .errors import TscLabError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tsclab",
                                     description="traffic signal control laboratory")
    parser.add_argument("--version", action="version", version=f"tsclab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("grid", help="generate a synthetic grid network file")
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--cols", type=int, required=True)
    p.add_argument("--edge-length", type=float, default=200.0)
    p.add_argument("--speed-limit", type=float, default=13.89)
    p.add_argument("--phases", choices=["two_phase", "four_phase"], default="two_phase")
    p.add_argument("--out", required=True)

    p = sub.add_parser("trips", help="generate a flow file for a network")
    p.add_argument("--net", required=True)
    p.add_argument("--rate", type=float, required=True, help="vehicles/hour per flow")
    p.add_argument("--start", type=int, default=0)
    p.add_argument("--end", type=int, default=360)
    p.add_argument("--per-entry", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("inspect", help="print network analytics as JSON")
    p.add_argument("--net", required=True)

    p = sub.add_parser("run-baseline", help="evaluate a rule-based controller")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("train", help="train a MARL controller")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("eval", help="evaluate a trained checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("serve", help="serve environments over TCP")
    p.add_argument("--config", required=True)
    p.add_argument("--bind", default="127.0.0.1:9999")
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("plot", help="render CSV columns as an SVG line chart")
    p.add_argument("--csv", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--columns", default=None, help="comma-separated column names")

    p = sub.add_parser("bench", help="measure simulation speed on a scenario")
    p.add_argument("--config", required=True)
    p.add_argument("--sim-seconds", type=int, default=20000)
    p.add_argument("--seed", type=int, default=None)
    return parser


def _apply_seed_override(config, seed: Optional[int]):
    # explicit config beats the flag, with a warning for the surprised
    if seed is not None:
        print(f"warning: config file seed {config.seed} overrides --seed {seed}"
              if config.seed != 0 else f"note: using --seed {seed}", file=sys.stderr)
        if config.seed == 0:
            config.seed = seed
    return config


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except TscLabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "grid":
        from .netgraph import generate_grid, save_network

        net = generate_grid(args.rows, args.cols, edge_length=args.edge_length,
                            speed_limit=args.speed_limit, phase_scheme=args.phases)
        save_network(net, args.out)
        print(f"wrote {args.out}: {len(net.signals)} signals, {len(net.lanes)} lanes")
        return 0

    if args.command == "trips":
        from .mesosim import generate_flows, save_flows
        from .netgraph import load_network

        net = load_network(args.net)
        flows = generate_flows(net, rate=args.rate, start=args.start, end=args.end,
                               seed=args.seed, per_entry=args.per_entry)
        save_flows(flows, args.out)
        print(f"wrote {args.out}: {len(flows)} flows")
        return 0

    if args.command == "inspect":
        from .errors import ConfigurationError
        from .netgraph import adjacency_matrix, degree_centrality, load_network

        net = load_network(args.net)
        adj = adjacency_matrix(net)
        try:
            centrality = degree_centrality(net).tolist()
        except ConfigurationError:
            centrality = None
        print(json.dumps({
            "signals": len(net.signals),
            "lanes": len(net.lanes),
            "movements": len(net.movements),
            "entry_lanes": len(net.entry_lanes),
            "exit_lanes": len(net.exit_lanes),
            "adjacency": adj.tolist(),
            "degree_centrality": centrality,
        }, indent=2, sort_keys=True))
        return 0

    if args.command == "run-baseline":
        from .harness import load_run_config, run_baseline

        config = _apply_seed_override(load_run_config(args.config), args.seed)
        report = run_baseline(config)
        print(json.dumps(report.aggregate, indent=2, sort_keys=True))
        return 0

    if args.command == "train":
        from .harness import load_run_config, train

        config = _apply_seed_override(load_run_config(args.config), args.seed)
        artifacts = train(config)
        print(json.dumps(artifacts, indent=2, sort_keys=True))
        return 0

    if args.command == "eval":
        from .harness import evaluate_checkpoint, load_run_config

        config = _apply_seed_override(load_run_config(args.config), args.seed)
        report = evaluate_checkpoint(config, args.checkpoint)
        print(json.dumps(report.aggregate, indent=2, sort_keys=True))
        return 0

    if args.command == "serve":
        from .envserver import serve_forever
        from .harness import build_env_config, load_run_config

        config = _apply_seed_override(load_run_config(args.config), args.seed)
        host, _, port = args.bind.rpartition(":")
        env_config = build_env_config(config.scenario, seed=config.seed)
        serve_forever(env_config, host or "127.0.0.1", int(port))
        return 0

    if args.command == "plot":
        from .plotting import plot_csv

        columns = args.columns.split(",") if args.columns else None
        plot_csv(args.csv, args.out, columns)
        print(f"wrote {args.out}")
        return 0

    if args.command == "bench":
        from .env import TrafficEnv
        from .harness import build_env_config, load_run_config, measure_sim_rate

        config = _apply_seed_override(load_run_config(args.config), args.seed)
        env = TrafficEnv(build_env_config(config.scenario, seed=config.seed))
        rate = measure_sim_rate(env, sim_seconds=args.sim_seconds, seed=config.seed)
        print(json.dumps({"sim_seconds_per_wall_second": rate}))
        return 0

    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
