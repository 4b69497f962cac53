"""mapf-bridge-eval: roll seeded episodes against a server, print metrics."""

from __future__ import annotations

import argparse
import sys

from . import BridgeError, RandomPolicy, connect, metrics_json, run_episodes

POLICIES = {"random": RandomPolicy}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mapf-bridge-eval",
        description="Evaluate a policy against a protocol server.",
    )
    parser.add_argument(
        "--endpoint",
        required=True,
        help="tcp://HOST:PORT, HOST:PORT, or stdio:COMMAND",
    )
    parser.add_argument(
        "--layout", required=True, help="layout name the server knows"
    )
    parser.add_argument("--variant", default=None)
    parser.add_argument("--agents", type=int, default=None)
    parser.add_argument("--episodes", type=int, required=True)
    parser.add_argument("--policy", choices=sorted(POLICIES), default="random")
    parser.add_argument("--seed", type=int, default=42, help="base seed")
    parser.add_argument("--obs-mode", choices=["local", "cte"], default=None)
    parser.add_argument("--t-max", type=int, default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.episodes < 0:
        print("error: --episodes must be >= 0", file=sys.stderr)
        return 1
    policy = POLICIES[args.policy]()
    try:
        with connect(args.endpoint) as env:
            metrics = run_episodes(
                env,
                policy,
                args.episodes,
                seed_base=args.seed,
                layout=args.layout,
                variant=args.variant,
                n_agents=args.agents,
                obs_mode=args.obs_mode,
                t_max=args.t_max,
            )
    except (BridgeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(metrics_json(metrics))
    return 0


if __name__ == "__main__":
    sys.exit(main())
