"""Command line entry point: ``junctionrl {train,evaluate,trace,report,list-rewards}``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import harness
from .config import ConfigError, load_config
from .rewards import CATALOGUE, CatalogueError, named_spec


def _add_common(p):
    p.add_argument("--config", type=Path, help="YAML/JSON file overriding any default")
    p.add_argument("--profile", choices=["desk", "paper"], default="paper")
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(prog="junctionrl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train DQN replicas for one reward")
    _add_common(p)
    p.add_argument("--reward", required=True)
    p.add_argument("--episodes", type=int)
    p.add_argument("--replicas", type=int)
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("evaluate", help="score a controller over replications of a scenario")
    _add_common(p)
    p.add_argument("--controller", choices=["dqn", "mo", "va", "random"], required=True)
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--scenario", choices=["normal", "peak", "oversaturated", "custom"], required=True)
    p.add_argument("--replications", type=int, default=100)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", type=Path, default=Path("results"))

    p = sub.add_parser("trace", help="write a JSONL decision trace of one episode")
    _add_common(p)
    p.add_argument("--controller", choices=["dqn", "mo", "va", "random"], required=True)
    p.add_argument("--checkpoint", type=Path)
    p.add_argument("--scenario", choices=["normal", "peak", "oversaturated", "custom"], default="peak")
    p.add_argument("--reward", default="queues")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("report", help="combine evaluation summaries into a table and long CSV")
    p.add_argument("files", nargs="+", type=Path)
    p.add_argument("--table", type=Path)
    p.add_argument("--long-csv", type=Path)

    sub.add_parser("list-rewards", help="print the reward catalogue")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(args)
    except (ConfigError, CatalogueError, harness.ReportError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args):
    if args.command == "list-rewards":
        for name, spec in CATALOGUE.items():
            print(f"{name}\t{spec.label}")
        return 0
    if args.command == "report":
        summaries = [harness.load_summary(f) for f in args.files]
        print(harness.report(summaries, args.table, args.long_csv), end="")
        return 0

    cfg = load_config(args.config, args.profile)
    if args.command == "train":
        named_spec(args.reward)
        out = args.out or Path("runs") / args.reward

        def progress(replica, row):
            if args.verbose:
                print(f"replica {replica} episode {row['episode']} reward {row['total_reward']:.1f} "
                      f"veh {row['vehicle_wait']:.1f}s ped {row['ped_wait']:.1f}s", file=sys.stderr)

        sel = harness.train(cfg, args.reward, out, args.replicas, args.episodes, args.seed, progress)
        print(f"best replica: {sel['best_replica']} -> {out / str(sel['best_checkpoint'])}")
        return 0
    if args.command == "evaluate":
        summary, rows = harness.evaluate(cfg, args.controller, args.scenario, args.replications, args.seed,
                                         checkpoint=args.checkpoint, jobs=args.jobs)
        csv_path, json_path = harness.write_evaluation(summary, rows, args.out)
        print(f"{summary.reward} [{summary.controller}] {summary.scenario}: {summary.table_row()}")
        print(f"wrote {csv_path} and {json_path}")
        return 0
    if args.command == "trace":
        n = harness.trace(cfg, args.controller, args.scenario, args.seed, args.reward, args.out, args.checkpoint)
        print(f"wrote {n} decision records to {args.out}")
        return 0
    raise AssertionError(args.command)


if __name__ == "__main__":
    sys.exit(main())
