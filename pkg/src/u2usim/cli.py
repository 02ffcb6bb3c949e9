"""Command line entry point: ``u2usim {train,eval,compare}``."""
from __future__ import annotations

import argparse
import copy
import logging
import os
import sys

from .config import AGENT_KINDS, ConfigError, load_config
from .harness import compare_agents, run_experiment
from .nn import TrainingDivergence

log = logging.getLogger("u2usim")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (defaults apply to omitted fields)")
    common.add_argument("--agent", choices=AGENT_KINDS, help="decision policy")
    common.add_argument("--seed", type=int, help="run seed (u64)")
    common.add_argument("--episodes", type=int, help="training episodes")
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=("csv", "json"), help="metrics file format")

    p = argparse.ArgumentParser(prog="u2usim", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train an agent, then run evaluation episodes")
    ev = sub.add_parser("eval", parents=[common], help="evaluate a saved checkpoint without training")
    ev.add_argument("--checkpoint", help="checkpoint.json written by train (not needed for greedy)")
    cmp_ = sub.add_parser("compare", parents=[common], help="compare agents over several seeds")
    cmp_.add_argument("--agents", default="greedy,dqn,ac", help="comma separated agent kinds")
    cmp_.add_argument("--seeds", type=int, default=5, help="number of seeds, starting at --seed")
    cmp_.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    return p


def _configure(args):
    cfg = load_config(args.config)
    if args.agent:
        cfg.agent.kind = args.agent
    if args.seed is not None:
        cfg.run.seed = args.seed
    if args.episodes is not None:
        cfg.run.episodes = args.episodes
    if args.out:
        cfg.run.output_dir = args.out
    if args.format:
        cfg.run.format = args.format
    return cfg.validate()


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("U2USIM_LOG", "WARNING").upper(),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    args = _parser().parse_args(argv)
    try:
        cfg = _configure(args)
        if args.command == "train":
            res = run_experiment(cfg)
            print(f"wrote {', '.join(str(p) for p in res.files.values())} and {res.checkpoint}")
        elif args.command == "eval":
            if cfg.agent.kind != "greedy" and not args.checkpoint:
                raise ConfigError("--checkpoint", f"required to evaluate a {cfg.agent.kind} agent")
            res = run_experiment(cfg, checkpoint_in=args.checkpoint, train=False)
            print(f"wrote {', '.join(str(p) for p in res.files.values())}")
        else:
            configs = []
            for kind in args.agents.split(","):
                c = copy.deepcopy(cfg)
                c.agent.kind = kind.strip()
                configs.append(c.validate())
            seeds = range(cfg.run.seed, cfg.run.seed + args.seeds)
            comp = compare_agents(configs, seeds, out_dir=cfg.run.output_dir, workers=args.workers)
            sys.stdout.write(comp.to_csv())
    except ConfigError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 2
    except TrainingDivergence as e:
        print(f"training diverged: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"I/O failure: {e.filename or ''} {e.strerror or e}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
