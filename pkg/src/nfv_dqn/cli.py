"""Command line entry point: ``nfv-dqn {train,eval,compare,oracle}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .baselines import POLICIES
from .harness import (ExperimentConfig, compare_policies, run_evaluation, run_training, solve_slot)


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig()
    if args.scenario:
        cfg.scenario = args.scenario
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "slots", None) is not None:
        if args.command == "train":
            cfg.training_slots = args.slots
        else:
            cfg.eval_slots = args.slots
    if getattr(args, "time_step", None) is not None:
        cfg.time_step = args.time_step
    if getattr(args, "departure", None):
        cfg.departure_probs = tuple(args.departure)
    return cfg


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nfv-dqn", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="progress logging to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="experiment config (YAML)")
        sp.add_argument("--scenario", help="scenario file; defaults to the packaged scenario")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output directory")

    sp = sub.add_parser("train", help="train a DQN agent")
    common(sp)
    sp.add_argument("--slots", type=int, help="training slots")
    sp.add_argument("--time-step", type=int, help="slots per aggregation time step")

    sp = sub.add_parser("eval", help="evaluate a checkpoint with epsilon = 0")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--slots", type=int, help="evaluation slots per sweep point")
    sp.add_argument("--time-step", type=int)
    sp.add_argument("--departure", type=float, nargs="+", help="departure probabilities to sweep")

    sp = sub.add_parser("compare", help="compare policies on one arrival trace")
    common(sp)
    sp.add_argument("--policy", action="append", choices=POLICIES, required=True)
    sp.add_argument("--checkpoint")
    sp.add_argument("--slots", type=int)
    sp.add_argument("--time-step", type=int)

    sp = sub.add_parser("oracle", help="solve the first slot exactly")
    common(sp)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        if args.command == "train":
            _, series = run_training(cfg, out_dir=args.out)
            if len(series):
                print(f"final admission ratio {series.rows[-1]['admission']:.4f} over {len(series)} time steps")
        elif args.command == "eval":
            results = run_evaluation(args.checkpoint, cfg, out_dir=args.out)
            for d, series in results.items():
                label = "configured" if d is None else f"d={d:g}"
                print(f"{label}: admission ratio {series.admission_ratio():.4f}")
        elif args.command == "compare":
            if "dqn" in args.policy and not args.checkpoint:
                raise ValueError("--checkpoint is required for the dqn policy")
            table = compare_policies(cfg, args.policy, checkpoint=args.checkpoint, out_dir=args.out)
            for row in table:
                print(f"{row['policy']:>22s}  admission {row['admission']:.4f}  mean cost {row['mean_cost']:.3f}")
        elif args.command == "oracle":
            print(json.dumps(solve_slot(cfg), indent=2))
    except Exception as exc:  # noqa: BLE001 - report and exit non-zero
        logging.getLogger("nfv_dqn").debug("failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
