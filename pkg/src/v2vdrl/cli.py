"""Command-line entry point: train, eval, sweep, selftest."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import POLICIES, RunConfig, load_config
from .experiments import (CHECKPOINT_NAME, TRAINING_LOG_NAME, MissingCheckpointError, evaluate_run,
                          run_sweep, train_run, write_metrics_csv)
from .selftest import run_selftest


def _config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    if not Path(path).is_file():
        raise SystemExit(f"config file not found: {path}")
    return load_config(path)


def _k_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(k) for k in text.split(",") if k.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad K list {text!r}") from None


def cmd_train(args) -> int:
    cfg = _config(args.config)
    out = Path(args.out or cfg.run.out_dir)
    result = train_run(cfg, out)
    print(f"trained {len(result.log)} steps over {result.episodes} episodes, {result.updates} updates")
    print(f"wrote {out / CHECKPOINT_NAME} and {out / TRAINING_LOG_NAME}")
    return 0


def cmd_eval(args) -> int:
    cfg = _config(args.config)
    rec = evaluate_run(cfg, args.policy, args.checkpoint, args.k)
    out = Path(args.out or cfg.run.out_dir)
    path = out / f"eval_{args.policy}_K{rec.K}.csv"
    write_metrics_csv([rec], path)
    print(f"K={rec.K} policy={rec.policy} mean_v2i_rate={rec.mean_v2i_rate:.6g} "
          f"success_prob={rec.success_prob:.4f} episodes={rec.episodes}")
    print(f"wrote {path}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args.config)
    out = Path(args.out or cfg.run.out_dir)
    policies = tuple(args.policies.split(",")) if args.policies else None
    records = run_sweep(cfg, args.k_list, policies, args.checkpoint, out / "sweep.csv")
    for r in records:
        print(f"K={r.K:3d} {r.policy:8s} mean_v2i_rate={r.mean_v2i_rate:.6g} success_prob={r.success_prob:.4f}")
    print(f"wrote {out / 'sweep.csv'}")
    return 0


def cmd_selftest(args) -> int:
    results = run_selftest()
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:14s} {r.detail}")
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="v2vdrl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the shared Q-network")
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate one policy at one K")
    p.add_argument("--config")
    p.add_argument("--checkpoint")
    p.add_argument("--policy", choices=POLICIES, default="dqn")
    p.add_argument("--k", type=int, help="number of V2V links (default: env.n_v2v)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="evaluate policies over a list of K")
    p.add_argument("--config")
    p.add_argument("--k-list", type=_k_list)
    p.add_argument("--checkpoint")
    p.add_argument("--policies", help="comma-separated subset of " + ",".join(POLICIES))
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("selftest", help="run built-in oracle checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except MissingCheckpointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
