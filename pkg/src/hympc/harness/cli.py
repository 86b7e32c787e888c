"""Command-line entry point: ``hympc <subcommand> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import CONTROLLERS, ConfigError, ScenarioConfig
from .episode import run_episode
from .suites import SUITES, aggregate, episode_seeds, run_many, run_suite

log = logging.getLogger("hympc")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="scenario JSON (defaults when omitted)")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", type=Path, default=Path("runs"), help="output directory")
    common.add_argument("--controller", choices=CONTROLLERS, help="controller kind")
    common.add_argument("--workers", type=int, help="parallel episodes")
    common.add_argument("--verbose", "-v", action="store_true")

    p = argparse.ArgumentParser(prog="hympc", description="Swinging-gate traversal experiments")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="fly one episode")
    c = sub.add_parser("collect", parents=[common], help="gather deep-policy supervision")
    c.add_argument("--samples", type=int, default=3000)
    t = sub.add_parser("train-policies", parents=[common], help="fit the deep policies")
    t.add_argument("--buffer", type=Path, required=True, help="replay buffer CSV")
    t.add_argument("--epochs", type=int, default=200)
    t.add_argument("--lr", type=float, default=1e-2)
    sub.add_parser("eval", parents=[common], help="num_trials episodes of one controller")
    for name in SUITES:
        sub.add_parser(name, parents=[common], help=f"run the {name} suite")
    return p


def _load_config(args) -> ScenarioConfig:
    cfg = ScenarioConfig.load(args.config) if args.config else ScenarioConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.controller is not None:
        changes["controller"] = args.controller
    if args.workers is not None:
        changes["workers"] = args.workers
    return cfg.replace(**changes) if changes else cfg


def _summary(report: dict) -> str:
    lines = []
    for g in report["groups"]:
        key = {k: v for k, v in g.items() if k in ("controller", "distance", "sim_c_max", "gate_count")}
        err = "n/a" if g["mean_error"] is None else f"{g['mean_error']:.3f} m"
        tm = "n/a" if g["mean_time"] is None else f"{g['mean_time']:.2f} s"
        lines.append(f"{key}: success {100 * g['success_rate']:.0f}%  error {err}  time {tm}")
    return "\n".join(lines)


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args)
        args.out.mkdir(parents=True, exist_ok=True)
        if args.command == "simulate":
            m = run_episode(cfg, cfg.seed, args.out / f"episode_{cfg.seed}.csv")
            (args.out / f"episode_{cfg.seed}.json").write_text(json.dumps(m.to_dict(), indent=2))
            print(json.dumps(m.to_dict(), indent=2))
        elif args.command == "collect":
            from ..deep_policy import collect
            buf = collect(args.samples, cfg, cfg.seed,
                          progress=lambda ep, n, m: log.info("episode %d: %d samples", ep, n))
            buf.save(args.out / "buffer.csv")
            print(f"stored {len(buf)} samples in {args.out / 'buffer.csv'}")
        elif args.command == "train-policies":
            from ..deep_policy import ReplayBuffer, train
            buf = ReplayBuffer.load(args.buffer)
            policy, rep = train(buf, epochs=args.epochs, lr=args.lr, seed=cfg.seed)
            policy.save(args.out)
            print(f"lambda loss {rep.lambda_loss:.5f}, t_p loss {rep.t_p_loss:.5f}; "
                  f"saved to {args.out}")
        elif args.command == "eval":
            seeds = episode_seeds(cfg.seed, cfg.num_trials)
            results = run_many(cfg, seeds, args.out, cfg.controller, cfg.workers)
            report = {"suite": "eval", "seeds": seeds, "config": cfg.to_dict(),
                      "groups": [{"controller": cfg.controller, **aggregate(results),
                                  "episodes_detail": [m.to_dict() for m in results]}]}
            (args.out / "eval.json").write_text(json.dumps(report, indent=2))
            print(_summary(report))
        else:
            report = run_suite(args.command, cfg, out_dir=args.out)
            print(_summary(report))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
