"""Command-line entry point: ``powericl {run,sweep,oracle,replay,calibrate}``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import env, runner
from .config import BACKENDS, RunConfig, load_config
from .env import STATE_MODES, ConfigurationError, DomainError
from .pool import ExperiencePool

SWEEP_PARAMS = {"min_rate": float, "num_bs": int}


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="flat YAML config file")
    parser.add_argument("--backend", choices=BACKENDS)
    parser.add_argument("--state-mode", choices=STATE_MODES)
    parser.add_argument("--episodes", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--epsilon", type=float, help="epsilon during exploration")
    parser.add_argument("--tau", type=float)
    parser.add_argument("--k-good", type=int)
    parser.add_argument("--k-bad", type=int)
    parser.add_argument("--min-rate", type=float, help="C_min in bit/s")
    parser.add_argument("--num-bs", type=int)
    parser.add_argument("--independent", action="store_true", default=None,
                        help="one decision per base station")
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("--no-plots", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="powericl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the control loop and write metrics, pool and figures")
    _common(p)

    p = sub.add_parser("sweep", help="converged metrics across C_min or num_bs values")
    _common(p)
    p.add_argument("--param", choices=sorted(SWEEP_PARAMS), default="min_rate")
    p.add_argument("--values", help="comma-separated values (default: from config)")
    p.add_argument("--seeds", type=int, default=10, help="number of seeds, starting at --seed")

    p = sub.add_parser("oracle", help="exhaustive-search reward on the states a run would draw")
    _common(p)

    p = sub.add_parser("replay", help="recompute logged rewards of a finished run")
    p.add_argument("run_dir", type=Path, help="directory holding metrics.csv, pool.jsonl, config.yaml")

    p = sub.add_parser("calibrate", help="recompute the default C_min")
    _common(p)
    p.add_argument("--samples", type=int, default=2000)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    config = load_config(args.config)
    return config.with_overrides(
        backend=args.backend, state_mode=args.state_mode, episodes=args.episodes,
        seed=args.seed, epsilon=args.epsilon, tau=args.tau, k_good=args.k_good,
        k_bad=args.k_bad, min_rate=args.min_rate, num_bs=args.num_bs,
        independent_actions=args.independent,
        out_dir=str(args.out) if args.out else None,
        plots=False if args.no_plots else None,
    )


def cmd_run(config: RunConfig) -> int:
    result = runner.run(config)
    out = runner.write_outputs(result, config, config.out_dir)
    for row in runner.summary_rows(result.records):
        print(f"{row['window']:>11}: reward {row['mean_reward']:.3f}  power {row['mean_power']:.3f} W"
              f"  service quality {row['service_quality']:.3f}")
    print(f"wrote {out}")
    return 0


def cmd_sweep(config: RunConfig, args: argparse.Namespace) -> int:
    cast = SWEEP_PARAMS[args.param]
    if args.values:
        values = [cast(v) for v in args.values.split(",")]
    else:
        values = list(config.sweep_min_rates if args.param == "min_rate" else config.sweep_num_bs)
    seeds = range(config.seed, config.seed + args.seeds)
    rows = runner.sweep(config, args.param, values, seeds)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    for v in values:
        sel = [r for r in rows if r[args.param] == v]
        print(f"{args.param}={v}: reward {np.mean([r['mean_reward'] for r in sel]):.3f}"
              f"  power {np.mean([r['mean_power'] for r in sel]):.3f} W")
    if config.plots:
        from .plots import plot_sweep

        plot_sweep(rows, args.param, out / f"sweep_{args.param}.png")
    print(f"wrote {out / 'sweep.csv'}")
    return 0


def cmd_oracle(config: RunConfig) -> int:
    net = config.network
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rewards = []
    with open(out / "oracle.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "state_seed", "state", "action", "reward"])
        for t in range(1, config.episodes + 1):
            seed_t = runner.episode_seed(config.seed, t)
            state = env.sample_state(net, config.state_mode, seed_t)
            best, reward = runner.evaluate_exhaustive(state, net, config.independent_actions)
            action = ";".join(map(str, best)) if isinstance(best, tuple) else str(best)
            writer.writerow([t, seed_t, repr(state.decision_state()), action, repr(reward)])
            rewards.append(reward)
    print(f"oracle mean reward {np.mean(rewards):.4f} over {len(rewards)} states")
    print(f"wrote {out / 'oracle.csv'}")
    return 0


def cmd_replay(run_dir: Path) -> int:
    config = load_config(run_dir / "config.yaml")
    records = runner.read_metrics(run_dir / "metrics.csv")
    pool = ExperiencePool.load(run_dir / "pool.jsonl")
    report = runner.replay(records, pool, config)
    for line in report.mismatches:
        print(line)
    print(f"replayed {report.checked} episodes: "
          + ("all rewards match" if report.ok else f"{len(report.mismatches)} mismatches"))
    return 0 if report.ok else 1


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "replay":
            return cmd_replay(args.run_dir)
        config = resolve_config(args)
        if args.command == "run":
            return cmd_run(config)
        if args.command == "sweep":
            return cmd_sweep(config, args)
        if args.command == "oracle":
            return cmd_oracle(config)
        value = runner.calibrate_min_rate(config.network, samples=args.samples)
        print(f"min_rate: {value:.6g}")
        return 0
    except (ConfigurationError, DomainError, FileNotFoundError) as exc:
        print(f"powericl: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
