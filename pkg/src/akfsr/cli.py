"""Command-line front end: ``akfsr {train,adapt,oracle-check,sweep,plot,run}``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from akfsr.errors import ConfigError, InvalidParameterError, NumericError
from akfsr.harness import (KINDS, ExperimentConfig, load_config, plot_series, read_episodes_csv,
                           run_adaptation, run_experiment, run_oracle_check, stability_sweep,
                           summary_dict)

SUBCOMMAND_KIND = {"train": "train", "adapt": "adapt", "oracle-check": "oracle-check",
                   "sweep": "stability-sweep"}
DEFAULT_WIDTHS = (0.5, 1.0, 2.0)


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="YAML or JSON experiment file")
    p.add_argument("--env", choices=("pendulum", "mountain_car", "gridworld"))
    p.add_argument("--episodes", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int, help="base seed; run k uses seed + k")
    p.add_argument("--out", help="output directory")
    p.add_argument("--exploration", choices=("information", "epsilon_greedy", "greedy"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="akfsr", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMAND_KIND:
        p = sub.add_parser(name)
        _add_common(p)
        if name == "sweep":
            p.add_argument("--widths", type=float, nargs="+", help="RBF covariance scales")
    run = sub.add_parser("run", help="run the experiment kind named by --mode or the config")
    _add_common(run)
    run.add_argument("--mode", choices=KINDS)
    run.add_argument("--widths", type=float, nargs="+")
    plot = sub.add_parser("plot", help="redraw SVG charts from an episodes.csv")
    plot.add_argument("csv", help="path to episodes.csv")
    plot.add_argument("--out", help="directory for the SVG files (default: next to the CSV)")
    return parser


def config_from_args(args) -> ExperimentConfig:
    data = {}
    if args.config:
        data = load_config(args.config).to_dict()
    overrides = {"env": args.env, "n_episodes": args.episodes, "n_runs": args.runs,
                 "base_seed": args.seed, "out_dir": args.out}
    if args.env and data and args.env != data.get("env"):
        # feature layout and environment parameters belong to the old environment
        data.pop("features", None)
        data.pop("env_params", None)
    data.update({k: v for k, v in overrides.items() if v is not None})
    kind = getattr(args, "mode", None) or SUBCOMMAND_KIND.get(args.command)
    if kind is not None:
        data["kind"] = kind
    if args.exploration:
        agent = dict(data.get("agent") or {})
        agent["exploration"] = args.exploration
        data["agent"] = agent
    return ExperimentConfig.from_dict(data)


def execute(cfg: ExperimentConfig, widths=None) -> dict:
    out = Path(cfg.out_dir)
    if cfg.kind == "train":
        series, _ = run_experiment(cfg, out)
        return {k: v for k, v in summary_dict(series).items() if k != "config"}
    if cfg.kind == "adapt":
        result = run_adaptation(cfg, out)
        return {k: v for k, v in result.items() if k != "runs"}
    if cfg.kind == "oracle-check":
        return {"mean_sr_mse": run_oracle_check(cfg, out)["mean_sr_mse"]}
    widths = widths or cfg.sweep.get("widths", DEFAULT_WIDTHS)
    results = stability_sweep(cfg, widths, out)
    return {f"{w:g}": float(s.mean_steps[-50:].mean()) for w, s in results.items()}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "plot":
            columns = read_episodes_csv(args.csv)
            out = Path(args.out) if args.out else Path(args.csv).parent
            out.mkdir(parents=True, exist_ok=True)
            for path in plot_series(columns, out):
                print(path)
            return 0
        cfg = config_from_args(args)
        result = execute(cfg, getattr(args, "widths", None))
    except (ConfigError, InvalidParameterError) as exc:
        print(f"akfsr: invalid configuration: {exc}", file=sys.stderr)
        return 2
    except (NumericError, OSError, ValueError, KeyError) as exc:
        print(f"akfsr: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
