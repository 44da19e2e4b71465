#!/usr/bin/env python3
"""Command line entry point: train, eval, oracle, heu, bench and report."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

from .config import ENGINES, RunConfig, load_config
from .errors import ConfigError, SlicePlacementError
from .fixtures import dump_mapping, load_instance
from .harness import (
    TIMING_FILE,
    bench_exec_time,
    emit_report,
    run_eval,
    run_training,
    write_timing_csv,
)
from .heuristic import heu_place
from .objective import ObjectiveWeights, objective_value
from .oracle import OracleLimits, exact_place

_LOGGER = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slice-placement",
        description="Network slice placement simulator with heuristic, DRL and HA-DRL engines.",
    )
    parser.add_argument("--config", type=Path, help="JSON config file (default: config.json)")
    parser.add_argument("--seed", type=int, help="Seed for the workload and the agent")
    parser.add_argument("--engine", choices=ENGINES, help="Placement engine")
    parser.add_argument("--beta", type=float, help="Heuristic shaping strength for hadrl")
    parser.add_argument("--output-dir", type=Path, help="Directory for CSVs, checkpoints, charts")
    parser.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")

    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("train", help="Run training phases and write metrics.csv")

    eval_parser = commands.add_parser("eval", help="Evaluate a frozen policy greedily")
    eval_parser.add_argument("--checkpoint", type=Path, help="Agent checkpoint (.npz)")

    for name in ("oracle", "heu"):
        instance_parser = commands.add_parser(name, help=f"Place one fixture instance with {name}")
        instance_parser.add_argument("--instance", type=Path, required=True)
        if name == "oracle":
            instance_parser.add_argument("--max-nodes", type=int, default=1_000_000)
            instance_parser.add_argument("--time-limit", type=float)

    bench_parser = commands.add_parser("bench", help="Benchmark placement execution time")
    bench_parser.add_argument("--engines", nargs="+", default=["heu", "drl", "hadrl"])
    bench_parser.add_argument("--vnfs", nargs="+", type=int, default=[5, 10, 20])
    bench_parser.add_argument("--nodes", nargs="+", type=int, default=[12, 50, 126])
    bench_parser.add_argument("--repetitions", type=int, default=20)

    report_parser = commands.add_parser("report", help="Render charts and summary from CSVs")
    report_parser.add_argument(
        "inputs", nargs="*", type=Path, help="Metrics/timing CSVs (default: *.csv under output dir)"
    )
    return parser


def apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    run = config.run
    if args.engine is not None:
        run = replace(run, engine=args.engine)
    if args.output_dir is not None:
        run = replace(run, output_dir=str(args.output_dir))
    if args.log_level is not None:
        run = replace(run, log_level=args.log_level)
    if getattr(args, "checkpoint", None) is not None:
        run = replace(run, checkpoint=str(args.checkpoint))
    workload, agent = config.workload, config.agent
    if args.seed is not None:
        workload = replace(workload, seed=args.seed)
        agent = replace(agent, seed=args.seed)
    if args.beta is not None:
        agent = replace(agent, beta=args.beta)
    config = replace(config, run=run, workload=workload, agent=agent)
    config.validate()
    return config


def _place_instance(args: argparse.Namespace, config: RunConfig) -> None:
    if not args.instance.exists():
        raise ConfigError(f"Instance file not found: {args.instance}")
    psn, nspr = load_instance(args.instance.read_text(encoding="utf-8"))
    weights = ObjectiveWeights.from_config(config.objective, nspr)
    if args.command == "oracle":
        result = exact_place(psn, nspr, weights, OracleLimits(args.max_nodes, args.time_limit))
        mapping = None if result.best is None else result.best[0]
        print(f"certified {str(result.certified).lower()}")
        print(f"nodes_explored {result.nodes_explored}")
    else:
        mapping = heu_place(psn, nspr, config.heuristic.c2_norm)

    if mapping is None:
        print("status rejected")
        return
    print("status accepted")
    print(f"objective {objective_value(psn, nspr, mapping, weights)!r}")
    sys.stdout.write(dump_mapping(mapping))


def run_command(args: argparse.Namespace, config: RunConfig) -> None:
    output_dir = Path(config.run.output_dir)
    if args.command == "train":
        run_training(config, output_dir)
    elif args.command == "eval":
        metrics = run_eval(config.run.engine, config, output_dir=output_dir)
        print(
            f"{metrics.engine} acceptance_ratio {metrics.acceptance_ratio:.6f} "
            f"({metrics.accepted}/{metrics.arrivals}){' vacuous' if metrics.vacuous else ''}"
        )
    elif args.command in ("oracle", "heu"):
        _place_instance(args, config)
    elif args.command == "bench":
        rows = bench_exec_time(args.engines, args.vnfs, args.nodes, args.repetitions, config)
        write_timing_csv(rows, output_dir / TIMING_FILE)
    elif args.command == "report":
        inputs: List[Path] = args.inputs or sorted(output_dir.glob("*.csv"))
        emit_report(inputs, output_dir)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = apply_overrides(load_config(args.config), args)
    except SlicePlacementError as err:
        logging.basicConfig(level=logging.INFO)
        _LOGGER.error("%s", err)
        return err.exit_code

    log_level_name = str(config.run.log_level).strip().upper()
    logging.basicConfig(level=getattr(logging, log_level_name, logging.INFO))
    _LOGGER.debug("Running %s with engine=%s", args.command, config.run.engine)

    try:
        run_command(args, config)
    except SlicePlacementError as err:
        _LOGGER.error("%s failed: %s", args.command, err)
        return err.exit_code
    except Exception:  # noqa: BLE001
        _LOGGER.exception("Unexpected error in %s", args.command)
        return 1
    return 0


def cli() -> None:
    sys.exit(main())


if __name__ == "__main__":
    cli()
