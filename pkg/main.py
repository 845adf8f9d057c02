#!/usr/bin/env python3
"""
Command-line entry point for the LMA toolkit.

Every subcommand runs the stage that produces its measurement (plus the stages it
depends on) and writes CSVs, summaries and plot.gp below --out.
"""

import argparse
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional

from loguru import logger

sys.path.insert(0, str(Path(__file__).parent))

from src.config import STAGE_ORDER, load_config
from src.errors import LMAError
from src.pipeline_system import PipelineSystem

COMMAND_STAGES: Dict[str, List[str]] = {
    "validate": ["validate"],
    "transform": ["transform"],
    "solve": ["solve"],
    "compare-paths": ["solve"],
    "maxprinciple": ["estimates"],
    "degiorgi": ["estimates"],
    "sobolev": ["inequalities"],
    "moser": ["inequalities"],
    "holder": ["regularity"],
    "harnack": ["regularity"],
    "pipeline": STAGE_ORDER,
}

# paired commands share a stage; each keeps only its own measurement
COMMAND_OPERATIONS: Dict[str, Optional[List[str]]] = {
    name: None if name in ("validate", "transform", "pipeline") else [name] for name in COMMAND_STAGES
}


def _common_flags(default) -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=default)
    common.add_argument("--config", help="flat key = value experiment file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--grid", type=int, help="nodes per axis")
    common.add_argument("--seed", type=int, help="seed for random families")
    common.add_argument("--threads", type=int, help="worker threads for instance families")
    common.add_argument("--log-level", dest="log_level", help="loguru level (default LOG_LEVEL or INFO)")
    return common


def build_parser() -> argparse.ArgumentParser:
    # flags go before or after the subcommand
    parser = argparse.ArgumentParser(prog="lma", description="Partial-Legendre LMA toolkit",
                                     parents=[_common_flags(None)])
    commands = parser.add_subparsers(dest="command", required=True)
    for name in COMMAND_STAGES:
        commands.add_parser(name, parents=[_common_flags(argparse.SUPPRESS)], help=f"run the {name} measurement")
    return parser


def configure_logging(level: str, out: Optional[str] = None):
    logger.remove()
    logger.add(sys.stderr, level=level)
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        logger.add(str(Path(out) / "run.log"), level=level)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"out": args.out, "grid": args.grid, "seed": args.seed, "threads": args.threads,
                 "log_level": args.log_level}
    configure_logging(args.log_level or os.getenv("LOG_LEVEL", "INFO"))

    try:
        cfg = load_config(args.config, overrides)
    except LMAError as e:
        logger.error(f"Configuration rejected: {e}")
        return 2

    configure_logging(cfg.log_level, cfg.out)
    stages = COMMAND_STAGES[args.command]
    if args.command == "pipeline":
        stages = cfg.stages
    only = COMMAND_OPERATIONS[args.command]
    logger.info(f"Command {args.command}: stages {stages}")

    bundle = PipelineSystem(cfg).run(stages, only=only)
    return bundle["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
