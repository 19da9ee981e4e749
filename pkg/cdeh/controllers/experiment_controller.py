"""
cdeh/controllers/experiment_controller.py
Command-line surface: flags -> ExperimentSpec -> ExperimentService
"""

from __future__ import annotations

import argparse
from pathlib import Path
from typing import List, Optional, Sequence

from pydantic import ValidationError

from cdeh.core.config import ConfigBundle, load_config
from cdeh.schemas.experiment import ExperimentSpec
from cdeh.services.experiment_service import RunSummary, run_experiment
from cdeh.utils.exceptions import ConfigError


def _csv(kind):
    def parse(text: str) -> List:
        try:
            return [kind(item.strip()) for item in text.split(",") if item.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"expected a comma-separated list: {exc}") from exc
    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cdeh",
        description="IRS-assisted RSMA edge-offloading simulator with hierarchical TD3/DQN training",
    )
    parser.add_argument("--config", type=Path, default=None, help="flat KEY=VALUE config file")
    parser.add_argument("--mode", choices=["train", "eval", "sweep"], required=True)
    parser.add_argument("--sweep-axis", choices=["K", "P_MAX", "N", "M"], default=None)
    parser.add_argument("--sweep-values", type=_csv(float), default=[], help="e.g. 4,8,16")
    parser.add_argument("--seeds", type=_csv(int), default=None, help="e.g. 0,1,2 (default: RNG_SEED)")
    parser.add_argument("--out", type=Path, default=Path("runs/latest"))
    parser.add_argument("--checkpoint", type=Path, default=None,
                        help="checkpoint directory or training output directory")
    parser.add_argument("--episodes", type=int, default=None,
                        help="training episodes (train) or evaluation episodes (eval/sweep)")
    parser.add_argument("--policies", type=_csv(str), default=None, help="policy presets, e.g. cdeh,direct")
    parser.add_argument("--log-level", default="INFO")
    return parser


def parse_spec(args: argparse.Namespace) -> ExperimentSpec:
    try:
        return ExperimentSpec(
            mode=args.mode,
            config_path=args.config,
            sweep_axis=args.sweep_axis,
            sweep_values=args.sweep_values,
            out=args.out,
            seeds=args.seeds,
            checkpoint=args.checkpoint,
            episodes=args.episodes,
            policies=args.policies,
        )
    except ValidationError as exc:
        error = exc.errors()[0]
        where = ".".join(str(part) for part in error["loc"])
        raise ConfigError(f"{where + ': ' if where else ''}{error['msg']}") from exc


def run(spec: ExperimentSpec, bundle: Optional[ConfigBundle] = None) -> RunSummary:
    bundle = bundle or load_config(spec.config_path)
    return run_experiment(spec, bundle)


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    return build_parser().parse_args(argv)
