"""Command-line entry point: python -m src.main <command> [flags]"""

import argparse
import json
import logging
import sys
from typing import Any, Dict, List, Optional

import yaml

from . import __version__
from .config import settings
from .controllers.experiment_controller import bench_scaling, compare_optimizers, summarize_top_k, sweep
from .controllers.training_controller import train
from .dependencies import build_layout, get_environment
from .exceptions import AsyncRLError, ConfigurationError
from .schemas import Algo, Backend, EnvId, OptimizerKind, RunConfig
from .services.evaluation_service import evaluate
from .utils.logging_setup import configure_logging

logger = logging.getLogger(__name__)

# flag dest -> path inside RunConfig
FLAG_PATHS = {
    "algo": ("algo",),
    "env": ("env", "id"),
    "threads": ("threads",),
    "backend": ("backend",),
    "total_frames": ("total_frames",),
    "t_max": ("hp", "t_max"),
    "gamma": ("hp", "gamma"),
    "beta": ("hp", "beta"),
    "target_interval": ("hp", "target_interval"),
    "clip_norm": ("hp", "clip_norm"),
    "optimizer": ("optimizer", "kind"),
    "lr": ("optimizer", "lr"),
    "seed": ("seed",),
    "eval_interval": ("eval_interval",),
    "eval_episodes": ("eval_episodes",),
    "out": ("out_dir",),
    "deterministic": ("deterministic",),
}


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=str, default=None, help="YAML run config; overrides flags")
    parser.add_argument("--algo", type=str, choices=[a.value for a in Algo])
    parser.add_argument("--env", type=str, choices=[e.value for e in EnvId])
    parser.add_argument("--threads", type=int)
    parser.add_argument("--backend", type=str, choices=[b.value for b in Backend],
                        help="Run actor-learners as processes (default) or threads")
    parser.add_argument("--total-frames", type=int)
    parser.add_argument("--t-max", type=int)
    parser.add_argument("--gamma", type=float)
    parser.add_argument("--beta", type=float)
    parser.add_argument("--optimizer", type=str, choices=[k.value for k in OptimizerKind])
    parser.add_argument("--lr", type=float)
    parser.add_argument("--target-interval", type=int)
    parser.add_argument("--clip-norm", type=float)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--eval-interval", type=int)
    parser.add_argument("--eval-episodes", type=int)
    parser.add_argument("--out", type=str)
    parser.add_argument("--deterministic", action="store_true", default=None,
                        help="Single thread, inline evaluation, logical clock")


def _add_sweep_flags(parser: argparse.ArgumentParser, samples: int) -> None:
    parser.add_argument("--samples", type=int, default=samples)
    parser.add_argument("--lr-low", type=float, default=1e-4)
    parser.add_argument("--lr-high", type=float, default=1e-2)
    parser.add_argument("--processes", type=int, default=1, help="Parallel worker processes")


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(prog="asyncrl", description="Asynchronous actor-learner reinforcement learning")
    parser.add_argument("--log-level", type=str, default=settings.LOG_LEVEL)
    parser.add_argument("--log-format", type=str, default=settings.log_format, choices=["json", "console"])
    commands = parser.add_subparsers(dest="command", required=True)

    train_parser = commands.add_parser("train", help="One training run")
    _add_run_flags(train_parser)

    sweep_parser = commands.add_parser("sweep", help="Log-uniform learning-rate sweep")
    _add_run_flags(sweep_parser)
    _add_sweep_flags(sweep_parser, samples=50)
    sweep_parser.add_argument("--top-k", type=int, default=5)

    bench_parser = commands.add_parser("bench-scaling", help="Time-to-reference speedup table")
    _add_run_flags(bench_parser)
    bench_parser.add_argument("--thread-counts", type=str, default="1,2,4,8")
    bench_parser.add_argument("--reference-score", type=float, required=True)
    bench_parser.add_argument("--seeds", type=int, default=3)

    eval_parser = commands.add_parser("eval", help="Greedy evaluation of a checkpoint")
    _add_run_flags(eval_parser)
    eval_parser.add_argument("--checkpoint", type=str, required=True)
    eval_parser.add_argument("--episodes", type=int, default=None)

    compare_parser = commands.add_parser("compare-optimizers", help="Same sweep under each optimizer")
    _add_run_flags(compare_parser)
    _add_sweep_flags(compare_parser, samples=20)
    compare_parser.add_argument("--success-score", type=float, default=1.0)
    compare_parser.add_argument(
        "--optimizers", type=str, default=",".join(k.value for k in OptimizerKind)
    )

    return parser.parse_args(argv)


def _deep_merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then command-line flags, then the config file"""
    data = RunConfig().model_dump(mode="json")
    for dest, path in FLAG_PATHS.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        node = data
        for key in path[:-1]:
            node = node[key]
        node[path[-1]] = value

    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as f:
                file_data = yaml.safe_load(f) or {}
        except OSError as e:
            raise ConfigurationError(f"Cannot read config {args.config}: {e}") from e
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Config {args.config} is not valid YAML: {e}") from e
        if not isinstance(file_data, dict):
            raise ConfigurationError(f"Config {args.config} must be a mapping")
        data = _deep_merge(data, file_data)

    return RunConfig.from_dict(data)


def _emit(payload: Any) -> None:
    sys.stdout.write(json.dumps(payload, indent=2, default=str) + "\n")


def run_command(args: argparse.Namespace) -> None:
    config = build_run_config(args)

    if args.command == "train":
        result = train(config)
        _emit(result.final_record.model_dump(mode="json"))

    elif args.command == "sweep":
        rows = sweep(config, args.samples, args.lr_low, args.lr_high, processes=args.processes)
        _emit({
            "rows": [r.model_dump(mode="json") for r in rows],
            "top_k": summarize_top_k(rows, min(args.top_k, len(rows))).model_dump(mode="json"),
        })

    elif args.command == "bench-scaling":
        try:
            counts = [int(n) for n in args.thread_counts.split(",") if n.strip()]
        except ValueError as e:
            raise ConfigurationError(f"--thread-counts must be comma-separated integers: {e}") from e
        rows = bench_scaling(config, counts, args.reference_score, seeds=args.seeds)
        _emit([r.model_dump(mode="json") for r in rows])

    elif args.command == "eval":
        env = get_environment(config.env)
        layout = build_layout(config, env)
        result = evaluate(args.checkpoint, layout, env, args.episodes or config.eval_episodes, config.seed)
        _emit(result.model_dump(mode="json"))

    elif args.command == "compare-optimizers":
        try:
            kinds = [OptimizerKind(k.strip()) for k in args.optimizers.split(",") if k.strip()]
        except ValueError as e:
            raise ConfigurationError(f"Unknown optimizer in --optimizers: {e}") from e
        comparison = compare_optimizers(
            config, kinds, args.samples, args.lr_low, args.lr_high,
            success_score=args.success_score, processes=args.processes,
        )
        _emit({"success_score": comparison.success_score, "successes": comparison.successes})


def main(argv: Optional[List[str]] = None) -> int:
    """Exit codes: 0 success, 2 configuration error, 3 runtime fault, 4 checkpoint error"""
    args = parse_args(argv)
    configure_logging(args.log_level, args.log_format)
    logger.info(f"{settings.APP_NAME} {__version__}: {args.command}")
    try:
        run_command(args)
    except AsyncRLError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
