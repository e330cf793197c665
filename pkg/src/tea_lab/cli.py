"""``tea-lab`` command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 runtime or divergence error,
3 I/O error. ``TEA_LAB_LOG`` selects the log level (error, info, debug).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

from .components import ArchitectureError
from .datagen import GENERATORS, DataSpecError, GeneratorSpec
from .runner import (
    ConfigError, ExperimentConfig, RunError, SWEEP_AXES, cmd_generate, cmd_report, cmd_stability,
    cmd_sweep, cmd_train, experiment_generator, load_config,
)
from .stability import StabilityError
from .trainer import DivergenceError, PlanError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO = 0, 1, 2, 3
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}

log = logging.getLogger("tea_lab")


def _configure_logging() -> None:
    name = os.environ.get("TEA_LAB_LOG", "error").lower()
    if name not in LOG_LEVELS:
        raise ConfigError(f"TEA_LAB_LOG must be one of {sorted(LOG_LEVELS)}, got {name!r}")
    logging.basicConfig(level=LOG_LEVELS[name], format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _experiment(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON)")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--seed", type=int, help="override the global seed")
    common.add_argument("--jobs", type=int, default=None, help="parallel training processes (default: CPU count)")
    common.add_argument("--force", action="store_true", help="overwrite existing outputs")

    parser = argparse.ArgumentParser(prog="tea-lab", description="Target-embedding autoencoder experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", parents=[common], help="write a synthetic dataset (CSV + JSON sidecar)")
    gen.add_argument("--generator", choices=GENERATORS, help="use this generator's defaults instead of the config")

    sub.add_parser("train", parents=[common], help="train every variant for every run")

    sweep = sub.add_parser("sweep", parents=[common], help="sweep nu, lambda or the training-set size")
    sweep.add_argument("--axis", choices=SWEEP_AXES, help="sweep axis (default: from config)")

    sub.add_parser("stability", parents=[common], help="measure instability of the shared forward model")

    report = sub.add_parser("report", help="summary tables from a results directory")
    report.add_argument("results", help="directory holding results.csv")
    report.add_argument("--reference", help="variant the significance tests compare against")
    report.add_argument("--force", action="store_true", help="overwrite existing report files")
    return parser


def _generator_spec(args) -> GeneratorSpec:
    if args.generator:
        factory = {
            "latent-factor-sequence": GeneratorSpec,
            "adversarial-blocks": GeneratorSpec.adversarial,
            "static-multilabel": GeneratorSpec.multilabel,
        }[args.generator]
        return factory(seed=args.seed or 0)
    return experiment_generator(_experiment(args))


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _configure_logging()
        if args.command == "generate":
            paths = cmd_generate(_generator_spec(args), args.out, force=args.force)
        elif args.command == "train":
            paths = [cmd_train(_experiment(args), args.out, jobs=args.jobs, force=args.force)]
        elif args.command == "sweep":
            paths = [cmd_sweep(_experiment(args), args.out, axis=args.axis, jobs=args.jobs, force=args.force)]
        elif args.command == "stability":
            path = cmd_stability(_experiment(args), args.out, force=args.force)
            report = json.loads(path.read_text())
            print(f"slope {report['slope']:.3f} +- {report['slope_se']:.3f}; within bound: {report['within_bound']}")
            paths = [path]
        else:
            paths = cmd_report(args.results, reference=args.reference, force=args.force)
            print(paths[0].read_text(), end="")
    except (ConfigError, PlanError, ArchitectureError, DataSpecError, StabilityError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, FileExistsError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (RunError, DivergenceError, ArithmeticError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for p in paths:
        log.info("wrote %s", p)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
