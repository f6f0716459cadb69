import argparse
import json
import logging
import os
import sys
from pathlib import Path

from src.controller import Command, ConfigError, Controller, RunConfig
from src.input_reader import DatasetError, read_config_file
from src.mil_utils import THREADS_ENV_VAR

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME_ERROR = 1
EXIT_VALIDATION_ERROR = 2


class _ArgumentParser(argparse.ArgumentParser):
    """Raises usage errors as ConfigError, so they are reported like any other invalid setting"""

    def error(self, message: str):
        raise ConfigError(message)


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="JSON file of run settings, overridden by flags")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help=f"Worker threads (default: ${THREADS_ENV_VAR} or 1)")
    common.add_argument("--quiet", action="store_true", help="Only log warnings and errors")
    return common


def _add_learning_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--psi", default=argparse.SUPPRESS, help="Bag function: max, avg or pnorm")
    parser.add_argument("--p", type=float, default=argparse.SUPPRESS, help="Exponent of the pnorm bag function")
    parser.add_argument("--oracle-kind", dest="oracle_kind", default=argparse.SUPPRESS,
                        help="agnostic or one_sided")
    parser.add_argument("--mode", default=argparse.SUPPRESS, help="per_instance or per_bag instance weighting")


def build_parser() -> argparse.ArgumentParser:
    """Command-line parser. Setting flags default to SUPPRESS so that only explicit flags override the config file."""
    common = _common_parser()
    parser = _ArgumentParser(prog="python -m src.main",
                              description="Multiple-instance boosting and complexity measurements")
    subparsers = parser.add_subparsers(dest="command", required=True)

    synth = subparsers.add_parser(Command.SYNTH.value, parents=[common], help="Generate a synthetic dataset")
    synth.add_argument("--regime", default=argparse.SUPPRESS)
    synth.add_argument("--dimension", type=int, default=argparse.SUPPRESS)
    synth.add_argument("--max-bag-size", dest="max_bag_size", type=int, default=argparse.SUPPRESS)
    synth.add_argument("--num-bags", dest="num_bags", type=int, default=argparse.SUPPRESS)
    synth.add_argument("--positive-rate", dest="positive_rate", type=float, default=argparse.SUPPRESS)
    synth.add_argument("--noise", type=float, default=argparse.SUPPRESS)
    synth.add_argument("--bag-sizes", dest="bag_sizes", default=argparse.SUPPRESS, help="fixed or variable")
    synth.add_argument("--target", type=json.loads, default=argparse.SUPPRESS,
                       help="Target instance hypothesis as JSON")
    synth.add_argument("--format", default=argparse.SUPPRESS, help="jsonl or csv")
    synth.add_argument("--output", default=argparse.SUPPRESS, help="Dataset file, '-' for stdout")

    train = subparsers.add_parser(Command.TRAIN.value, parents=[common], help="Boost MILearn on a dataset")
    train.add_argument("--dataset", default=argparse.SUPPRESS)
    train.add_argument("--format", default=argparse.SUPPRESS)
    _add_learning_flags(train)
    train.add_argument("--booster", default=argparse.SUPPRESS, help="adaboost or adaboost_star")
    train.add_argument("--rounds", type=int, default=argparse.SUPPRESS)
    train.add_argument("--nu", type=float, default=argparse.SUPPRESS)
    train.add_argument("--model", default=argparse.SUPPRESS, help="Model JSON output")
    train.add_argument("--trace", default=argparse.SUPPRESS, help="Trace CSV output")
    train.add_argument("--plots", default=argparse.SUPPRESS, help="Directory of PNG plots")
    train.add_argument("--monitor-edge", dest="monitor_edge", action="store_true", default=argparse.SUPPRESS)

    for command, description in ((Command.EVAL, "Evaluate a model on a dataset"),
                                 (Command.PREDICT, "Predict the labels of a dataset")):
        sub = subparsers.add_parser(command.value, parents=[common], help=description)
        sub.add_argument("--model", default=argparse.SUPPRESS)
        sub.add_argument("--dataset", default=argparse.SUPPRESS)
        sub.add_argument("--format", default=argparse.SUPPRESS)
        sub.add_argument("--output", default=argparse.SUPPRESS, help="Output file, '-' for stdout")

    complexity = subparsers.add_parser(Command.COMPLEXITY.value, parents=[common],
                                       help="Measure VC, covering and fat-shattering dimensions")
    complexity.add_argument("--classes", nargs="+", default=argparse.SUPPRESS, help="threshold and/or interval")
    complexity.add_argument("--rs", nargs="+", type=int, default=argparse.SUPPRESS)
    complexity.add_argument("--grid-size", dest="grid_size", type=int, default=argparse.SUPPRESS)
    complexity.add_argument("--random-points", dest="random_points", type=int, default=argparse.SUPPRESS)
    complexity.add_argument("--pool-bags", dest="pool_bags", type=int, default=argparse.SUPPRESS)
    complexity.add_argument("--cap", type=int, default=argparse.SUPPRESS)
    complexity.add_argument("--fat-cap", dest="fat_cap", type=int, default=argparse.SUPPRESS)
    complexity.add_argument("--gamma", type=float, default=argparse.SUPPRESS)
    complexity.add_argument("--epsilon", type=float, default=argparse.SUPPRESS)
    complexity.add_argument("--psi", default=argparse.SUPPRESS)
    complexity.add_argument("--p", type=float, default=argparse.SUPPRESS)
    complexity.add_argument("--output", default=argparse.SUPPRESS, help="Results CSV, '-' for stdout")
    complexity.add_argument("--plots", default=argparse.SUPPRESS, help="Directory of PNG growth plots")
    return parser


def _threads_from_env() -> dict:
    value = os.environ.get(THREADS_ENV_VAR)
    if value is None or value.strip() == "":
        return {}
    try:
        return {"threads": int(value)}
    except ValueError:
        raise ConfigError(f"{THREADS_ENV_VAR} must be an integer, got '{value}'")


def parse_config(args: argparse.Namespace) -> RunConfig:
    """
    Merges the run settings: RunConfig defaults, then the thread count from the environment, then the config file,
    then explicit flags
    """
    values = _threads_from_env()
    if args.config is not None:
        try:
            values.update(read_config_file(Path(args.config)))
        except ValueError as e:
            raise ConfigError(str(e))
    flags = {key: value for key, value in vars(args).items() if key not in ("command", "config", "quiet")}
    values.update(flags)
    return RunConfig.from_mapping(values)


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as e:
        _report(e)
        return EXIT_VALIDATION_ERROR
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        config = parse_config(args)
        Controller(config).run(Command(args.command))
    except (ConfigError, DatasetError, FileNotFoundError) as e:
        _report(e)
        return EXIT_VALIDATION_ERROR
    except Exception as e:
        logger.debug("Run failed", exc_info=True)
        _report(e)
        return EXIT_RUNTIME_ERROR
    return EXIT_OK


def _report(error: Exception):
    message = " ".join(str(error).split())
    print(f"error: {type(error).__name__}: {message}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
