from __future__ import annotations

import json
import logging
import sys
import warnings
from dataclasses import dataclass, field, fields
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd

from src.bag import BagFunction, MILDataset
from src.boost import BoosterKind, Ensemble, BoostTrace, adaboost, adaboost_star, plot_trace
from src.complexity import ClassKind, growth_table, instance_grid, plot_growth, run_lab
from src.hypothesis import InstanceHypothesis, Stump, hypothesis_from_dict
from src.input_reader import DatasetFormat, format_dataset, infer_format, load_dataset
from src.milearn import LiftMode, MILearnConfig, MILearner, OracleKind
from src.synthetic import BagSizes, Regime, SyntheticSpec, generate_synthetic

logger = logging.getLogger(__name__)

STDOUT_PATH = "-"
PREDICTION_COLUMNS = ["bag_id", "score", "label"]
TRACE_PLOT_NAME = "trace.png"
GROWTH_PLOT_ROOT = "growth"


class ConfigError(ValueError):
    """Raised when a run configuration is invalid, before any work starts"""


class Command(Enum):
    SYNTH = "synth"
    TRAIN = "train"
    EVAL = "eval"
    PREDICT = "predict"
    COMPLEXITY = "complexity"


def _matches_type(value, type_name: str) -> bool:
    """Checks a setting against the annotation of its RunConfig field (a string such as "float", "str | None")"""
    if type_name.startswith("list["):
        return isinstance(value, list) and all(_matches_type(item, type_name[5:-1]) for item in value)
    if type_name == "None":
        return value is None
    if type_name == "bool":
        return isinstance(value, bool)
    if type_name == "int":
        return isinstance(value, int) and not isinstance(value, bool)
    if type_name == "float":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    return isinstance(value, {"str": str, "dict": dict}[type_name])


def _parse_enum(enum_type: type[Enum], value, name: str):
    try:
        return enum_type(value)
    except ValueError:
        allowed = ", ".join(member.value for member in enum_type)
        raise ConfigError(f"Unknown {name} '{value}', expected one of: {allowed}")


@dataclass
class RunConfig:
    """Settings of every subcommand. Paths are kept as strings, '-' standing for the standard output."""
    seed: int = 0
    threads: int = 1

    # Dataset files
    dataset: str | None = None
    format: str | None = None
    output: str | None = None

    # synth
    regime: str = Regime.HOMOGENEOUS_INDEPENDENT.value
    dimension: int = 2
    max_bag_size: int = 4
    num_bags: int = 100
    positive_rate: float = 0.5
    noise: float = 0.
    bag_sizes: str = BagSizes.FIXED.value
    target: dict | None = None

    # train, eval, predict
    psi: str = "max"
    p: float = 2.
    oracle_kind: str = OracleKind.AGNOSTIC.value
    mode: str = LiftMode.PER_INSTANCE.value
    booster: str = BoosterKind.ADABOOST.value
    rounds: int = 100
    nu: float = 0.1
    model: str | None = None
    trace: str | None = None
    plots: str | None = None
    monitor_edge: bool = False

    # complexity
    classes: list[str] = field(default_factory=lambda: [kind.value for kind in ClassKind])
    rs: list[int] = field(default_factory=lambda: [1, 2, 4, 8])
    grid_size: int = 8
    random_points: int = 0
    pool_bags: int = 6
    cap: int = 8
    fat_cap: int = 3
    gamma: float = 0.5
    epsilon: float = 0.5

    @classmethod
    def field_names(cls) -> set[str]:
        return {f.name for f in fields(cls)}

    @classmethod
    def from_mapping(cls, values: dict) -> RunConfig:
        """
        :raise:
            ConfigError: If a key is not a RunConfig field
        """
        unknown = sorted(set(values) - cls.field_names())
        if unknown:
            raise ConfigError(f"Unknown config keys: {', '.join(unknown)}")
        return cls(**values)

    # ------- Parsed settings ------- #

    @property
    def bag_function(self) -> BagFunction:
        if self.psi == "pnorm":
            return BagFunction.pnorm(self.p)
        return BagFunction.from_json(self.psi)

    @property
    def dataset_format(self) -> DatasetFormat | None:
        return None if self.format is None else DatasetFormat(self.format)

    @property
    def target_hypothesis(self) -> InstanceHypothesis:
        return Stump(0, 1.0, 1) if self.target is None else hypothesis_from_dict(self.target)

    @property
    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec(dimension=self.dimension, max_bag_size=self.max_bag_size, num_bags=self.num_bags,
                             positive_rate=self.positive_rate, target=self.target_hypothesis, noise=self.noise,
                             seed=self.seed, bag_sizes=BagSizes(self.bag_sizes))

    @property
    def learner_config(self) -> MILearnConfig:
        return MILearnConfig(psi=self.bag_function, oracle_kind=OracleKind(self.oracle_kind),
                             mode=LiftMode(self.mode), threads=self.threads)

    # ------- Validation ------- #

    def validate(self, command: Command):
        """
        Checks the type of every setting, then every setting used by the command: enum values, ranges, and that
        input files exist.

        :raise:
            ConfigError: On the first invalid setting
        """
        for config_field in fields(self):
            value = getattr(self, config_field.name)
            if not any(_matches_type(value, type_name) for type_name in config_field.type.split(" | ")):
                raise ConfigError(f"{config_field.name} must be of type {config_field.type}, got {value!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")
        if not isinstance(self.threads, int) or self.threads < 1:
            raise ConfigError(f"threads must be a positive integer, got {self.threads!r}")
        if self.format is not None:
            _parse_enum(DatasetFormat, self.format, "format")

        if command is Command.SYNTH:
            self._validate_synth()
        elif command is Command.TRAIN:
            self._validate_learning()
            self._require_file("dataset", self.dataset)
            if self.model is None:
                raise ConfigError("train needs a model output path (--model)")
            _parse_enum(BoosterKind, self.booster, "booster")
            if not isinstance(self.rounds, int) or self.rounds < 1:
                raise ConfigError(f"rounds must be a positive integer, got {self.rounds!r}")
            if BoosterKind(self.booster) is BoosterKind.ADABOOST_STAR and not 0 < self.nu < 1:
                raise ConfigError(f"nu must be in (0, 1), got {self.nu!r}")
        elif command in (Command.EVAL, Command.PREDICT):
            self._require_file("model", self.model)
            self._require_file("dataset", self.dataset)
        else:
            self._validate_complexity()

        if self.dataset is not None and self.format is None and command is not Command.SYNTH:
            try:
                infer_format(Path(self.dataset))
            except ValueError as e:
                raise ConfigError(str(e))

    @staticmethod
    def _require_file(name: str, path: str | None):
        if path is None:
            raise ConfigError(f"Missing {name} path (--{name})")
        if not Path(path).exists():
            raise ConfigError(f"File not found: {path}")

    def _validate_synth(self):
        _parse_enum(Regime, self.regime, "regime")
        _parse_enum(BagSizes, self.bag_sizes, "bag_sizes")
        try:
            self.synthetic_spec.validate()
        except ValueError as e:
            raise ConfigError(str(e))
        if self.output not in (None, STDOUT_PATH) and self.format is None:
            try:
                infer_format(Path(self.output))
            except ValueError as e:
                raise ConfigError(str(e))

    def _validate_learning(self):
        _parse_enum(OracleKind, self.oracle_kind, "oracle_kind")
        _parse_enum(LiftMode, self.mode, "mode")
        try:
            self.bag_function
        except ValueError as e:
            raise ConfigError(str(e))

    def _validate_complexity(self):
        self._validate_learning()
        for kind in self.classes:
            _parse_enum(ClassKind, kind, "class")
        if len(self.rs) == 0 or any(not isinstance(r, int) or r < 1 for r in self.rs):
            raise ConfigError(f"rs must be a non-empty list of positive integers, got {self.rs!r}")
        if self.grid_size < 2 or self.random_points < 0 or self.pool_bags < 1:
            raise ConfigError(f"Invalid pool settings: grid_size={self.grid_size}, "
                              f"random_points={self.random_points}, pool_bags={self.pool_bags}")
        if not 0 <= self.cap <= 12:
            raise ConfigError(f"cap must be in [0, 12], got {self.cap}")
        if not 0 <= self.fat_cap <= 6:
            raise ConfigError(f"fat_cap must be in [0, 6], got {self.fat_cap}")
        if self.gamma <= 0 or self.epsilon <= 0:
            raise ConfigError(f"gamma and epsilon must be positive, got {self.gamma}, {self.epsilon}")


def _write_text(text: str, output: str | None):
    """Writes a command output to a file, or to the standard output for None or '-'"""
    if output in (None, STDOUT_PATH):
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(output, "w", encoding="utf-8", newline="\n") as file:
        file.write(text)
    logger.info("Wrote %s", output)


class Controller:
    """
    Runs one subcommand from a validated RunConfig: reads the input files, calls the learning or measurement
    routines and exports their results.

    Every output is a deterministic function of the input files and the configuration (seed and threads
    included), so re-runs are byte-identical.
    """

    def __init__(self, config: RunConfig):
        self._config = config

    def __repr__(self):
        return f"Controller({self._config})"

    @property
    def config(self) -> RunConfig:
        return self._config

    def run(self, command: Command | str):
        """Validates the configuration for the command, then runs it"""
        command = _parse_enum(Command, command, "command") if isinstance(command, str) else command
        self._config.validate(command)
        {
            Command.SYNTH: self.synth,
            Command.TRAIN: self.train,
            Command.EVAL: self.evaluate,
            Command.PREDICT: self.predict,
            Command.COMPLEXITY: self.complexity,
        }[command]()

    # ------- Commands ------- #

    def synth(self) -> MILDataset:
        config = self._config
        dataset = generate_synthetic(Regime(config.regime), config.synthetic_spec)
        dataset_format = config.dataset_format
        if dataset_format is None:
            dataset_format = (DatasetFormat.JSONL if config.output in (None, STDOUT_PATH)
                              else infer_format(Path(config.output)))
        _write_text(format_dataset(dataset, dataset_format), config.output)
        return dataset

    def train(self) -> tuple[Ensemble, BoostTrace]:
        """Boosts MILearn on the dataset, then writes the model JSON, and the trace CSV and plot if requested"""
        config = self._config
        dataset = self._load_dataset()
        weak = MILearner(config.learner_config, monitor=config.monitor_edge)

        if BoosterKind(config.booster) is BoosterKind.ADABOOST:
            ensemble, trace = adaboost(dataset.bags, weak, config.rounds)
        else:
            ensemble, trace = adaboost_star(dataset.bags, weak, config.rounds, config.nu)
            if len(ensemble) > 0:
                logger.info("Hindsight optimal margin of the selected hypotheses: %.6f",
                            ensemble.hindsight_margin(dataset.bags))

        if len(ensemble) == 0:
            warnings.warn("Boosting stopped before the first round, the saved model is untrained", RuntimeWarning)
        if config.monitor_edge and weak.violations:
            logger.info("%d weak learner calls fell below gamma*/(2R)", len(weak.violations))

        ensemble.save(Path(config.model))
        logger.info("Saved model with %d terms to %s", len(ensemble), config.model)
        if config.trace is not None:
            _write_text(trace.to_dataframe().to_csv(index=False, lineterminator="\n"), config.trace)
        if config.plots is not None and len(trace) > 0:
            plot_dir = Path(config.plots)
            plot_dir.mkdir(parents=True, exist_ok=True)
            plot_trace(trace, plot_dir / TRACE_PLOT_NAME)
        return ensemble, trace

    def evaluate(self) -> dict:
        """
        Writes the metrics JSON of the model on the dataset: bag_error, per_class_error {"+1", "-1"} (null for an
        absent class), min_margin, mean_margin (normalised margins) and rounds
        """
        ensemble, dataset = self._load_model_and_dataset()
        labels = dataset.labels
        predictions = ensemble.predict_many(dataset.bags)
        margins = ensemble.margins(dataset.bags)
        errors = predictions != labels

        per_class_error = {}
        for name, value in (("+1", 1), ("-1", -1)):
            in_class = labels == value
            per_class_error[name] = float(np.mean(errors[in_class])) if in_class.any() else None

        metrics = {
            "bag_error": float(np.mean(errors)),
            "per_class_error": per_class_error,
            "min_margin": float(margins.min()),
            "mean_margin": float(margins.mean()),
            "rounds": len(ensemble),
        }
        _write_text(json.dumps(metrics, indent=2) + "\n", self._config.output)
        return metrics

    def predict(self) -> pd.DataFrame:
        """Writes the predictions CSV: bag_id, score (unnormalised vote) and label"""
        ensemble, dataset = self._load_model_and_dataset()
        scores = ensemble.scores(dataset.bags)
        df = pd.DataFrame({"bag_id": [bag.bag_id for bag in dataset.bags], "score": scores,
                           "label": np.where(scores >= 0, 1, -1)}, columns=PREDICTION_COLUMNS)
        _write_text(df.to_csv(index=False, lineterminator="\n"), self._config.output)
        return df

    def complexity(self) -> pd.DataFrame:
        """Writes the complexity results CSV and, if requested, one d_r growth plot per class"""
        config = self._config
        kinds = [ClassKind(kind) for kind in config.classes]
        grid = instance_grid(config.grid_size, config.random_points, config.seed)
        psi = config.bag_function

        results = run_lab(kinds, config.rs, grid, config.pool_bags, config.seed, config.cap, config.gamma,
                          config.epsilon, config.fat_cap, psi=psi, threads=config.threads)
        _write_text(results.to_csv(index=False, lineterminator="\n"), config.output)

        if config.plots is not None:
            plot_dir = Path(config.plots)
            plot_dir.mkdir(parents=True, exist_ok=True)
            for kind in kinds:
                table = growth_table(kind, config.rs, grid, config.pool_bags, config.seed, config.cap, psi=psi,
                                     threads=config.threads)
                logger.info("%s: fitted c = %.4f", kind.value, table["c"].iloc[0])
                plot_growth(table, plot_dir / f"{GROWTH_PLOT_ROOT}_{kind.value}.png")
        return results

    # ------- Inputs ------- #

    def _load_dataset(self) -> MILDataset:
        return load_dataset(Path(self._config.dataset), self._config.dataset_format)

    def _load_model_and_dataset(self) -> tuple[Ensemble, MILDataset]:
        """
        :raise:
            ConfigError: If the model reads a feature the dataset does not have
        """
        ensemble = Ensemble.load(Path(self._config.model))
        dataset = self._load_dataset()
        if ensemble.max_feature >= dataset.dimension:
            raise ConfigError(f"Model reads feature {ensemble.max_feature} but the dataset has dimension "
                              f"{dataset.dimension}")
        return ensemble, dataset
