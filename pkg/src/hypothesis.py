from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from src.bag import Bag, BagFunction, MILDataset, stack_bags

SENTINEL_OFFSET = 0.5  # Distance of the below-min / above-max thresholds from the extreme values


# ------- Instance hypotheses ------- #

class InstanceHypothesis(ABC):
    """Maps an instance (feature vector) to an output in [-1, +1]. Implemented hypotheses are binary."""

    @abstractmethod
    def predict(self, instances: np.ndarray) -> np.ndarray:
        """
        Evaluates the hypothesis on every row of an instance matrix

        :param instances: Array of shape (n, d)
        :return: Array of n outputs
        """

    @property
    def max_feature(self) -> int:
        """Largest feature index read by the hypothesis (-1 if none)"""
        return -1

    @abstractmethod
    def to_dict(self) -> dict:
        """Returns the hypothesis JSON description"""

    def _check_dimension(self, instances: np.ndarray):
        if self.max_feature >= instances.shape[1]:
            raise ValueError(f"Feature index {self.max_feature} out of range for instances of dimension "
                             f"{instances.shape[1]}")


@dataclass(frozen=True)
class Stump(InstanceHypothesis):
    """Outputs polarity if x[feature] > threshold (strict), -polarity otherwise."""
    feature: int
    threshold: float
    polarity: int = 1

    def __post_init__(self):
        if self.feature < 0:
            raise ValueError(f"Feature index must be non-negative, got {self.feature}")
        if self.polarity not in (-1, 1):
            raise ValueError(f"Polarity must be -1 or +1, got {self.polarity}")
        if not np.isfinite(self.threshold):
            raise ValueError(f"Threshold must be finite, got {self.threshold}")

    @property
    def max_feature(self) -> int:
        return self.feature

    def predict(self, instances: np.ndarray) -> np.ndarray:
        instances = np.atleast_2d(instances)
        self._check_dimension(instances)
        return np.where(instances[:, self.feature] > self.threshold, self.polarity, -self.polarity).astype(float)

    def to_dict(self) -> dict:
        return {"kind": "stump", "feature": self.feature, "threshold": self.threshold, "polarity": self.polarity}


@dataclass(frozen=True)
class ConstantHypothesis(InstanceHypothesis):
    value: int

    def __post_init__(self):
        if self.value not in (-1, 1):
            raise ValueError(f"Constant value must be -1 or +1, got {self.value}")

    def predict(self, instances: np.ndarray) -> np.ndarray:
        return np.full(np.atleast_2d(instances).shape[0], float(self.value))

    def to_dict(self) -> dict:
        return {"kind": "const", "value": self.value}


@dataclass(frozen=True)
class IntervalHypothesis(InstanceHypothesis):
    """Outputs +1 iff low < x[feature] <= high, i.e. the conjunction of two stumps."""
    feature: int
    low: float
    high: float

    def __post_init__(self):
        if self.feature < 0:
            raise ValueError(f"Feature index must be non-negative, got {self.feature}")
        if not self.low <= self.high:
            raise ValueError(f"Interval bounds must satisfy low <= high, got ({self.low}, {self.high})")

    @property
    def max_feature(self) -> int:
        return self.feature

    def predict(self, instances: np.ndarray) -> np.ndarray:
        instances = np.atleast_2d(instances)
        self._check_dimension(instances)
        column = instances[:, self.feature]
        return np.where((column > self.low) & (column <= self.high), 1.0, -1.0)

    def to_dict(self) -> dict:
        return {"kind": "interval", "feature": self.feature, "low": self.low, "high": self.high}


def evaluate_instance(h: InstanceHypothesis, x: np.ndarray) -> float:
    """
    Evaluates an instance hypothesis on a single instance

    :raise:
        ValueError: If the instance dimension does not cover the hypothesis feature index
    """
    return float(h.predict(np.asarray(x, dtype=float).reshape(1, -1))[0])


# ------- Bag hypotheses ------- #

class BagHypothesis(ABC):
    """Maps a bag to an output in [-1, +1]."""

    @abstractmethod
    def evaluate_many(self, bags: Sequence[Bag]) -> np.ndarray:
        """Returns the output of the hypothesis on every bag, in order"""

    @property
    def max_feature(self) -> int:
        return -1

    @abstractmethod
    def to_dict(self) -> dict:
        """Returns the hypothesis JSON description"""


@dataclass(frozen=True)
class ComposedHypothesis(BagHypothesis):
    """psi o h: the instance hypothesis h evaluated on every instance, combined by the bag function psi."""
    psi: BagFunction
    h: InstanceHypothesis

    @property
    def max_feature(self) -> int:
        return self.h.max_feature

    def evaluate_many(self, bags: Sequence[Bag]) -> np.ndarray:
        instances, offsets = stack_bags(bags)
        return self.psi.reduce(self.h.predict(instances), offsets)

    def to_dict(self) -> dict:
        return {**self.h.to_dict(), "psi": self.psi.to_json()}


@dataclass(frozen=True)
class BagConstant(BagHypothesis):
    """Bag-level constant; BagConstant(+1) is the constant-positive hypothesis h_pos."""
    value: int

    def __post_init__(self):
        if self.value not in (-1, 1):
            raise ValueError(f"Constant value must be -1 or +1, got {self.value}")

    def evaluate_many(self, bags: Sequence[Bag]) -> np.ndarray:
        return np.full(len(bags), float(self.value))

    def to_dict(self) -> dict:
        return {"kind": "bag_const", "value": self.value}


H_POS = BagConstant(1)
H_NEG = BagConstant(-1)


def evaluate_bag(hb: BagHypothesis, b: Bag) -> float:
    """
    Evaluates a bag hypothesis on one bag

    :raise:
        ValueError: "empty bag" if the bag holds no instance, or if dimensions are incompatible
    """
    if len(b) == 0:
        raise ValueError("empty bag")
    return float(hb.evaluate_many([b])[0])


# ------- Enumeration ------- #

def candidate_thresholds(values: np.ndarray) -> np.ndarray:
    """
    Thresholds realising every split of a list of values: one below the minimum, the midpoints between consecutive
    distinct sorted values, and one above the maximum.
    """
    distinct = np.unique(values)
    midpoints = (distinct[:-1] + distinct[1:]) / 2
    return np.concatenate(([distinct[0] - SENTINEL_OFFSET], midpoints, [distinct[-1] + SENTINEL_OFFSET]))


def enumerate_stumps(dataset: MILDataset | np.ndarray) -> list[Stump]:
    """
    Enumerates a finite set of stumps realising every labeling that any stump induces on the instances.

    For each feature (ascending), thresholds are sorted ascending and both polarities are listed, +1 first. The
    output holds 2 * sum over features of (number of distinct values + 1) stumps.

    :param dataset: A dataset, or a matrix of instances of shape (n, d)
    """
    if isinstance(dataset, MILDataset):
        instances, _ = stack_bags(dataset.bags)
    else:
        instances = np.atleast_2d(np.asarray(dataset, dtype=float))
    if instances.shape[0] == 0:
        raise ValueError("no instances to enumerate stumps on")

    stumps = []
    for feature in range(instances.shape[1]):
        for threshold in candidate_thresholds(instances[:, feature]):
            stumps.append(Stump(feature, float(threshold), 1))
            stumps.append(Stump(feature, float(threshold), -1))
    return stumps


def enumerate_intervals(instances: np.ndarray, feature: int = 0) -> list[IntervalHypothesis]:
    """
    Enumerates the intervals (low, high] with bounds among the candidate thresholds of one feature. Together they
    realise every labeling an interval induces on the instances.
    """
    thresholds = candidate_thresholds(np.atleast_2d(instances)[:, feature])
    return [IntervalHypothesis(feature, float(low), float(high))
            for i, low in enumerate(thresholds) for high in thresholds[i:]]


# ------- JSON ------- #

def hypothesis_from_dict(data: dict) -> InstanceHypothesis:
    """
    Builds an instance hypothesis from its JSON description

    :raise:
        ValueError: If the kind is unknown, or fields are missing or malformed
    """
    kind = data.get("kind")
    try:
        if kind == "stump":
            return Stump(int(data["feature"]), float(data["threshold"]), int(data["polarity"]))
        if kind == "const":
            return ConstantHypothesis(int(data["value"]))
        if kind == "interval":
            return IntervalHypothesis(int(data["feature"]), float(data["low"]), float(data["high"]))
    except KeyError as e:
        raise ValueError(f"Missing field {e} in hypothesis {data}")
    except TypeError as e:
        raise ValueError(f"Invalid field in hypothesis {data} ({e})")
    raise ValueError(f"Unknown hypothesis kind: {kind!r}")


def bag_hypothesis_from_dict(data: dict) -> BagHypothesis:
    """
    Builds a bag hypothesis from its JSON description: {"kind": "bag_const", "value": v}, or an instance hypothesis
    description with an extra "psi" entry
    """
    if data.get("kind") == "bag_const":
        return BagConstant(int(data["value"]))
    if "psi" not in data:
        raise ValueError(f"Bag hypothesis {data} has no 'psi' entry")
    instance_data = {key: value for key, value in data.items() if key != "psi"}
    return ComposedHypothesis(BagFunction.from_json(data["psi"]), hypothesis_from_dict(instance_data))
