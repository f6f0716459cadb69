from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from src.bag import Bag, BagFunction, MILDataset
from src.hypothesis import InstanceHypothesis, Stump
from src.mil_utils import component_rng

logger = logging.getLogger(__name__)

MAX_DRAWS_PER_BAG = 100  # Rejection budget: more than 100 * num_bags draws in total means the rate is unreachable
DEPENDENT_SPREAD = 0.25  # Spread of instances around their bag centre (homogeneous_dependent)
HETEROGENEOUS_CENTRE_SCALE = np.sqrt(2)
HETEROGENEOUS_SPREAD_RANGE = (0.1, 1.0)
RATE_WARNING_GAP = 0.1


class Regime(Enum):
    HOMOGENEOUS_INDEPENDENT = "homogeneous_independent"
    HOMOGENEOUS_DEPENDENT = "homogeneous_dependent"
    HETEROGENEOUS_DEPENDENT = "heterogeneous_dependent"


class BagSizes(Enum):
    FIXED = "fixed"  # every bag holds R instances
    VARIABLE = "variable"  # bag sizes uniform in 1..R


@dataclass(frozen=True)
class SyntheticSpec:
    dimension: int = 2
    max_bag_size: int = 4
    num_bags: int = 100
    positive_rate: float = 0.5
    target: InstanceHypothesis = field(default_factory=lambda: Stump(0, 1.0, 1))
    noise: float = 0.
    seed: int = 0
    bag_sizes: BagSizes = BagSizes.FIXED

    def validate(self):
        """
        :raise:
            ValueError: If a field is out of its range, or the target reads a feature beyond the dimension
        """
        if self.num_bags <= 0:
            raise ValueError(f"num_bags must be positive, got {self.num_bags}")
        if self.dimension < 1:
            raise ValueError(f"dimension must be positive, got {self.dimension}")
        if self.max_bag_size < 1:
            raise ValueError(f"max_bag_size must be positive, got {self.max_bag_size}")
        if not 0 <= self.positive_rate <= 1:
            raise ValueError(f"positive_rate must be in [0, 1], got {self.positive_rate}")
        if not 0 <= self.noise < 1:
            raise ValueError(f"noise must be in [0, 1), got {self.noise}")
        if self.target.max_feature >= self.dimension:
            raise ValueError(f"Target reads feature {self.target.max_feature}, beyond dimension {self.dimension}")


def _draw_instances(regime: Regime, size: int, dimension: int, rng: np.random.Generator) -> np.ndarray:
    """Draws the instances of one bag according to the dependence regime"""
    if regime is Regime.HOMOGENEOUS_INDEPENDENT:
        return rng.standard_normal((size, dimension))

    if regime is Regime.HOMOGENEOUS_DEPENDENT:
        centre = rng.standard_normal(dimension)
        return centre + DEPENDENT_SPREAD * rng.standard_normal((size, dimension))

    # heterogeneous_dependent: every bag has its own centre and its own spread
    centre = HETEROGENEOUS_CENTRE_SCALE * rng.standard_normal(dimension)
    spread = rng.uniform(*HETEROGENEOUS_SPREAD_RANGE)
    return centre + spread * rng.standard_normal((size, dimension))


def generate_synthetic(regime: Regime, spec: SyntheticSpec) -> MILDataset:
    """
    Generates a MIL dataset whose clean bag labels are max (OR) of the target's instance labels.

    For each bag, the desired clean label is positive with probability positive_rate and bags are redrawn until the
    clean label matches. Labels are then flipped independently with probability noise. The result is a deterministic
    function of the regime and the settings.

    :param regime: Dependence regime of the instances inside a bag
    :param spec: Generation settings

    :raise:
        ValueError: If the settings are invalid, or "rate unreachable" if more than 100 * num_bags draws are needed
    """
    spec.validate()
    rng = component_rng(spec.seed, f"synthetic/{regime.value}")
    psi = BagFunction.max()
    budget = MAX_DRAWS_PER_BAG * spec.num_bags
    n_draws = 0

    bags = []
    for i in range(spec.num_bags):
        wanted_label = 1 if rng.random() < spec.positive_rate else -1
        while True:
            if n_draws >= budget:
                raise ValueError("rate unreachable")
            n_draws += 1
            size = (spec.max_bag_size if spec.bag_sizes is BagSizes.FIXED
                    else int(rng.integers(1, spec.max_bag_size + 1)))
            instances = _draw_instances(regime, size, spec.dimension, rng)
            clean_label = 1 if psi(spec.target.predict(instances)) > 0 else -1
            if clean_label == wanted_label:
                break

        label = -clean_label if rng.random() < spec.noise else clean_label
        bags.append(Bag(bag_id=f"b{i:05d}", instances=instances, label=label))

    dataset = MILDataset(dimension=spec.dimension, max_bag_size=spec.max_bag_size, bags=tuple(bags))
    realised_rate = float(np.mean(dataset.labels > 0))
    if abs(realised_rate - spec.positive_rate) > RATE_WARNING_GAP:
        warnings.warn(f"Realised positive rate {realised_rate:.3f} is far from the requested "
                      f"{spec.positive_rate:.3f}", RuntimeWarning)
    logger.info("Generated %d %s bags (%d draws), positive rate %.3f", len(dataset), regime.value, n_draws,
                realised_rate)
    return dataset
