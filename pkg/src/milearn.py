from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from src.bag import Bag, BagDistribution, BagFunction, bag_labels, stack_bags
from src.hypothesis import (H_NEG, H_POS, BagHypothesis, ComposedHypothesis, InstanceHypothesis,
                            enumerate_stumps)
from src.oracle import WeightedInstanceSample, erm_one_sided, erm_stumps

logger = logging.getLogger(__name__)

CANDIDATE_NAMES = ("composed", "h_pos", "h_neg")  # Also the tie-breaking order of weak_learn_d


class OracleKind(Enum):
    AGNOSTIC = "agnostic"
    ONE_SIDED = "one_sided"


class LiftMode(Enum):
    PER_INSTANCE = "per_instance"  # instance weight D_i / r_i
    PER_BAG = "per_bag"  # instance weight D_i


@dataclass(frozen=True)
class WeakLearnerOutput:
    hypothesis: BagHypothesis
    edge: float
    candidate_edges: dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class MILearnConfig:
    psi: BagFunction = field(default_factory=BagFunction.max)
    oracle_kind: OracleKind = OracleKind.AGNOSTIC
    mode: LiftMode = LiftMode.PER_INSTANCE
    threads: int = 1


def _check_distribution(bags: Sequence[Bag], distribution: BagDistribution):
    if len(distribution) != len(bags):
        raise ValueError(f"Distribution has {len(distribution)} weights for {len(bags)} bags")


def edge(hb: BagHypothesis, bags: Sequence[Bag], distribution: BagDistribution) -> float:
    """
    Returns the edge of a bag hypothesis: sum over bags of D_i * y_i * hb(bag_i)

    :raise:
        ValueError: If the distribution and the bag list have different lengths
    """
    _check_distribution(bags, distribution)
    return float(np.dot(distribution.weights * bag_labels(bags), hb.evaluate_many(bags)))


def lift_distribution(bags: Sequence[Bag], distribution: BagDistribution,
                      mode: LiftMode = LiftMode.PER_INSTANCE) -> WeightedInstanceSample:
    """
    Turns a distribution over bags into a weighted instance sample: every instance of bag i carries the label y_i,
    with weight D_i / r_i (per_instance) or D_i (per_bag). Items are listed in bag order then within-bag order.
    """
    _check_distribution(bags, distribution)
    instances, _ = stack_bags(bags)
    sizes = np.array([len(bag) for bag in bags])
    labels = np.repeat(bag_labels(bags), sizes)
    bag_weights = distribution.weights / sizes if mode is LiftMode.PER_INSTANCE else distribution.weights
    return WeightedInstanceSample(instances, labels, np.repeat(bag_weights, sizes))


def learn_all_true(bags: Sequence[Bag], distribution: BagDistribution,
                   oracle_kind: OracleKind = OracleKind.AGNOSTIC, mode: LiftMode = LiftMode.PER_INSTANCE,
                   threads: int = 1) -> InstanceHypothesis:
    """
    Queries the single-instance oracle on the lifted sample, where every instance of a positive bag is presented as
    positive (and every instance of a negative bag as negative).
    """
    sample = lift_distribution(bags, distribution, mode)
    if oracle_kind is OracleKind.ONE_SIDED:
        return erm_one_sided(sample, threads=threads).hypothesis
    return erm_stumps(sample, threads=threads).hypothesis


def weak_learn_d(bags: Sequence[Bag], distribution: BagDistribution, psi: BagFunction,
                 oracle_kind: OracleKind = OracleKind.AGNOSTIC, mode: LiftMode = LiftMode.PER_INSTANCE,
                 threads: int = 1) -> WeakLearnerOutput:
    """
    Returns the candidate of maximal edge among psi o h (h learnt by learn_all_true), h_pos and h_neg.

    Ties are broken in that order. Since edge(h_pos) = -edge(h_neg), the returned edge is never negative.
    """
    if len(bags) == 0:
        raise ValueError("no bags")
    h = learn_all_true(bags, distribution, oracle_kind, mode, threads=threads)
    candidates = (ComposedHypothesis(psi, h), H_POS, H_NEG)
    candidate_edges = {name: edge(candidate, bags, distribution)
                       for name, candidate in zip(CANDIDATE_NAMES, candidates)}

    best = 0
    for i, name in enumerate(CANDIDATE_NAMES[1:], start=1):
        if candidate_edges[name] > candidate_edges[CANDIDATE_NAMES[best]]:
            best = i
    return WeakLearnerOutput(hypothesis=candidates[best], edge=candidate_edges[CANDIDATE_NAMES[best]],
                             candidate_edges=candidate_edges)


def milearn(bags: Sequence[Bag], distribution: BagDistribution, config: MILearnConfig) -> WeakLearnerOutput:
    """
    MIL weak learner entry point. It delegates to weak_learn_d; refinements of the instance reweighting belong here
    and must keep the WeakLearnerOutput guarantees (edge >= every candidate edge, edge >= 0).
    """
    return weak_learn_d(bags, distribution, config.psi, config.oracle_kind, config.mode, threads=config.threads)


def exhaustive_best_edge(bags: Sequence[Bag], distribution: BagDistribution,
                         psi: BagFunction) -> tuple[float, float]:
    """
    Computes the best achievable edge gamma* by exhaustive search over the stumps enumerated on the bags' instances,
    together with both constants.

    :return: (bag-level gamma*: max edge of psi o h and of the bag constants,
              instance-level gamma*: max edge of h on the per_instance lifted sample)
    """
    _check_distribution(bags, distribution)
    instances, offsets = stack_bags(bags)
    signed_weights = distribution.weights * bag_labels(bags)
    sample = lift_distribution(bags, distribution, LiftMode.PER_INSTANCE)
    signed_instance_weights = sample.weights * sample.labels

    positive_edge = float(signed_weights.sum())
    bag_best = abs(positive_edge)
    instance_best = abs(float(signed_instance_weights.sum()))
    for h in enumerate_stumps(instances):
        outputs = h.predict(instances)
        bag_best = max(bag_best, float(np.dot(signed_weights, psi.reduce(outputs, offsets))))
        instance_best = max(instance_best, float(np.dot(signed_instance_weights, outputs)))
    return bag_best, instance_best


class MILearner:
    """
    The MILearn weak learner as a callable for boosting: weak(bags, D) -> WeakLearnerOutput.

    With monitor=True every call also computes the exhaustive gamma* and warns when the returned edge falls below
    gamma* / (2R), R being the largest bag size. This threshold is a monitored expectation, not a guarantee.
    """

    def __init__(self, config: MILearnConfig = MILearnConfig(), monitor: bool = False):
        self._config = config
        self._monitor = monitor
        self._violations: list[dict] = list()
        self._n_calls = 0

    def __repr__(self):
        return (f"MILearner(psi={self._config.psi}, oracle={self._config.oracle_kind.value}, "
                f"mode={self._config.mode.value}, monitor={self._monitor})")

    @property
    def config(self) -> MILearnConfig:
        return self._config

    @property
    def psi(self) -> BagFunction:
        return self._config.psi

    @property
    def violations(self) -> list[dict]:
        return list(self._violations)

    def __call__(self, bags: Sequence[Bag], distribution: BagDistribution) -> WeakLearnerOutput:
        output = milearn(bags, distribution, self._config)
        self._n_calls += 1
        if self._monitor:
            self._check_weak_learnability(bags, distribution, output)
        return output

    def _check_weak_learnability(self, bags: Sequence[Bag], distribution: BagDistribution,
                                 output: WeakLearnerOutput):
        bag_gamma_star, instance_gamma_star = exhaustive_best_edge(bags, distribution, self._config.psi)
        max_bag_size = max(len(bag) for bag in bags)
        expected = bag_gamma_star / (2 * max_bag_size)
        logger.debug("call %d: edge=%.6f, bag gamma*=%.6f, instance gamma*=%.6f", self._n_calls, output.edge,
                     bag_gamma_star, instance_gamma_star)
        if output.edge < expected:
            self._violations.append({"call": self._n_calls, "edge": output.edge, "bag_gamma_star": bag_gamma_star,
                                     "instance_gamma_star": instance_gamma_star, "expected": expected})
            warnings.warn(f"Weak learner call {self._n_calls}: edge {output.edge:.6f} below gamma*/(2R) = "
                          f"{expected:.6f} (gamma*={bag_gamma_star:.6f}, R={max_bag_size})", RuntimeWarning)

