from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial

import numpy as np

from src.hypothesis import ConstantHypothesis, InstanceHypothesis, Stump, candidate_thresholds
from src.mil_utils import TIE_TOL, first_minimum, thread_map


@dataclass(frozen=True)
class WeightedInstanceSample:
    """The sample handed to the single-instance oracle: instances with a label in {-1, +1} and a weight >= 0."""
    instances: np.ndarray = field(repr=False)  # shape (n, d)
    labels: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        instances = np.atleast_2d(np.asarray(self.instances, dtype=float))
        labels = np.asarray(self.labels, dtype=float).ravel()
        weights = np.asarray(self.weights, dtype=float).ravel()

        if not (instances.shape[0] == labels.size == weights.size):
            raise ValueError(f"Sample sizes differ: {instances.shape[0]} instances, {labels.size} labels, "
                             f"{weights.size} weights")
        if not np.all(np.isin(labels, (-1, 1))):
            raise ValueError("Sample labels must be -1 or +1")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ValueError("Sample weights must be finite and non-negative")
        if weights.sum() <= 0:
            raise ValueError("zero total weight")

        for array in (instances, labels, weights):
            array.setflags(write=False)
        object.__setattr__(self, "instances", instances)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return self.labels.size

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    def weighted_error(self, h: InstanceHypothesis) -> float:
        """Returns sum of w_i * 1[h(x_i) != y_i] / sum of w_i"""
        mistakes = h.predict(self.instances) != self.labels
        return float(np.sum(self.weights[mistakes]) / self.total_weight)

    def without_zero_weights(self) -> WeightedInstanceSample:
        keep = self.weights > 0
        return WeightedInstanceSample(self.instances[keep], self.labels[keep], self.weights[keep])


@dataclass(frozen=True)
class OracleReport:
    hypothesis: InstanceHypothesis
    weighted_error: float


def _best_stump_on_feature(sample: WeightedInstanceSample, feature: int,
                           one_sided: bool) -> tuple[float, Stump] | None:
    """
    Finds the best stump on one feature with a single sort and prefix sums.

    Threshold j (in the order of candidate_thresholds) puts the j smallest distinct values on the "<= threshold"
    side. Errors within TIE_TOL * total weight of the minimum are ties, broken by smallest threshold, then polarity
    +1.

    :return: (unnormalised error, stump), or None if no stump of this feature is feasible
    """
    values = sample.instances[:, feature]
    distinct, inverse = np.unique(values, return_inverse=True)
    n_groups = distinct.size
    positive = sample.labels > 0
    negative = ~positive

    pos_weights = np.bincount(inverse, weights=sample.weights * positive, minlength=n_groups)
    neg_weights = np.bincount(inverse, weights=sample.weights * negative, minlength=n_groups)
    pos_below = np.concatenate(([0.], np.cumsum(pos_weights)))
    neg_below = np.concatenate(([0.], np.cumsum(neg_weights)))
    pos_total, neg_total = pos_below[-1], neg_below[-1]

    if one_sided:
        # Errors are only committed on positives; a polarity is feasible if no negative lies on its +1 side
        neg_counts = np.concatenate(([0], np.cumsum(np.bincount(inverse, weights=negative.astype(float),
                                                                 minlength=n_groups))))
        errors = np.column_stack((
            np.where(neg_counts == neg_counts[-1], pos_below, np.inf),
            np.where(neg_counts == 0, pos_total - pos_below, np.inf),
        ))
    else:
        errors = np.column_stack((
            pos_below + (neg_total - neg_below),  # polarity +1
            neg_below + (pos_total - pos_below),  # polarity -1
        ))

    best = first_minimum(errors.ravel(), TIE_TOL * sample.total_weight)  # smallest threshold, then polarity +1
    error = float(errors.ravel()[best])
    if not np.isfinite(error):
        return None
    threshold_index, polarity_index = divmod(best, 2)
    threshold = float(candidate_thresholds(values)[threshold_index])
    return error, Stump(feature, threshold, 1 if polarity_index == 0 else -1)


def _erm(sample: WeightedInstanceSample, one_sided: bool, threads: int) -> OracleReport:
    sample = sample.without_zero_weights()
    positive = sample.labels > 0
    pos_total = float(np.sum(sample.weights[positive]))
    neg_total = float(np.sum(sample.weights[~positive]))

    # Candidates in tie-breaking order: Constant(+1), Constant(-1), then stumps by feature
    candidates: list[tuple[float, InstanceHypothesis]] = []
    if not one_sided:
        candidates.append((neg_total, ConstantHypothesis(1)))
    elif not np.any(~positive):
        candidates.append((0., ConstantHypothesis(1)))
    candidates.append((pos_total, ConstantHypothesis(-1)))

    sweep = partial(_best_stump_on_feature, sample, one_sided=one_sided)
    candidates.extend(result for result in thread_map(sweep, range(sample.instances.shape[1]), threads)
                      if result is not None)

    best = first_minimum([error for error, _ in candidates], TIE_TOL * sample.total_weight)
    best_error, best_hypothesis = candidates[best]

    return OracleReport(hypothesis=best_hypothesis, weighted_error=best_error / sample.total_weight)


def erm_stumps(sample: WeightedInstanceSample, threads: int = 1) -> OracleReport:
    """
    Exact weighted agnostic ERM over the stumps enumerated on the sample's instances plus both constants.

    Ties are broken by: lowest weighted error, then Constant(+1), then Constant(-1), then the stump with the smallest
    feature index, then the smallest threshold, then polarity +1. Errors closer than TIE_TOL times the total weight
    count as ties, so the choice does not depend on the order in which weights were summed. Items with zero weight
    are ignored, including for threshold enumeration.

    :param sample: Weighted sample (total weight > 0)
    :param threads: Number of threads for the per-feature sweeps (result is independent of it)
    """
    return _erm(sample, one_sided=False, threads=threads)


def erm_one_sided(sample: WeightedInstanceSample, threads: int = 1) -> OracleReport:
    """
    ERM constrained to hypotheses committing no error on negatively labeled items (with positive weight).

    Among the feasible candidates, returns the one minimising the weighted error on positives, with the same
    tie-breaking as erm_stumps. Constant(-1) is always feasible.

    :param sample: Weighted sample (total weight > 0)
    :param threads: Number of threads for the per-feature sweeps (result is independent of it)
    """
    return _erm(sample, one_sided=True, threads=threads)
