from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import pandas as pd
from matplotlib import pyplot as plt
from scipy.optimize import linprog

from src.bag import Bag, BagDistribution, BagFunction, bag_labels
from src.hypothesis import BagHypothesis, bag_hypothesis_from_dict
from src.mil_utils import assert_approx, assert_at_most, clamp_edge, log_odds
from src.milearn import WeakLearnerOutput

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1
PERFECT_EDGE = 1 - 1e-9  # A round reaching this edge ends the run
TRACE_COLUMNS = ["t", "gamma", "alpha", "Z", "rho", "train_error", "min_margin"]

WeakLearner = Callable[[Sequence[Bag], BagDistribution], WeakLearnerOutput]


class BoosterKind(Enum):
    ADABOOST = "adaboost"
    ADABOOST_STAR = "adaboost_star"


# ------- Ensemble ------- #

@dataclass(frozen=True)
class EnsembleTerm:
    hypothesis: BagHypothesis
    alpha: float


@dataclass(frozen=True)
class Ensemble:
    """Weighted vote of bag hypotheses: predicts sign(sum of alpha_t * h_t(bag)), with sign(0) = +1."""
    terms: tuple[EnsembleTerm, ...]
    psi: BagFunction = field(default_factory=BagFunction.max)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))

    def __len__(self):
        return len(self.terms)

    @property
    def total_alpha(self) -> float:
        return float(sum(abs(term.alpha) for term in self.terms))

    @property
    def max_feature(self) -> int:
        return max((term.hypothesis.max_feature for term in self.terms), default=-1)

    def scores(self, bags: Sequence[Bag]) -> np.ndarray:
        """
        Returns the unnormalised vote sum of alpha_t * h_t(bag) for every bag

        :raise:
            ValueError: "untrained" if the ensemble has no term
        """
        if len(self.terms) == 0:
            raise ValueError("untrained")
        scores = np.zeros(len(bags))
        for term in self.terms:
            scores += term.alpha * term.hypothesis.evaluate_many(bags)
        return scores

    def predict_many(self, bags: Sequence[Bag]) -> np.ndarray:
        return np.where(self.scores(bags) >= 0, 1, -1)

    def margins(self, bags: Sequence[Bag]) -> np.ndarray:
        """Normalised margins y * f(bag) / sum |alpha_t|, in [-1, +1]"""
        margins = bag_labels(bags) * self.scores(bags)
        total_alpha = self.total_alpha
        return margins / total_alpha if total_alpha > 0 else margins

    def hindsight_margin(self, bags: Sequence[Bag]) -> float:
        """Best minimum margin any convex combination of the ensemble's distinct hypotheses achieves on the bags"""
        distinct = {json.dumps(term.hypothesis.to_dict(), sort_keys=True): term.hypothesis for term in self.terms}
        if len(distinct) == 0:
            raise ValueError("untrained")
        labels = bag_labels(bags)
        margin_matrix = np.column_stack([labels * hypothesis.evaluate_many(bags) for hypothesis in distinct.values()])
        rho, _ = optimal_margin(margin_matrix)
        return rho

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "psi": self.psi.to_json(),
            "terms": [{"alpha": term.alpha, "hypothesis": term.hypothesis.to_dict()} for term in self.terms],
        }

    @classmethod
    def from_dict(cls, data: dict) -> Ensemble:
        """
        Builds an ensemble from its model JSON

        :raise:
            ValueError: If the format version is not supported or an entry is malformed
        """
        version = data.get("format_version")
        if version != MODEL_FORMAT_VERSION:
            raise ValueError(f"Unsupported model format version: {version!r}")
        try:
            terms = [EnsembleTerm(bag_hypothesis_from_dict(term["hypothesis"]), float(term["alpha"]))
                     for term in data["terms"]]
            return cls(terms=tuple(terms), psi=BagFunction.from_json(data["psi"]))
        except (KeyError, TypeError) as e:
            raise ValueError(f"Malformed model: {e}")

    def save(self, path: Path):
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Path) -> Ensemble:
        if not path.exists():
            raise FileNotFoundError(f"File not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ValueError(f"Model file {path} is not valid JSON: {e}")
        return cls.from_dict(data)


def predict(ensemble: Ensemble, bag: Bag) -> int:
    """Returns the ensemble label (+1 or -1) of one bag"""
    return int(ensemble.predict_many([bag])[0])


def margins(ensemble: Ensemble, bags: Sequence[Bag]) -> list[float]:
    """Returns the normalised margin of every bag"""
    return ensemble.margins(bags).tolist()


# ------- Trace ------- #

@dataclass(frozen=True)
class BoostRound:
    t: int
    gamma: float
    alpha: float
    z: float
    rho: float | None
    train_error: float
    min_margin: float
    z_product: float  # product of Z_s for s <= t
    edge_bound: float  # product of sqrt(1 - gamma_s^2) for s <= t
    distribution: np.ndarray = field(repr=False)  # D_t, the distribution the weak learner received


class BoostTrace:
    """Per-round record of a boosting run"""

    def __init__(self, booster: BoosterKind):
        self._booster = booster
        self._rounds: list[BoostRound] = list()

    def __repr__(self):
        return f"BoostTrace({self._booster.value}, {len(self._rounds)} rounds)"

    def __len__(self):
        return len(self._rounds)

    def __getitem__(self, index: int) -> BoostRound:
        return self._rounds[index]

    def __iter__(self):
        return iter(self._rounds)

    @property
    def booster(self) -> BoosterKind:
        return self._booster

    @property
    def rounds(self) -> list[BoostRound]:
        return list(self._rounds)

    def append(self, boost_round: BoostRound):
        self._rounds.append(boost_round)

    def to_dataframe(self) -> pd.DataFrame:
        rows = [[r.t, r.gamma, r.alpha, r.z, r.rho, r.train_error, r.min_margin] for r in self._rounds]
        return pd.DataFrame(rows, columns=TRACE_COLUMNS)

    def to_csv(self, path: Path):
        self.to_dataframe().to_csv(path, index=False, lineterminator="\n")


def _check_round(boost_round: BoostRound, margins_t: np.ndarray, next_distribution: BagDistribution,
                 standard_alpha: bool):
    """
    Checks the numerical guarantees of a round: Z recomputation, validity of the next distribution, training error
    bounded by the product of Z and, for standard AdaBoost, Z_t <= sqrt(1 - gamma_t^2) and training error bounded by
    the product of sqrt(1 - gamma_s^2)
    """
    z = float(np.sum(boost_round.distribution * np.exp(-boost_round.alpha * margins_t)))
    assert_approx(z, boost_round.z)
    assert_approx(float(next_distribution.weights.sum()), 1.)
    assert_at_most(boost_round.train_error, boost_round.z_product)
    if standard_alpha:
        assert_at_most(boost_round.z, float(np.sqrt(1 - clamp_edge(boost_round.gamma) ** 2)))
        assert_at_most(boost_round.train_error, boost_round.edge_bound)


def _boost(bags: Sequence[Bag], weak: WeakLearner, rounds: int, nu: float | None,
           psi: BagFunction | None) -> tuple[Ensemble, BoostTrace]:
    if rounds < 1:
        raise ValueError(f"Number of rounds must be at least 1, got {rounds}")
    if len(bags) == 0:
        raise ValueError("no bags")
    if psi is None:
        psi = getattr(weak, "psi", BagFunction.max())

    booster = BoosterKind.ADABOOST if nu is None else BoosterKind.ADABOOST_STAR
    stop_edge = 0. if nu is None else nu
    labels = bag_labels(bags)
    distribution = BagDistribution.uniform(len(bags))
    trace = BoostTrace(booster)
    terms: list[EnsembleTerm] = list()

    scores = np.zeros(len(bags))
    total_alpha = 0.
    z_product = 1.
    edge_bound = 1.
    min_gamma = np.inf

    for t in range(1, rounds + 1):
        output = weak(bags, distribution)
        outputs = output.hypothesis.evaluate_many(bags)
        margins_t = labels * outputs
        gamma = float(np.dot(distribution.weights, margins_t))

        if gamma <= stop_edge:
            warnings.warn(f"{booster.value}: round {t} edge {gamma:.6g} <= {stop_edge}, no useful edge remains. "
                          f"Stopping after {t - 1} rounds.", RuntimeWarning)
            break

        if nu is None:
            rho = None
            alpha = log_odds(gamma)
        else:
            min_gamma = min(min_gamma, gamma)
            rho = min_gamma - nu
            alpha = log_odds(gamma) - log_odds(rho)

        unnormalised = distribution.weights * np.exp(-alpha * margins_t)
        z = float(unnormalised.sum())
        next_distribution = BagDistribution(unnormalised / z)

        terms.append(EnsembleTerm(output.hypothesis, alpha))
        scores += alpha * outputs
        total_alpha += abs(alpha)
        z_product *= z
        edge_bound *= float(np.sqrt(1 - clamp_edge(gamma) ** 2))

        predictions = np.where(scores >= 0, 1, -1)
        normalised_margins = labels * scores / total_alpha if total_alpha > 0 else labels * scores
        boost_round = BoostRound(t=t, gamma=gamma, alpha=alpha, z=z, rho=rho,
                                 train_error=float(np.mean(predictions != labels)),
                                 min_margin=float(normalised_margins.min()), z_product=z_product,
                                 edge_bound=edge_bound, distribution=distribution.weights)
        _check_round(boost_round, margins_t, next_distribution, standard_alpha=nu is None)
        trace.append(boost_round)
        logger.debug("round %d: gamma=%.6f alpha=%.6f Z=%.6f error=%.4f", t, gamma, alpha, z,
                     boost_round.train_error)

        distribution = next_distribution
        if gamma >= PERFECT_EDGE:
            break

    if len(trace) > 0:
        logger.info("%s: %d rounds, training error %.4f, min margin %.4f", booster.value, len(trace),
                    trace[-1].train_error, trace[-1].min_margin)
    return Ensemble(terms=tuple(terms), psi=psi), trace


def adaboost(bags: Sequence[Bag], weak: WeakLearner, rounds: int,
             psi: BagFunction | None = None) -> tuple[Ensemble, BoostTrace]:
    """
    AdaBoost over bag hypotheses.

    D_1 is uniform; each round the weak learner receives D_t, alpha_t = 1/2 ln((1 + gamma_t) / (1 - gamma_t)) with
    gamma_t clamped away from +-1, and D_t+1 is proportional to D_t(i) exp(-alpha_t y_i h_t(bag_i)). The run stops
    early after a perfect round (gamma_t >= 1 - 1e-9, round kept) or when gamma_t <= 0 (round dropped).

    :param bags: Training bags
    :param weak: Weak learner, called as weak(bags, D)
    :param rounds: Maximum number of rounds T >= 1
    :param psi: Bag function recorded in the ensemble (defaults to weak.psi, or Max)
    """
    return _boost(bags, weak, rounds, nu=None, psi=psi)


def adaboost_star(bags: Sequence[Bag], weak: WeakLearner, rounds: int, nu: float,
                  psi: BagFunction | None = None) -> tuple[Ensemble, BoostTrace]:
    """
    AdaBoost* (margin maximising AdaBoost): with rho_t = min_{s <= t} gamma_s - nu, the step is
    alpha_t = 1/2 ln((1 + gamma_t) / (1 - gamma_t)) - 1/2 ln((1 + rho_t) / (1 - rho_t)). The distribution update is
    the one of AdaBoost. The run stops when gamma_t <= nu (round dropped) or after a perfect round.

    :param nu: Margin precision, 0 < nu < 1
    """
    if not 0 < nu < 1:
        raise ValueError(f"nu must be in (0, 1), got {nu}")
    return _boost(bags, weak, rounds, nu=nu, psi=psi)


def optimal_margin(margin_matrix: np.ndarray) -> tuple[float, np.ndarray]:
    """
    Maximum over convex combinations w of the minimum over rows of (margin_matrix @ w), solved as a linear program.

    :param margin_matrix: Array (n_examples, n_hypotheses) of y_i * h_j(x_i)

    :return: (optimal margin rho*, optimal weights w)
    """
    margin_matrix = np.atleast_2d(np.asarray(margin_matrix, dtype=float))
    n_examples, n_hypotheses = margin_matrix.shape
    # Variables: (w_1, ..., w_k, rho). Maximise rho s.t. rho - M w <= 0, sum(w) = 1, w >= 0
    objective = np.concatenate((np.zeros(n_hypotheses), [-1.]))
    a_ub = np.column_stack((-margin_matrix, np.ones(n_examples)))
    a_eq = np.concatenate((np.ones(n_hypotheses), [0.])).reshape(1, -1)
    result = linprog(objective, A_ub=a_ub, b_ub=np.zeros(n_examples), A_eq=a_eq, b_eq=[1.],
                     bounds=[(0, None)] * n_hypotheses + [(-1, 1)], method="highs")
    if not result.success:
        raise RuntimeError(f"Optimal margin linear program failed: {result.message}")
    return float(result.x[-1]), result.x[:-1]


def plot_trace(trace: BoostTrace, path: Path):
    """
    Plots edge, training error, its product bound and minimum margin per round, saved as a PNG.

    :param trace: Trace of a boosting run
    :param path: Path where the figure will be saved
    """
    df = trace.to_dataframe()
    bound = [r.edge_bound if trace.booster is BoosterKind.ADABOOST else r.z_product for r in trace]

    fig = plt.figure()
    plt.plot(df["t"], df["gamma"], label="edge")
    plt.plot(df["t"], df["train_error"], label="training error")
    plt.plot(df["t"], bound, linestyle="--", label="error bound")
    plt.plot(df["t"], df["min_margin"], label="min margin")
    if trace.booster is BoosterKind.ADABOOST_STAR:
        plt.plot(df["t"], df["rho"], linestyle=":", label="rho")
    plt.xlabel("Round")
    plt.legend()
    fig.suptitle(f"{trace.booster.value} - {len(trace)} rounds", fontsize=10)
    plt.savefig(path)
    plt.close()
