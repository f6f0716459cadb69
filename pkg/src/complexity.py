from __future__ import annotations

import logging
import math
from enum import Enum
from functools import partial
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
from matplotlib import pyplot as plt

from src.bag import Bag, BagFunction
from src.hypothesis import (BagHypothesis, ComposedHypothesis, ConstantHypothesis, InstanceHypothesis, Stump,
                            candidate_thresholds, enumerate_intervals)
from src.mil_utils import component_rng, thread_map

logger = logging.getLogger(__name__)

MAX_SHATTER_POINTS = 25
MAX_VC_CAP = 12
MAX_FAT_CAP = 6
WITNESS_LEVELS = np.round(np.linspace(-0.9, 0.9, 19), 1)
RESULTS_COLUMNS = ["class", "r", "pool_size", "metric", "param", "value", "seed"]


class DomainTag(Enum):
    INSTANCE = "instance"
    BAG = "bag"


class ClassKind(Enum):
    THRESHOLD = "threshold"  # 1-D stumps, both polarities
    INTERVAL = "interval"  # 1-D intervals (conjunction of two stumps)


class PoolKind(Enum):
    EXACT = "exact"  # bags of exactly r instances
    UP_TO = "up_to"  # bags of every size from 1 to r


class FiniteClass:
    """
    An explicit finite list of hypotheses, all evaluated on the same kind of points: instances (1-D arrays) for an
    instance-level class, bags for a bag-level class.
    """

    def __init__(self, hypotheses: Sequence[InstanceHypothesis | BagHypothesis], domain_tag: DomainTag,
                 name: str = ""):
        if len(hypotheses) == 0:
            raise ValueError("A finite class needs at least one hypothesis")
        self._hypotheses = tuple(hypotheses)
        self._domain_tag = domain_tag
        self._name = name

    def __repr__(self):
        return f"FiniteClass({self._name or '?'}, {self._domain_tag.value}, {len(self._hypotheses)} hypotheses)"

    def __len__(self):
        return len(self._hypotheses)

    @property
    def hypotheses(self) -> tuple:
        return self._hypotheses

    @property
    def domain_tag(self) -> DomainTag:
        return self._domain_tag

    @property
    def name(self) -> str:
        return self._name

    def behaviours(self, points: Sequence) -> np.ndarray:
        """
        Evaluates every hypothesis on every point

        :return: Array of shape (number of hypotheses, number of points)
        """
        if len(points) == 0:
            return np.zeros((len(self._hypotheses), 0))
        if self._domain_tag is DomainTag.BAG:
            return np.vstack([hypothesis.evaluate_many(points) for hypothesis in self._hypotheses])
        instances = np.vstack([np.atleast_1d(np.asarray(point, dtype=float)) for point in points])
        return np.vstack([hypothesis.predict(instances) for hypothesis in self._hypotheses])


# ------- Class and pool builders ------- #

def threshold_class(grid: np.ndarray, polarities: Sequence[int] = (1, -1)) -> FiniteClass:
    """1-D stumps with thresholds realising every split of the grid, for the given polarities"""
    stumps = [Stump(0, float(threshold), polarity)
              for threshold in candidate_thresholds(np.asarray(grid, dtype=float)) for polarity in polarities]
    return FiniteClass(stumps, DomainTag.INSTANCE, name=ClassKind.THRESHOLD.value)


def interval_class(grid: np.ndarray) -> FiniteClass:
    intervals = enumerate_intervals(np.asarray(grid, dtype=float).reshape(-1, 1))
    return FiniteClass(intervals, DomainTag.INSTANCE, name=ClassKind.INTERVAL.value)


def constant_class() -> FiniteClass:
    return FiniteClass([ConstantHypothesis(1), ConstantHypothesis(-1)], DomainTag.INSTANCE, name="constant")


def instance_class(kind: ClassKind, grid: np.ndarray) -> FiniteClass:
    if kind is ClassKind.THRESHOLD:
        return threshold_class(grid)
    return interval_class(grid)


def bag_class(instances_class: FiniteClass, psi: BagFunction = BagFunction.max()) -> FiniteClass:
    """The bag-level class {psi o h : h in the instance class}"""
    if instances_class.domain_tag is not DomainTag.INSTANCE:
        raise ValueError("A bag class is built from an instance-level class")
    return FiniteClass([ComposedHypothesis(psi, h) for h in instances_class.hypotheses], DomainTag.BAG,
                       name=f"{psi.kind.value}_{instances_class.name}")


def instance_grid(n_grid: int, n_random: int = 0, seed: int = 0) -> np.ndarray:
    """Sorted 1-D pool: a regular grid on [0, 1] plus seeded uniform random points"""
    random_points = component_rng(seed, "complexity/grid").uniform(0, 1, n_random)
    return np.unique(np.concatenate((np.linspace(0, 1, n_grid), random_points)))


def _exact_bags(grid: np.ndarray, size: int, n_bags: int, seed: int) -> list[Bag]:
    if size == 1:
        return [Bag(f"s1-{i}", [[value]], 1) for i, value in enumerate(grid)]
    rng = component_rng(seed, f"complexity/bags/{size}")
    bags = []
    for i in range(n_bags):
        chosen = rng.choice(grid.size, size=size, replace=size > grid.size)
        bags.append(Bag(f"s{size}-{i}", grid[chosen].reshape(-1, 1), 1))
    return bags


def bag_pool(grid: np.ndarray, r: int, n_bags: int, seed: int, pool_kind: PoolKind) -> list[Bag]:
    """
    Builds a pool of bags over a 1-D grid.

    An exact pool holds n_bags bags of exactly r distinct grid points (every grid point as a singleton when r = 1).
    An up_to pool is the union of the exact pools of sizes 1 to r. Each size is drawn from its own seeded stream, so
    up_to pools are nested as r grows, whatever the sequence of r.
    """
    if r < 1:
        raise ValueError(f"Bag size must be positive, got {r}")
    grid = np.asarray(grid, dtype=float)
    if pool_kind is PoolKind.EXACT:
        return _exact_bags(grid, r, n_bags, seed)

    return [bag for size in range(1, r + 1) for bag in _exact_bags(grid, size, n_bags, seed)]


# ------- Shattering and VC dimension ------- #

def _pattern_count(codes: np.ndarray) -> int:
    return np.unique(codes).size


def shatters(finite_class: FiniteClass, points: Sequence) -> bool:
    """
    Tells whether the class realises all 2^k sign patterns on the k points (an output v counts as +1 when v >= 0).
    Realised patterns are collected in one pass over the hypotheses.

    :raise:
        ValueError: "exceeds brute-force budget" for more than 25 points
    """
    if len(points) > MAX_SHATTER_POINTS:
        raise ValueError("exceeds brute-force budget")
    bits = (finite_class.behaviours(points) >= 0).astype(np.int64)
    codes = bits @ (np.int64(1) << np.arange(len(points), dtype=np.int64))
    return _pattern_count(codes) == 2 ** len(points)


def _largest_shattered_from(bits: np.ndarray, k_max: int, first: int) -> int:
    """Size of the largest shattered subset whose smallest index is first (0 if the point alone is not shattered)"""
    n_points = bits.shape[1]
    best = 0

    def extend(codes: np.ndarray, k: int, start: int):
        nonlocal best
        best = max(best, k)
        if best >= k_max:
            return
        for j in range(start, n_points):
            if k + (n_points - j) <= best:
                return
            extended = codes * 2 + bits[:, j]
            # Only shattered subsets can be extended into larger shattered subsets
            if _pattern_count(extended) == 2 ** (k + 1):
                extend(extended, k + 1, j + 1)
                if best >= k_max:
                    return

    first_codes = bits[:, first].astype(np.int64)
    if _pattern_count(first_codes) == 2:
        extend(first_codes, 1, first + 1)
    return best


def vc_dimension(finite_class: FiniteClass, pool: Sequence, cap: int, threads: int = 1) -> int:
    """
    Largest k <= cap such that some k-subset of the pool is shattered, by exhaustive search over subsets, never
    extending a subset that is not shattered. The search is partitioned by the first point of the subsets.

    :raise:
        ValueError: If cap is outside [0, 12]
    """
    if not 0 <= cap <= MAX_VC_CAP:
        raise ValueError(f"cap must be in [0, {MAX_VC_CAP}], got {cap}")
    if cap == 0 or len(pool) == 0:
        return 0

    bits = (finite_class.behaviours(pool) >= 0).astype(np.int64)
    n_distinct = np.unique(bits, axis=0).shape[0]
    k_max = min(cap, len(pool), int(math.floor(math.log2(n_distinct))))
    if k_max == 0:
        return 0

    search = partial(_largest_shattered_from, bits, k_max)
    return max(thread_map(search, range(len(pool)), threads))


# ------- Covering number ------- #

def covering_number(finite_class: FiniteClass, sample: Sequence, epsilon: float) -> int:
    """
    Greedy cover size of the class in the empirical l-infinity metric d(h, g) = max_i |h(x_i) - g(x_i)|.

    Repeatedly picks the uncovered hypothesis covering the most uncovered hypotheses within epsilon (first index on
    ties). The result is an upper bound on the minimal cover size.

    :raise:
        ValueError: If epsilon <= 0 or the sample is empty
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if len(sample) == 0:
        raise ValueError("Covering number needs a non-empty sample")

    behaviours = finite_class.behaviours(sample)
    within = np.vstack([np.max(np.abs(behaviours - row), axis=1) <= epsilon for row in behaviours])

    uncovered = np.ones(len(behaviours), dtype=bool)
    cover_size = 0
    while uncovered.any():
        gains = np.where(uncovered, (within & uncovered).sum(axis=1), -1)
        centre = int(np.argmax(gains))
        uncovered &= ~within[centre]
        cover_size += 1
    return cover_size


# ------- Fat-shattering dimension ------- #

def _extend_states(states: list[np.ndarray], values: np.ndarray, gamma: float, k: int) -> list[np.ndarray]:
    """
    Extends the witness states of a gamma-shattered k-subset with a new point, trying every witness level.

    A state holds, per hypothesis, the code of the sign pattern it realises with margin gamma on the subset, or -1 if
    it misses the margin somewhere. Witness vectors leading to the same state are interchangeable.
    """
    extended = {}
    for codes in states:
        alive = codes >= 0
        for level in WITNESS_LEVELS:
            above = values - level >= gamma
            below = level - values >= gamma
            new_alive = alive & (above | below)
            new_codes = np.where(new_alive, codes * 2 + above, -1)
            if _pattern_count(new_codes[new_alive]) == 2 ** (k + 1):
                extended.setdefault(new_codes.tobytes(), new_codes)
    return list(extended.values())


def fat_shattering(finite_class: FiniteClass, pool: Sequence, gamma: float, cap: int) -> int:
    """
    Largest k <= cap such that some k-subset of the pool is gamma-shattered with a witness vector on the grid
    {-0.9, -0.8, ..., 0.9}: every sign pattern e is realised by some h with e_i (h(x_i) - s_i) >= gamma.

    :raise:
        ValueError: "exceeds brute-force budget" if cap > 6, or if gamma <= 0
    """
    if cap > MAX_FAT_CAP or cap < 0:
        raise ValueError("exceeds brute-force budget")
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")

    values = finite_class.behaviours(pool)
    n_points = values.shape[1]
    best = 0

    def extend(states: list[np.ndarray], k: int, start: int):
        nonlocal best
        best = max(best, k)
        for j in range(start, n_points):
            if best >= cap or k + (n_points - j) <= best:
                return
            new_states = _extend_states(states, values[:, j], gamma, k)
            if new_states:
                extend(new_states, k + 1, j + 1)

    if cap > 0:
        extend([np.zeros(values.shape[0], dtype=np.int64)], 0, 0)
    return best


# ------- Lab ------- #

def growth_table(kind: ClassKind, rs: Sequence[int], grid: np.ndarray, n_bags: int, seed: int, cap: int,
                 psi: BagFunction = BagFunction.max(), threads: int = 1) -> pd.DataFrame:
    """
    Measures d_r of the bag class psi o H for each r, on up_to and exact pools, next to d = d_1 of the instance
    class H on the grid.

    The fitted constant c = max over r of d_r / (log2(2r) * d) makes d_r <= c * log2(2r) * d hold on the table; it is
    reported for comparison, not as a proven bound.

    :return: DataFrame with columns r, pool_size, d_r_up_to, d_r_exact, c, bound
    """
    instances_class = instance_class(kind, grid)
    bags_class = bag_class(instances_class, psi)
    d = vc_dimension(instances_class, list(grid), cap, threads=threads)

    rows = []
    for r in rs:
        up_to_pool = bag_pool(grid, r, n_bags, seed, PoolKind.UP_TO)
        exact_pool = bag_pool(grid, r, n_bags, seed, PoolKind.EXACT)
        rows.append({
            "r": r,
            "pool_size": len(up_to_pool),
            "d_r_up_to": vc_dimension(bags_class, up_to_pool, cap, threads=threads),
            "d_r_exact": vc_dimension(bags_class, exact_pool, cap, threads=threads),
        })
        logger.info("%s: r=%d, d_r=%d (up to), %d (exact)", bags_class.name, r, rows[-1]["d_r_up_to"],
                    rows[-1]["d_r_exact"])

    table = pd.DataFrame(rows)
    log_factor = np.log2(2 * table["r"].to_numpy(dtype=float))
    c = float(np.max(table["d_r_up_to"] / (log_factor * d))) if d > 0 else float("nan")
    table["c"] = c
    table["bound"] = c * log_factor * d
    table.attrs["d"] = d
    return table


def run_lab(kinds: Sequence[ClassKind], rs: Sequence[int], grid: np.ndarray, n_bags: int, seed: int, cap: int,
            gamma: float, epsilon: float, fat_cap: int, psi: BagFunction = BagFunction.max(),
            threads: int = 1) -> pd.DataFrame:
    """
    Measures VC dimension, greedy covering number and fat-shattering dimension of the instance classes on the grid
    and of their bag classes on up_to and exact pools for every r.

    :return: DataFrame with the columns class, r, pool_size, metric, param, value, seed
    """
    rows = []

    def measure(finite_class: FiniteClass, class_name: str, r: int, pool: Sequence):
        rows.append([class_name, r, len(pool), "vc", cap, vc_dimension(finite_class, pool, cap, threads=threads),
                     seed])
        rows.append([class_name, r, len(pool), "cov", epsilon, covering_number(finite_class, pool, epsilon), seed])
        rows.append([class_name, r, len(pool), "fat", gamma,
                     fat_shattering(finite_class, pool, gamma, min(cap, fat_cap)), seed])

    for kind in kinds:
        instances_class = instance_class(kind, grid)
        measure(instances_class, kind.value, 1, list(grid))
        bags_class = bag_class(instances_class, psi)
        for r in rs:
            for pool_kind in PoolKind:
                measure(bags_class, f"{bags_class.name}/{pool_kind.value}", r,
                        bag_pool(grid, r, n_bags, seed, pool_kind))
        logger.info("Measured %s over r in %s", kind.value, list(rs))

    return pd.DataFrame(rows, columns=RESULTS_COLUMNS)


def plot_growth(table: pd.DataFrame, path: Path):
    """
    Plots measured d_r (up_to and exact pools) against r with the fitted log bound, saved as a PNG.

    :param table: Output of growth_table
    :param path: Path where the figure will be saved
    """
    fig = plt.figure()
    plt.plot(table["r"], table["d_r_up_to"], marker="o", label="d_r (up to r)")
    plt.plot(table["r"], table["d_r_exact"], marker="s", label="d_r (exactly r)")
    plt.plot(table["r"], table["bound"], linestyle="--", c="red", label="c log2(2r) d")
    plt.xscale("log", base=2)
    plt.xlabel("r")
    plt.ylabel("VC dimension")
    plt.legend()
    fig.suptitle(f"Growth of d_r (d = {table.attrs.get('d')})", fontsize=10)
    plt.savefig(path)
    plt.close()
