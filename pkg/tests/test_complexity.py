import itertools

import matplotlib
import numpy as np
import pytest

from src.bag import Bag, BagFunction
from src.complexity import (RESULTS_COLUMNS, ClassKind, DomainTag, FiniteClass, PoolKind, bag_class, bag_pool,
                            constant_class, covering_number, fat_shattering, growth_table, instance_grid,
                            interval_class, plot_growth, run_lab, shatters, threshold_class, vc_dimension)
from src.hypothesis import ComposedHypothesis, ConstantHypothesis, Stump

matplotlib.use("Agg")


def _realised_patterns(finite_class: FiniteClass, points: list) -> set:
    """Sign patterns realised on the points, one hypothesis at a time"""
    patterns = set()
    for h in finite_class.hypotheses:
        if finite_class.domain_tag is DomainTag.BAG:
            outputs = h.evaluate_many(points)
        else:
            outputs = h.predict(np.vstack([np.atleast_1d(p) for p in points]))
        patterns.add(tuple(bool(v >= 0) for v in outputs))
    return patterns


def _random_stumps(rng: np.random.Generator, size: int) -> list[Stump]:
    return [Stump(0, float(rng.uniform(-0.2, 1.2)), int(rng.choice([-1, 1]))) for _ in range(size)]


@pytest.fixture
def complexity_setup():
    grid = instance_grid(8)
    return {"grid": grid, "points": list(grid)}


# ------- Tests FiniteClass -------

def test_finite_class_needs_a_hypothesis():
    with pytest.raises(ValueError):
        FiniteClass([], DomainTag.INSTANCE)


def test_behaviours_shape(complexity_setup):
    finite_class = threshold_class(complexity_setup["grid"])
    behaviours = finite_class.behaviours(complexity_setup["points"])
    assert behaviours.shape == (len(finite_class), 8)
    assert set(np.unique(behaviours)) <= {-1., 1.}


# ------- Tests shatters -------

def test_single_polarity_thresholds_do_not_shatter_two_points():
    points = [0., 1.]
    single = threshold_class(np.array(points), polarities=(1,))
    assert not shatters(single, points)
    assert _realised_patterns(single, points) != set(itertools.product([False, True], repeat=2))


def test_both_polarities_shatter_two_points():
    points = [0., 1.]
    both = threshold_class(np.array(points))
    assert shatters(both, points)
    assert _realised_patterns(both, points) == set(itertools.product([False, True], repeat=2))


def test_shatters_single_point():
    assert shatters(constant_class(), [0.5])
    assert not shatters(FiniteClass([ConstantHypothesis(1)], DomainTag.INSTANCE), [0.5])


def test_shatters_empty_set():
    assert shatters(FiniteClass([ConstantHypothesis(1)], DomainTag.INSTANCE), [])


def test_shatters_budget():
    with pytest.raises(ValueError, match="exceeds brute-force budget"):
        shatters(constant_class(), list(np.linspace(0, 1, 26)))


# ------- Tests vc_dimension -------

def test_vc_single_polarity_thresholds():
    rng = np.random.default_rng(0)
    pool = list(rng.uniform(0, 1, 10))
    assert vc_dimension(threshold_class(np.array(pool), polarities=(1,)), pool, cap=12) == 1


def test_vc_constants_only(complexity_setup):
    assert vc_dimension(constant_class(), complexity_setup["points"], cap=12) == 1


def test_vc_both_polarity_thresholds_and_intervals(complexity_setup):
    grid, points = complexity_setup["grid"], complexity_setup["points"]
    assert vc_dimension(threshold_class(grid), points, cap=12) == 2
    assert vc_dimension(interval_class(grid), points, cap=12) == 2


def test_vc_respects_cap(complexity_setup):
    grid, points = complexity_setup["grid"], complexity_setup["points"]
    assert vc_dimension(interval_class(grid), points, cap=1) == 1
    assert vc_dimension(interval_class(grid), points, cap=0) == 0


def test_vc_cap_limit(complexity_setup):
    with pytest.raises(ValueError):
        vc_dimension(constant_class(), complexity_setup["points"], cap=13)


def test_vc_matches_brute_force_over_subsets():
    rng = np.random.default_rng(4)
    pool = list(np.linspace(0, 1, 6))
    for _ in range(10):
        finite_class = FiniteClass(_random_stumps(rng, 6), DomainTag.INSTANCE)
        expected = max(k for k in range(len(pool) + 1)
                       if any(shatters(finite_class, list(subset)) for subset in itertools.combinations(pool, k)))
        assert vc_dimension(finite_class, pool, cap=6) == expected


def test_vc_monotone_under_inclusion():
    rng = np.random.default_rng(50)
    pool = list(np.linspace(0, 1, 7))
    for _ in range(50):
        small = _random_stumps(rng, int(rng.integers(1, 5)))
        large = small + _random_stumps(rng, int(rng.integers(1, 5)))
        assert (vc_dimension(FiniteClass(large, DomainTag.INSTANCE), pool, cap=7)
                >= vc_dimension(FiniteClass(small, DomainTag.INSTANCE), pool, cap=7))


@pytest.mark.parametrize("threads", [2, 4])
def test_vc_thread_independent(complexity_setup, threads):
    grid = complexity_setup["grid"]
    finite_class = bag_class(interval_class(grid))
    pool = bag_pool(grid, 4, 6, 0, PoolKind.UP_TO)
    assert vc_dimension(finite_class, pool, cap=8, threads=threads) == vc_dimension(finite_class, pool, cap=8)


# ------- Tests pools and bag classes -------

def test_bag_pool_exact(complexity_setup):
    grid = complexity_setup["grid"]
    pool = bag_pool(grid, 4, 6, 0, PoolKind.EXACT)
    assert len(pool) == 6
    for bag in pool:
        assert len(bag) == 4
        assert len(np.unique(bag.instances)) == 4
        assert np.all(np.isin(bag.instances, grid))


def test_bag_pool_singletons(complexity_setup):
    pool = bag_pool(complexity_setup["grid"], 1, 6, 0, PoolKind.EXACT)
    assert len(pool) == 8
    assert all(len(bag) == 1 for bag in pool)


@pytest.mark.parametrize("rs", [[1, 2, 4, 8], [1, 2, 3, 4, 5], [3, 6], [2, 7]])
def test_bag_pool_up_to_is_nested(complexity_setup, rs):
    grid = complexity_setup["grid"]
    pools = [bag_pool(grid, r, 6, 0, PoolKind.UP_TO) for r in rs]
    for smaller, larger in zip(pools, pools[1:]):
        assert set(smaller) <= set(larger)
    assert sorted({len(bag) for bag in pools[-1]}) == list(range(1, rs[-1] + 1))


def test_growth_table_up_to_is_monotone_for_any_rs(complexity_setup):
    table = growth_table(ClassKind.INTERVAL, [1, 3, 5, 6], complexity_setup["grid"], 4, 0, cap=10)
    assert list(table["d_r_up_to"]) == sorted(table["d_r_up_to"])
    assert np.all(table["d_r_exact"] <= table["d_r_up_to"])


def test_bag_pool_is_deterministic(complexity_setup):
    grid = complexity_setup["grid"]
    assert bag_pool(grid, 4, 6, 1, PoolKind.EXACT) == bag_pool(grid, 4, 6, 1, PoolKind.EXACT)


def test_bag_class_requires_instance_class(complexity_setup):
    with pytest.raises(ValueError):
        bag_class(bag_class(threshold_class(complexity_setup["grid"])))


def test_bag_class_on_singletons_matches_instance_class(complexity_setup):
    grid = complexity_setup["grid"]
    instances_class = interval_class(grid)
    singletons = bag_pool(grid, 1, 6, 0, PoolKind.EXACT)
    assert (vc_dimension(bag_class(instances_class), singletons, cap=8)
            == vc_dimension(instances_class, list(grid), cap=8))


@pytest.mark.parametrize("kind", list(ClassKind))
def test_d_r_is_non_decreasing(complexity_setup, kind):
    grid = complexity_setup["grid"]
    instances_class = threshold_class(grid) if kind is ClassKind.THRESHOLD else interval_class(grid)
    d = vc_dimension(instances_class, list(grid), cap=10)
    measured = [vc_dimension(bag_class(instances_class), bag_pool(grid, r, 6, 0, PoolKind.UP_TO), cap=10)
                for r in (1, 2, 4, 8)]
    assert measured == sorted(measured)
    assert measured[0] >= d


# ------- Tests covering_number -------

def test_covering_large_epsilon(complexity_setup):
    assert covering_number(interval_class(complexity_setup["grid"]), complexity_setup["points"], 2.) == 1


def test_covering_small_epsilon_counts_distinct_behaviours(complexity_setup):
    finite_class = interval_class(complexity_setup["grid"])
    behaviours = finite_class.behaviours(complexity_setup["points"])
    distinct = np.unique(behaviours, axis=0).shape[0]
    assert covering_number(finite_class, complexity_setup["points"], 0.5) == distinct


def test_covering_bracketed_on_real_valued_classes():
    # Greedy sizes lie between 1 and the number of distinct behaviour vectors
    rng = np.random.default_rng(12)
    grid = np.linspace(0, 1, 5)
    bags = bag_pool(grid, 3, 5, 0, PoolKind.EXACT)
    for _ in range(10):
        hypotheses = [ComposedHypothesis(BagFunction.avg(), stump) for stump in _random_stumps(rng, 12)]
        finite_class = FiniteClass(hypotheses, DomainTag.BAG)
        distinct = np.unique(finite_class.behaviours(bags), axis=0).shape[0]
        assert covering_number(finite_class, bags, 0.1) == distinct
        for epsilon in (0.5, 0.7, 1., 1.5):
            assert 1 <= covering_number(finite_class, bags, epsilon) <= distinct
        assert covering_number(finite_class, bags, 2.) == 1


def test_covering_non_increasing_in_epsilon():
    rng = np.random.default_rng(13)
    points = list(np.linspace(0, 1, 6))
    for _ in range(10):
        finite_class = FiniteClass(_random_stumps(rng, 10), DomainTag.INSTANCE)
        sizes = [covering_number(finite_class, points, epsilon) for epsilon in (0.1, 0.5, 1., 1.5, 2., 3.)]
        assert sizes == sorted(sizes, reverse=True)


@pytest.mark.parametrize("epsilon", [0., -1.])
def test_covering_invalid_epsilon(complexity_setup, epsilon):
    with pytest.raises(ValueError):
        covering_number(constant_class(), complexity_setup["points"], epsilon)


# ------- Tests fat_shattering -------

@pytest.mark.parametrize("kind", list(ClassKind))
def test_fat_binary_class_reduces_to_vc(complexity_setup, kind):
    grid, points = complexity_setup["grid"], complexity_setup["points"]
    finite_class = threshold_class(grid) if kind is ClassKind.THRESHOLD else interval_class(grid)
    vc = vc_dimension(finite_class, points, cap=6)
    assert fat_shattering(finite_class, points, 1., cap=6) == vc
    assert fat_shattering(finite_class, points, 1e-6, cap=6) == vc


def test_fat_gamma_above_range(complexity_setup):
    assert fat_shattering(interval_class(complexity_setup["grid"]), complexity_setup["points"], 1.1, cap=6) == 0


def test_fat_real_valued_class():
    # Average of a stump over 2-instance bags takes values in {-1, 0, 1}
    grid = np.linspace(0, 1, 5)
    finite_class = bag_class(threshold_class(grid), BagFunction.avg())
    bags = bag_pool(grid, 2, 6, 0, PoolKind.EXACT)
    small_margin = fat_shattering(finite_class, bags, 0.1, cap=4)
    large_margin = fat_shattering(finite_class, bags, 0.9, cap=4)
    assert small_margin >= large_margin
    # With gamma = 0.9 only the outputs -1 and +1 separate from a witness
    assert large_margin <= vc_dimension(finite_class, bags, cap=4)


def test_fat_budget(complexity_setup):
    with pytest.raises(ValueError, match="exceeds brute-force budget"):
        fat_shattering(constant_class(), complexity_setup["points"], 0.5, cap=7)


def test_fat_invalid_gamma(complexity_setup):
    with pytest.raises(ValueError):
        fat_shattering(constant_class(), complexity_setup["points"], 0., cap=3)


# ------- Tests lab -------

def test_growth_table_interval(complexity_setup):
    table = growth_table(ClassKind.INTERVAL, [1, 2, 4, 8], complexity_setup["grid"], 6, 0, cap=10)
    assert list(table["r"]) == [1, 2, 4, 8]
    d = table.attrs["d"]
    assert d == 2
    assert list(table["d_r_up_to"]) == sorted(table["d_r_up_to"])
    c = table["c"].iloc[0]
    assert np.all(table["d_r_up_to"] <= c * np.log2(2 * table["r"]) * d + 1e-9)
    assert np.all(table["d_r_exact"] <= table["d_r_up_to"])


def test_run_lab_schema(complexity_setup):
    results = run_lab([ClassKind.INTERVAL], [1, 2], complexity_setup["grid"], 4, 0, cap=6, gamma=0.5, epsilon=0.5,
                      fat_cap=2)
    assert list(results.columns) == RESULTS_COLUMNS
    assert set(results["metric"]) == {"vc", "cov", "fat"}
    assert set(results["class"]) == {"interval", "max_interval/up_to", "max_interval/exact"}
    assert len(results) == 3 * (1 + 2 * 2)
    assert set(results["seed"]) == {0}


def test_plot_growth(tmp_path, complexity_setup):
    table = growth_table(ClassKind.THRESHOLD, [1, 2], complexity_setup["grid"], 4, 0, cap=6)
    plot_growth(table, tmp_path / "growth.png")
    assert (tmp_path / "growth.png").exists()


def test_instance_grid_is_seeded():
    np.testing.assert_array_equal(instance_grid(5, 3, seed=1), instance_grid(5, 3, seed=1))
    assert instance_grid(5, 3, seed=1).size == 8
    np.testing.assert_array_equal(instance_grid(3), [0., 0.5, 1.])


def test_bag_pool_invalid_size(complexity_setup):
    with pytest.raises(ValueError):
        bag_pool(complexity_setup["grid"], 0, 6, 0, PoolKind.EXACT)


def test_bag_pool_bags_are_bags(complexity_setup):
    assert all(isinstance(bag, Bag) for bag in bag_pool(complexity_setup["grid"], 2, 3, 0, PoolKind.UP_TO))
