import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

import numpy as np

TOL = 1e-9  # Tolerance for the numerical guarantees checked during a run
GAMMA_CLAMP = 1e-12  # Edges are clamped to [-1 + GAMMA_CLAMP, 1 - GAMMA_CLAMP] before taking log-odds
TIE_TOL = 1e-12  # Relative gap (to the total weight) under which two weighted errors are a tie
THREADS_ENV_VAR = "MILBOOST_THREADS"

T = TypeVar("T")
R = TypeVar("R")


def bounded_value(value: float, min_value: float, max_value: float) -> float:
    """
    Returns the number the closest to value which is inside [min_value, max_value]

    :param value: The input value
    :param min_value: The lower bound
    :param max_value: The upper bound
    """
    assert max_value >= min_value
    return min(max_value, max(min_value, value))


def clamp_edge(gamma: float) -> float:
    """Clamps an edge (or a target margin) into the open interval where its log-odds are finite."""
    return bounded_value(value=gamma, min_value=-1 + GAMMA_CLAMP, max_value=1 - GAMMA_CLAMP)


def log_odds(gamma: float) -> float:
    """
    Returns 1/2 * ln((1 + gamma) / (1 - gamma)) for the clamped gamma

    :param gamma: An edge or margin in [-1, +1]
    """
    gamma = clamp_edge(gamma)
    return 0.5 * float(np.log((1 + gamma) / (1 - gamma)))


def assert_approx(actual: float, expected: float, tol: float = TOL):
    assert abs(actual - expected) <= tol, f"{actual} != {expected} (tolerance {tol})"


def assert_at_most(actual: float, bound: float, tol: float = TOL):
    assert actual <= bound + tol, f"{actual} > {bound} (tolerance {tol})"


def component_rng(seed: int, component: str) -> np.random.Generator:
    """
    Returns the random stream of a named component of a run.

    All randomness of a run flows from one integer seed. Each component (generator, pools, ...) gets its own PCG64
    stream, split from the run seed by a SeedSequence whose spawn key is the CRC32 of the component name. Two
    components therefore never share a stream, and a component's stream does not depend on what the others consumed.

    :param seed: Run seed (non-negative, up to 64 bits)
    :param component: Name of the component requesting randomness
    """
    if seed < 0:
        raise ValueError(f"Seed must be non-negative, got {seed}")
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=(zlib.crc32(component.encode("utf-8")),))
    return np.random.Generator(np.random.PCG64(sequence))


def thread_map(function: Callable[[T], R], items: Iterable[T], threads: int = 1) -> list[R]:
    """
    Applies function to every item, in a thread pool when threads > 1. Results are returned in input order so that
    any reduction made by the caller is independent of the thread count.

    :param function: Function applied to each item
    :param items: Items to process
    :param threads: Number of worker threads (1 runs sequentially)
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [function(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(function, items))


def first_minimum(errors: np.ndarray, tol: float) -> int:
    """
    Returns the index of the first error within tol of the smallest one, so that errors summed in a different order
    still break ties by position

    :param errors: Flat array of errors, np.inf marking infeasible entries
    :param tol: Absolute tie tolerance
    """
    errors = np.asarray(errors, dtype=float)
    return int(np.flatnonzero(errors <= errors.min() + tol)[0])
