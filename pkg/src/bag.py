from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

DISTRIBUTION_TOL = 1e-9


class BagFunctionKind(Enum):
    MAX = "max"
    AVG = "avg"
    PNORM = "pnorm"


@dataclass(frozen=True)
class BagFunction:
    """
    Combines the outputs of an instance hypothesis on the instances of a bag into a single bag output (psi).

    All kinds map [-1, +1]^r into [-1, +1], are permutation-invariant and monotone. PNORM uses the shift-by-one
    construction ((sum |v_i + 1|^p / r)^(1/p)) - 1, so that p = 1 gives AVG and p -> infinity tends to MAX.
    """
    kind: BagFunctionKind = BagFunctionKind.MAX
    p: float | None = None

    def __post_init__(self):
        if self.kind is BagFunctionKind.PNORM:
            if self.p is None or not np.isfinite(self.p) or self.p < 1:
                raise ValueError(f"PNorm bag function requires a finite p >= 1, got {self.p}")
        elif self.p is not None:
            raise ValueError(f"Parameter p is only meaningful for PNorm, got p={self.p} for {self.kind.value}")

    def __repr__(self):
        if self.kind is BagFunctionKind.PNORM:
            return f"PNorm({self.p})"
        return self.kind.value.capitalize()

    @classmethod
    def max(cls) -> BagFunction:
        return cls(BagFunctionKind.MAX)

    @classmethod
    def avg(cls) -> BagFunction:
        return cls(BagFunctionKind.AVG)

    @classmethod
    def pnorm(cls, p: float) -> BagFunction:
        return cls(BagFunctionKind.PNORM, float(p))

    def __call__(self, values: Sequence[float]) -> float:
        return apply_bag_function(self, values)

    def reduce(self, values: np.ndarray, offsets: np.ndarray) -> np.ndarray:
        """
        Applies psi to every bag of a stacked evaluation at once.

        :param values: Instance outputs of all bags, concatenated in bag order
        :param offsets: Start index of each bag in values (see stack_bags)

        :return: One output per bag
        """
        values = np.asarray(values, dtype=float)
        sizes = np.diff(np.append(offsets, len(values)))
        if np.any(sizes == 0):
            raise ValueError("empty bag")

        if self.kind is BagFunctionKind.MAX:
            return np.maximum.reduceat(values, offsets)
        if self.kind is BagFunctionKind.AVG:
            return np.add.reduceat(values, offsets) / sizes
        powered = np.abs(values + 1) ** self.p
        return (np.add.reduceat(powered, offsets) / sizes) ** (1 / self.p) - 1

    def to_json(self) -> str | dict:
        if self.kind is BagFunctionKind.PNORM:
            return {"pnorm": self.p}
        return self.kind.value

    @classmethod
    def from_json(cls, data: str | dict) -> BagFunction:
        """
        Builds a bag function from its JSON form: "max", "avg" or {"pnorm": p}

        :raise:
            ValueError: If the description is not one of the above
        """
        if isinstance(data, dict):
            if set(data) != {"pnorm"}:
                raise ValueError(f"Unknown bag function: {data}")
            return cls.pnorm(data["pnorm"])
        if data == "max":
            return cls.max()
        if data == "avg":
            return cls.avg()
        raise ValueError(f"Unknown bag function: {data!r}")


def apply_bag_function(psi: BagFunction, values: Sequence[float]) -> float:
    """
    Applies the bag function psi to the outputs of an instance hypothesis on one bag

    :param psi: Bag function
    :param values: Non-empty list of instance outputs, all in [-1, +1]

    :raise:
        ValueError: "empty bag" if values is empty

    :return: The bag output in [-1, +1]
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("empty bag")
    return float(psi.reduce(values, np.array([0]))[0])


@dataclass(frozen=True)
class Bag:
    """
    An ordered list of 1..R instances sharing one label in {-1, +1}.

    The order of the instances is kept for reproducibility only; no result depends on it.
    """
    bag_id: str
    instances: np.ndarray = field(repr=False)  # shape (r, d)
    label: int

    def __post_init__(self):
        instances = np.array(self.instances, dtype=float, ndmin=2)
        if instances.ndim != 2:
            raise ValueError(f"Bag '{self.bag_id}': instances must be a list of feature vectors")
        if instances.size == 0:
            raise ValueError("empty bag")
        if not np.all(np.isfinite(instances)):
            raise ValueError(f"Bag '{self.bag_id}' contains non-finite feature values")
        if self.label not in (-1, 1):
            raise ValueError(f"Bag '{self.bag_id}': label must be -1 or +1, got {self.label}")
        instances.setflags(write=False)
        object.__setattr__(self, "instances", instances)
        object.__setattr__(self, "label", int(self.label))

    def __len__(self):
        return self.instances.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Bag):
            return NotImplemented
        return (self.bag_id == other.bag_id and self.label == other.label
                and np.array_equal(self.instances, other.instances))

    def __hash__(self):
        return hash((self.bag_id, self.label, self.instances.tobytes()))

    @property
    def dimension(self) -> int:
        return self.instances.shape[1]


@dataclass(frozen=True)
class MILDataset:
    """A list of bags over a common instance dimension d, each bag holding at most max_bag_size (R) instances."""
    dimension: int
    max_bag_size: int
    bags: tuple[Bag, ...]

    def __post_init__(self):
        object.__setattr__(self, "bags", tuple(self.bags))
        if self.dimension < 1:
            raise ValueError(f"Dimension must be positive, got {self.dimension}")
        if self.max_bag_size < 1:
            raise ValueError(f"Maximum bag size must be positive, got {self.max_bag_size}")

        seen_ids = set()
        for bag in self.bags:
            if bag.dimension != self.dimension:
                raise ValueError(f"Bag '{bag.bag_id}' has dimension {bag.dimension}, expected {self.dimension}")
            if len(bag) > self.max_bag_size:
                raise ValueError(f"Bag '{bag.bag_id}' has {len(bag)} instances, more than R={self.max_bag_size}")
            if bag.bag_id in seen_ids:
                raise ValueError(f"Duplicated bag id '{bag.bag_id}'")
            seen_ids.add(bag.bag_id)

    def __len__(self):
        return len(self.bags)

    @classmethod
    def from_bags(cls, bags: Sequence[Bag], max_bag_size: int | None = None) -> MILDataset:
        """
        Builds a dataset whose dimension is read from the first bag. R defaults to the largest bag size.

        :raise:
            ValueError: "no bags" if bags is empty
        """
        if len(bags) == 0:
            raise ValueError("no bags")
        if max_bag_size is None:
            max_bag_size = max(len(bag) for bag in bags)
        return cls(dimension=bags[0].dimension, max_bag_size=max_bag_size, bags=tuple(bags))

    @property
    def labels(self) -> np.ndarray:
        return bag_labels(self.bags)


class BagDistribution:
    """A probability distribution over a sample of bags, one non-negative weight per bag in sample order."""

    def __init__(self, weights: Sequence[float]):
        weights = np.array(weights, dtype=float)
        if weights.ndim != 1 or weights.size == 0:
            raise ValueError("A bag distribution needs at least one weight")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ValueError("Bag distribution weights must be finite and non-negative")
        if abs(weights.sum() - 1) > DISTRIBUTION_TOL:
            raise ValueError(f"Bag distribution weights must sum to 1, got {weights.sum()}")
        weights.setflags(write=False)
        self._weights = weights

    def __repr__(self):
        return f"BagDistribution({self._weights.tolist()})"

    def __len__(self):
        return self._weights.size

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @classmethod
    def uniform(cls, size: int) -> BagDistribution:
        return cls(np.full(size, 1 / size))

    @classmethod
    def from_weights(cls, weights: Sequence[float]) -> BagDistribution:
        """
        Normalises non-negative weights into a distribution

        :raise:
            ValueError: If the weights are negative or all zero
        """
        weights = np.asarray(weights, dtype=float)
        total = weights.sum()
        if not np.isfinite(total) or total <= 0 or np.any(weights < 0):
            raise ValueError("Cannot normalise weights: they must be non-negative with a positive sum")
        return cls(weights / total)


def stack_bags(bags: Sequence[Bag]) -> tuple[np.ndarray, np.ndarray]:
    """
    Concatenates the instances of all bags, keeping bag order then within-bag order

    :return: (instance matrix of shape (n_instances, d), start offset of each bag)
    """
    if len(bags) == 0:
        raise ValueError("no bags")
    sizes = np.array([len(bag) for bag in bags])
    offsets = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    return np.vstack([bag.instances for bag in bags]), offsets


def bag_labels(bags: Sequence[Bag]) -> np.ndarray:
    return np.array([bag.label for bag in bags], dtype=float)
