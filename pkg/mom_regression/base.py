"""Base estimators evaluated on a single block of data."""
from dataclasses import dataclass
from enum import Enum
from typing import ClassVar, Union

import numpy as np

from .core import Dataset, InvalidArgumentError, as_point, distances_to, order_by_distance, tie_uniforms
from .weights import WeightVector, bagged_weights, knn_weights


class EstimatorFamily(str, Enum):
    WEIGHTED = 'weighted'
    KNN = 'knn'
    BAGGED = 'bagged'
    MNN = 'mnn'
    KERNEL = 'kernel'
    PARTITION = 'partition'


def _check_count(name: str, value: int, block_size: int) -> None:
    if int(value) != value or not 1 <= value <= block_size:
        raise InvalidArgumentError(f"{name}={value!r} must be an integer in [1, N={block_size}]")


@dataclass(frozen=True)
class WeightedNN:
    weights: WeightVector
    family: ClassVar[EstimatorFamily] = EstimatorFamily.WEIGHTED

    def validate(self, block_size: int) -> None:
        if len(self.weights) != block_size:
            raise InvalidArgumentError(f"{len(self.weights)} weights for a block of {block_size} points")

    @property
    def parameter(self):
        return None


@dataclass(frozen=True)
class KNN:
    k: int
    family: ClassVar[EstimatorFamily] = EstimatorFamily.KNN

    def validate(self, block_size: int) -> None:
        _check_count('k', self.k, block_size)

    @property
    def parameter(self):
        return self.k


@dataclass(frozen=True)
class BaggedOneNN:
    k: int
    with_replacement: bool = True
    family: ClassVar[EstimatorFamily] = EstimatorFamily.BAGGED

    def validate(self, block_size: int) -> None:
        _check_count('k', self.k, block_size)

    @property
    def parameter(self):
        return self.k


@dataclass(frozen=True)
class MutualNN:
    k: int
    family: ClassVar[EstimatorFamily] = EstimatorFamily.MNN

    def validate(self, block_size: int) -> None:
        _check_count('k', self.k, block_size)

    @property
    def parameter(self):
        return self.k


@dataclass(frozen=True)
class Kernel:
    h: float
    family: ClassVar[EstimatorFamily] = EstimatorFamily.KERNEL

    def validate(self, block_size: int) -> None:
        if not self.h > 0:
            raise InvalidArgumentError(f"bandwidth h={self.h!r} must be positive")

    @property
    def parameter(self):
        return self.h


@dataclass(frozen=True)
class Partition:
    K: int
    family: ClassVar[EstimatorFamily] = EstimatorFamily.PARTITION

    def validate(self, block_size: int) -> None:
        if int(self.K) != self.K or self.K < 1:
            raise InvalidArgumentError(f"cells per axis K={self.K!r} must be a positive integer")

    @property
    def parameter(self):
        return self.K


BaseEstimatorKind = Union[WeightedNN, KNN, BaggedOneNN, MutualNN, Kernel, Partition]


def weighted_nn_predict(block: Dataset, x, v: WeightVector, tie_seed: int = 0) -> float:
    """sum_i v_i Y_(i)(x) over the block reordered by distance to x."""
    if len(v) != block.n:
        raise InvalidArgumentError(f"{len(v)} weights for a block of {block.n} points")
    order = order_by_distance(block, x, tie_seed)
    return float(np.dot(v.v, block.y[order.permutation]))


def mutual_neighbours(block: Dataset, x, k: int, tie_seed: int = 0) -> np.ndarray:
    """Indices of the block points that are mutual k-nearest neighbours of x.

    The query gets the last auxiliary uniform of the block's tie stream, so a
    distance tie between x and a data point is resolved like any other tie.
    """
    _check_count('k', k, block.n)
    N = block.n
    x = as_point(x, block.d)
    ties = tie_uniforms(tie_seed, N + 1)
    point_ties, query_tie = ties[:N], ties[N]
    to_query = distances_to(block.X, x)
    neighbours = np.lexsort((point_ties, to_query))[:k]
    # pairwise[r, j] = ||X_j - X_i|| for the r-th neighbour i
    pairwise = distances_to(block.X[neighbours][:, None, :], block.X[None, :, :])
    query_distance = to_query[neighbours][:, None]
    ahead = (pairwise < query_distance) | ((pairwise == query_distance) & (point_ties[None, :] < query_tie))
    ahead[np.arange(k), neighbours] = False
    return neighbours[ahead.sum(axis=1) < k]


def mnn_predict(block: Dataset, x, k: int, tie_seed: int = 0) -> float:
    mutual = mutual_neighbours(block, x, k, tie_seed)
    if mutual.size == 0:
        return 0.0
    return float(np.mean(block.y[np.sort(mutual)]))


def kernel_predict(block: Dataset, x, h: float) -> float:
    """Mean response over the closed ball B(x, h); 0 when the ball is empty."""
    if not h > 0:
        raise InvalidArgumentError(f"bandwidth h={h!r} must be positive")
    x = as_point(x, block.d)
    inside = distances_to(block.X, x) <= h
    if not inside.any():
        return 0.0
    return float(np.mean(block.y[inside]))


def cell_index(points: np.ndarray, K: int) -> np.ndarray:
    """Per-axis cell coordinates of points in [0,1]^d for the K^d cubic grid."""
    points = np.asarray(points, dtype=float)
    if np.any(points < 0) or np.any(points > 1):
        raise InvalidArgumentError("partitioning estimates need coordinates in [0, 1]")
    return np.minimum(np.floor(points * K).astype(np.int64), K - 1)


def partition_predict(block: Dataset, x, K: int) -> float:
    """Mean response over the block points sharing x's cell; 0 for an empty cell."""
    if int(K) != K or K < 1:
        raise InvalidArgumentError(f"cells per axis K={K!r} must be a positive integer")
    K = int(K)
    x = as_point(x, block.d)
    target = cell_index(x[None, :], K)[0]
    same_cell = np.all(cell_index(block.X, K) == target, axis=1)
    if not same_cell.any():
        return 0.0
    return float(np.mean(block.y[same_cell]))


def base_predict(kind: BaseEstimatorKind, block: Dataset, x, tie_seed: int = 0) -> float:
    kind.validate(block.n)
    if isinstance(kind, WeightedNN):
        return weighted_nn_predict(block, x, kind.weights, tie_seed)
    if isinstance(kind, KNN):
        return weighted_nn_predict(block, x, knn_weights(kind.k, block.n), tie_seed)
    if isinstance(kind, BaggedOneNN):
        weights = bagged_weights(kind.k, block.n, with_replacement=kind.with_replacement)
        return weighted_nn_predict(block, x, weights, tie_seed)
    if isinstance(kind, MutualNN):
        return mnn_predict(block, x, kind.k, tie_seed)
    if isinstance(kind, Kernel):
        return kernel_predict(block, x, kind.h)
    if isinstance(kind, Partition):
        return partition_predict(block, x, kind.K)
    raise InvalidArgumentError(f"unknown base estimator {kind!r}")


def _as_count(name: str, value) -> int:
    if value is None or int(value) != value:
        raise InvalidArgumentError(f"{name}={value!r} must be an integer")
    return int(value)


def make_kind(family: EstimatorFamily, parameter, with_replacement: bool = True) -> BaseEstimatorKind:
    """Build a base estimator from its family and tuning parameter."""
    try:
        family = EstimatorFamily(family)
    except ValueError:
        raise InvalidArgumentError(f"unknown estimator family {family!r}")
    if family is EstimatorFamily.KNN:
        return KNN(_as_count('k', parameter))
    if family is EstimatorFamily.BAGGED:
        return BaggedOneNN(_as_count('k', parameter), with_replacement=with_replacement)
    if family is EstimatorFamily.MNN:
        return MutualNN(_as_count('k', parameter))
    if family is EstimatorFamily.KERNEL:
        return Kernel(float(parameter))
    if family is EstimatorFamily.PARTITION:
        return Partition(_as_count('K', parameter))
    raise InvalidArgumentError("weighted rules take a WeightVector, not a scalar parameter")
