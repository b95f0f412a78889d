"""Foundational types: datasets, the lower median, block splitting and distance ordering."""
import csv
import logging
import math
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple, Optional, Sequence, Union

import numpy as np
from django.conf import settings
from django.core.exceptions import ImproperlyConfigured

logger = logging.getLogger(__name__)


class MoMError(Exception):
    pass


class InvalidArgumentError(MoMError, ValueError):
    pass


class ConfigurationError(MoMError):
    """An admissibility constraint on (n, m, delta, tuning parameter) is violated.

    The inequality is kept as structured data: ``constraint`` names it and
    ``lhs``/``rhs`` carry the two evaluated sides.
    """

    def __init__(self, constraint: str, lhs: float, rhs: float, message: Optional[str] = None):
        self.constraint = constraint
        self.lhs = lhs
        self.rhs = rhs
        super().__init__(message or f"constraint violated: {constraint} (lhs={lhs!r}, rhs={rhs!r})")

    def as_dict(self) -> dict:
        return {'constraint': self.constraint, 'lhs': self.lhs, 'rhs': self.rhs, 'message': str(self)}


class ResourceLimitError(MoMError):
    pass


class ConsistencyError(MoMError):
    pass


def get_setting(name: str, default):
    """Read a project setting, falling back to ``default`` outside a configured Django."""
    try:
        return getattr(settings, name, default)
    except ImproperlyConfigured:
        return default


# ---------------------------------------------------------------------------
# Seeds
# ---------------------------------------------------------------------------

def _seed_sequence(seed: int, keys: Sequence[int]) -> np.random.SeedSequence:
    if seed is None or int(seed) < 0:
        raise InvalidArgumentError(f"seed must be a non-negative integer, got {seed!r}")
    return np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))


def derive_seed(seed: int, *keys: int) -> int:
    """Child seed of ``seed`` addressed by ``keys``.

    Children only depend on (seed, keys), never on the order in which they are
    requested, so trial and block seeds are the same for any worker count.
    """
    state = _seed_sequence(seed, keys).generate_state(2, dtype=np.uint32)
    return (int(state[0]) << 32) | int(state[1])


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Counter-based (Philox) generator for ``seed`` and ``keys``."""
    return np.random.Generator(np.random.Philox(_seed_sequence(seed, keys)))


def tie_uniforms(tie_seed: int, size: int) -> np.ndarray:
    """Auxiliary uniforms used to break exact distance ties."""
    return make_rng(tie_seed).random(size)


# ---------------------------------------------------------------------------
# Data types
# ---------------------------------------------------------------------------

Point = np.ndarray


class Sample(NamedTuple):
    x: Point
    y: float


def as_point(x, d: int) -> Point:
    point = np.atleast_1d(np.asarray(x, dtype=float))
    if point.shape != (d,):
        raise InvalidArgumentError(f"query point has shape {point.shape}, expected ({d},)")
    if not np.all(np.isfinite(point)):
        raise InvalidArgumentError("query point has non-finite coordinates")
    return point


@dataclass(frozen=True)
class Dataset:
    """Immutable ordered sample of (X_i, Y_i) pairs in dimension d.

    ``X`` has shape (n, d) and ``y`` shape (n,); both arrays are read-only.
    """

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        y = np.array(self.y, dtype=float).reshape(-1)
        if X.ndim != 2 or X.shape[1] < 1:
            raise InvalidArgumentError(f"features must be a (n, d) array, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise InvalidArgumentError(f"{X.shape[0]} feature rows but {y.shape[0]} responses")
        if X.shape[0] < 1:
            raise InvalidArgumentError("a dataset needs at least one sample")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InvalidArgumentError("dataset contains non-finite values")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, 'X', X)
        object.__setattr__(self, 'y', y)

    @classmethod
    def _wrap(cls, X: np.ndarray, y: np.ndarray) -> 'Dataset':
        # Arrays already validated by a parent dataset.
        dataset = object.__new__(cls)
        X = X.view()
        y = y.view()
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(dataset, 'X', X)
        object.__setattr__(dataset, 'y', y)
        return dataset

    @classmethod
    def from_samples(cls, samples: Iterable[Sample], d: Optional[int] = None) -> 'Dataset':
        samples = list(samples)
        if not samples:
            raise InvalidArgumentError("a dataset needs at least one sample")
        X = np.array([np.atleast_1d(np.asarray(s.x, dtype=float)) for s in samples])
        if d is not None and X.shape[1] != d:
            raise InvalidArgumentError(f"samples have dimension {X.shape[1]}, expected {d}")
        return cls(X, [s.y for s in samples])

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.n

    @property
    def samples(self) -> Iterator[Sample]:
        for i in range(self.n):
            yield Sample(self.X[i], float(self.y[i]))

    def block(self, indices: Union[range, slice, np.ndarray]) -> 'Dataset':
        """View of the samples at ``indices`` (contiguous ranges are not copied)."""
        if isinstance(indices, range) and indices.step == 1:
            indices = slice(indices.start, indices.stop)
        return Dataset._wrap(self.X[indices], self.y[indices])


# ---------------------------------------------------------------------------
# CSV format: header x1,...,xd,y (extra trailing columns are ignored)
# ---------------------------------------------------------------------------

_FEATURE_COLUMN = re.compile(r'^x(\d+)$')


def format_float(value: float) -> str:
    """17 significant digits: doubles survive a write/read cycle unchanged."""
    return f"{float(value):.17g}"


def _csv_layout(header: Sequence[str], path, require_response: bool = True) -> tuple:
    names = [h.strip() for h in header]
    features = []
    for position, name in enumerate(names):
        match = _FEATURE_COLUMN.match(name)
        if match:
            features.append((int(match.group(1)), position))
    if (require_response and 'y' not in names) or not features:
        raise InvalidArgumentError(f"{path}: header must look like x1,...,xd,y (got {','.join(names)})")
    features.sort()
    if [index for index, _ in features] != list(range(1, len(features) + 1)):
        raise InvalidArgumentError(f"{path}: feature columns must be x1..xd without gaps")
    return [position for _, position in features], (names.index('y') if 'y' in names else None)


def _read_rows(path, require_response: bool):
    try:
        handle = open(path, newline='')
    except OSError as exc:
        raise InvalidArgumentError(f"cannot read {path}: {exc.strerror}") from exc
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise InvalidArgumentError(f"{path}: empty file")
        feature_positions, response_position = _csv_layout(header, path, require_response)
        if not require_response:
            response_position = None
        width = max(feature_positions + [response_position or 0]) + 1
        X, y = [], []
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < width:
                raise InvalidArgumentError(f"{path}, line {line}: expected at least {width} columns, got {len(row)}")
            try:
                values = [float(row[p]) for p in feature_positions]
                if response_position is not None:
                    values.append(float(row[response_position]))
            except ValueError as exc:
                raise InvalidArgumentError(f"{path}, line {line}: {exc}") from exc
            if not all(math.isfinite(v) for v in values):
                raise InvalidArgumentError(f"{path}, line {line}: non-finite value")
            if response_position is not None:
                y.append(values.pop())
            X.append(values)
    if not X:
        raise InvalidArgumentError(f"{path}: no samples")
    return np.array(X), np.array(y)


def read_dataset_csv(path) -> Dataset:
    X, y = _read_rows(path, require_response=True)
    return Dataset(X, y)


def read_points_csv(path) -> np.ndarray:
    """Query points from a CSV with an x1,...,xd header (a y column, if any, is ignored)."""
    X, _ = _read_rows(path, require_response=False)
    return X


def write_dataset_csv(dataset: Dataset, handle) -> None:
    writer = csv.writer(handle, lineterminator='\n')
    writer.writerow([f"x{j + 1}" for j in range(dataset.d)] + ['y'])
    for x, y in dataset.samples:
        writer.writerow([format_float(v) for v in x] + [format_float(y)])


# ---------------------------------------------------------------------------
# Median, blocks, distance ordering
# ---------------------------------------------------------------------------

def median_of(values) -> float:
    """The ceil(m/2)-th smallest of ``values`` (always one of the inputs)."""
    array = np.asarray(values, dtype=float).reshape(-1)
    if array.size == 0:
        raise InvalidArgumentError("median of an empty list")
    rank = math.ceil(array.size / 2) - 1
    return float(np.partition(array, rank)[rank])


@dataclass(frozen=True)
class BlockPartition:
    n: int
    m: int
    block_size: int
    blocks: tuple

    @property
    def discarded(self) -> range:
        return range(self.m * self.block_size, self.n)


def split_blocks(n: int, m: int) -> BlockPartition:
    """m contiguous blocks of N = floor(n/m) indices; the trailing n - mN are dropped."""
    if int(m) != m or int(n) != n:
        raise InvalidArgumentError(f"n and m must be integers, got n={n!r}, m={m!r}")
    n, m = int(n), int(m)
    if m < 1 or m > n:
        raise InvalidArgumentError(f"block count m={m} must satisfy 1 <= m <= n={n}")
    size = n // m
    blocks = tuple(range(j * size, (j + 1) * size) for j in range(m))
    return BlockPartition(n=n, m=m, block_size=size, blocks=blocks)


def distances_to(points: np.ndarray, center: np.ndarray) -> np.ndarray:
    """Euclidean distances from each row of ``points`` to ``center``."""
    return np.sqrt(np.sum((points - center) ** 2, axis=-1))


@dataclass(frozen=True)
class DistanceOrder:
    permutation: np.ndarray
    distances: np.ndarray
    tie_seed: int


def order_by_distance(block, x, tie_seed: int = 0) -> DistanceOrder:
    """Sort a block by distance to ``x``; exact ties follow seeded auxiliary uniforms."""
    points = block.X if isinstance(block, Dataset) else np.atleast_2d(np.asarray(block, dtype=float))
    if points.shape[0] < 1:
        raise InvalidArgumentError("cannot order an empty block")
    x = as_point(x, points.shape[1])
    distances = distances_to(points, x)
    ties = tie_uniforms(tie_seed, points.shape[0])
    permutation = np.lexsort((ties, distances))
    return DistanceOrder(permutation=permutation, distances=distances[permutation], tie_seed=tie_seed)
