"""Median-of-means wrapper, closed-form tuning, validity constants and confidence radii.

Every constant below is evaluated at call time from ``math.e`` so that each
formula can be read side by side with its derivation.
"""
import logging
import math
import sys
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .base import (
    BaggedOneNN, BaseEstimatorKind, EstimatorFamily, Kernel, KNN, MutualNN, Partition, WeightedNN,
    base_predict, cell_index, make_kind,
)
from .core import (
    ConfigurationError, Dataset, InvalidArgumentError, ResourceLimitError, as_point, derive_seed,
    get_setting, median_of, split_blocks,
)

logger = logging.getLogger(__name__)

E = math.e
# Inflation of the radius under contamination (the larger of the t and s factors).
ROBUST_INFLATION = 4 ** 3 * E ** 2 / 27
# p_{t+s}(x) <= 1/(4e^2) makes 2^m p^{m/2} equal e^{-m}.
BASE_FAILURE_PROBABILITY = 1 / (4 * E ** 2)
# Logs of exact powers of e land within a few ulps of an integer.
INTEGER_SNAP_ULPS = 16


@dataclass(frozen=True)
class ModelClass:
    """Known constants of the regression model: small-ball rho, noise sigma, dimension d.

    ``diameter`` is the support diameter D; ``alpha`` the doubling constant
    needed only by mutual nearest neighbours.
    """

    rho: float
    sigma: float
    d: int
    diameter: float = 1.0
    alpha: Optional[float] = None

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 1:
            raise InvalidArgumentError(f"dimension d={self.d!r} must be a positive integer")
        if not (self.rho > 0 and math.isfinite(self.rho)):
            raise InvalidArgumentError(f"rho={self.rho!r} must be positive")
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise InvalidArgumentError(f"sigma={self.sigma!r} must be non-negative")
        if not (self.diameter > 0 and math.isfinite(self.diameter)):
            raise InvalidArgumentError(f"diameter={self.diameter!r} must be positive")
        if self.rho > self.diameter ** (-self.d) * (1 + 1e-12):
            raise InvalidArgumentError(
                f"rho={self.rho!r} exceeds D^-d={self.diameter ** (-self.d)!r}: no law on a set of "
                "diameter D satisfies the small-ball condition"
            )
        if self.alpha is not None and not 0 < self.alpha <= 1:
            raise InvalidArgumentError(f"doubling constant alpha={self.alpha!r} must lie in (0, 1]")
        object.__setattr__(self, 'd', int(self.d))

    def require_alpha(self) -> float:
        if self.alpha is None:
            raise InvalidArgumentError("mutual nearest neighbours need the doubling constant alpha")
        return self.alpha


@dataclass(frozen=True)
class MoMConfig:
    m: int
    base: BaseEstimatorKind

    def validate(self, n: int) -> None:
        if int(self.m) != self.m or not 1 <= self.m <= n:
            raise InvalidArgumentError(f"block count m={self.m!r} must be an integer in [1, n={n}]")
        self.base.validate(n // self.m)


@dataclass(frozen=True)
class ConfidenceRadius:
    kind: EstimatorFamily
    radius: float
    constant_a: float
    delta: float
    m: int
    robust: bool = False


@dataclass(frozen=True)
class AdmissibleInterval:
    """Confidence levels [e^{-cn+1}, 1) for which the proposition applies."""

    lower: float
    upper: float = 1.0

    @property
    def empty(self) -> bool:
        return self.lower >= self.upper

    def contains(self, delta: float) -> bool:
        return self.lower <= delta < self.upper


KindLike = Union[EstimatorFamily, str, BaseEstimatorKind]


def family_of(kind: KindLike) -> EstimatorFamily:
    if isinstance(kind, EstimatorFamily):
        return kind
    if isinstance(kind, str):
        try:
            return EstimatorFamily(kind)
        except ValueError:
            raise InvalidArgumentError(f"unknown estimator family {kind!r}")
    family = getattr(kind, 'family', None)
    if family is None:
        raise InvalidArgumentError(f"unknown estimator {kind!r}")
    return family


def ceil_log(value: float) -> int:
    """ceil() that absorbs rounding in logs of exact powers of e (ln(1/e^-5) is 5).

    Only values within INTEGER_SNAP_ULPS relative machine epsilons of an integer
    are snapped; 3 + 1e-12 still rounds up to 4.
    """
    nearest = round(value)
    if math.isclose(value, nearest, rel_tol=INTEGER_SNAP_ULPS * sys.float_info.epsilon):
        return int(nearest)
    return math.ceil(value)


def select_m(delta: float) -> int:
    """m = ceil(ln(1/delta))."""
    if not 0 < delta < 1:
        raise InvalidArgumentError(f"delta={delta!r} must lie in (0, 1)")
    return max(1, ceil_log(-math.log(delta)))


def validity_constant(kind: KindLike, model: ModelClass) -> float:
    family = family_of(kind)
    rho, sigma, d = model.rho, model.sigma, model.d
    if family in (EstimatorFamily.KNN, EstimatorFamily.BAGGED):
        first = rho * (sigma / (4 * E * math.sqrt(2))) ** d
        second = 32 * E ** 2 / (sigma ** 2 * rho ** (2 / d)) if sigma > 0 else math.inf
    elif family is EstimatorFamily.MNN:
        alpha = model.require_alpha()
        first = rho * (sigma * alpha / (4 * E)) ** d
        second = 16 * E ** 2 / (alpha * sigma ** 2 * rho ** (2 / d)) if sigma > 0 else math.inf
    elif family is EstimatorFamily.KERNEL:
        first = rho * model.diameter ** (d + 2) / (8 * E ** 2 * sigma ** 2) if sigma > 0 else math.inf
        second = math.inf
    elif family is EstimatorFamily.PARTITION:
        first = rho * d / (2 ** (d + 3) * E ** 2 * sigma ** 2) if sigma > 0 else math.inf
        second = math.inf
    else:
        raise InvalidArgumentError(f"no validity constant for {family.value} rules")
    return min(first, second, 1.0)


def admissible_delta(kind: KindLike, model: ModelClass, n: int) -> AdmissibleInterval:
    if n < 1:
        raise InvalidArgumentError(f"sample size n={n!r} must be positive")
    c = validity_constant(kind, model)
    return AdmissibleInterval(lower=math.exp(-c * n + 1))


def _check_block_count(n: int, m: int) -> int:
    if int(m) != m or int(n) != n or not 1 <= m <= n:
        raise InvalidArgumentError(f"block count m={m!r} must be an integer in [1, n={n!r}]")
    return n // m


def _floor_in_range(raw: float, name: str, block_size: int) -> int:
    value = math.floor(raw) if math.isfinite(raw) else raw
    if not value >= 1:
        raise ConfigurationError(f"1 <= {name}", 1, raw, f"{name} = floor({raw!r}) is below 1")
    if value > block_size:
        raise ConfigurationError(
            f"{name} <= N", value, block_size, f"{name} = {value} exceeds the block size N = {block_size}"
        )
    return int(value)


def select_k_star_knn(model: ModelClass, n: int, m: int) -> int:
    N = _check_block_count(n, m)
    d = model.d
    raw = (model.sigma ** 2 / (32 * E ** 2)) ** (d / (d + 2)) * (model.rho * n / m) ** (2 / (d + 2))
    return _floor_in_range(raw, 'k*', N)


def select_k_star_bagged(model: ModelClass, n: int, m: int) -> int:
    N = _check_block_count(n, m)
    d = model.d
    if model.sigma == 0:
        raise ConfigurationError('sigma > 0', model.sigma, 0, "bagged k* is unbounded for noiseless data")
    raw = (32 * E ** 2 * n / (model.rho ** (2 / d) * model.sigma ** 2 * m)) ** (d / (d + 2))
    return _floor_in_range(raw, 'k*', N)


def select_k_star_mnn(model: ModelClass, n: int, m: int) -> int:
    N = _check_block_count(n, m)
    alpha = model.require_alpha()
    d = model.d
    raw = (alpha * model.sigma ** 2 / (16 * E ** 2)) ** (d / (d + 2)) * (model.rho * n / m) ** (2 / (d + 2))
    return _floor_in_range(raw, 'k*', N)


def select_h_star(model: ModelClass, n: int, m: int) -> float:
    _check_block_count(n, m)
    h = (8 * E ** 2 * model.sigma ** 2 * m / (model.rho * n)) ** (1 / (model.d + 2))
    if not h > 0:
        raise ConfigurationError('h* > 0', h, 0.0, "bandwidth h* vanishes for noiseless data")
    if h > model.diameter:
        raise ConfigurationError('h* <= D', h, model.diameter, f"bandwidth h*={h!r} exceeds the diameter")
    return h


def select_K_star(model: ModelClass, n: int, m: int) -> int:
    _check_block_count(n, m)
    d = model.d
    if model.sigma == 0:
        raise ConfigurationError('sigma > 0', model.sigma, 0, "K* is unbounded for noiseless data")
    raw = (model.rho * d * n / (2 ** (d + 3) * E ** 2 * model.sigma ** 2 * m)) ** (1 / (d + 2))
    value = math.floor(raw)
    if value < 1:
        raise ConfigurationError('1 <= K*', 1, raw, f"K* = floor({raw!r}) is below 1")
    return int(value)


def select_base(kind: KindLike, model: ModelClass, n: int, m: int, with_replacement: bool = True,
                clamp: bool = False) -> BaseEstimatorKind:
    """Base estimator with the closed-form tuning parameter for (n, m).

    With ``clamp`` an out-of-range parameter is pulled back into its legal
    range (and a warning logged) instead of raising.
    """
    family = family_of(kind)
    selectors = {
        EstimatorFamily.KNN: select_k_star_knn,
        EstimatorFamily.BAGGED: select_k_star_bagged,
        EstimatorFamily.MNN: select_k_star_mnn,
        EstimatorFamily.KERNEL: select_h_star,
        EstimatorFamily.PARTITION: select_K_star,
    }
    if family not in selectors:
        raise InvalidArgumentError(f"no tuning rule for {family.value} estimators")
    try:
        parameter = selectors[family](model, n, m)
    except ConfigurationError as exc:
        if not clamp:
            raise
        parameter = _clamped_parameter(family, exc, n, m, model)
        logger.warning("%s; using %s = %s instead", exc, _parameter_name(family), parameter)
    return make_kind(family, parameter, with_replacement=with_replacement)


def _parameter_name(family: EstimatorFamily) -> str:
    return {EstimatorFamily.KERNEL: 'h', EstimatorFamily.PARTITION: 'K'}.get(family, 'k')


def _clamped_parameter(family, error, n, m, model):
    if family is EstimatorFamily.KERNEL:
        return model.diameter if error.constraint == 'h* <= D' else model.diameter / max(1, n // m)
    if family is EstimatorFamily.PARTITION:
        return 1
    return 1 if error.constraint.startswith('1 <=') else n // m


def radius_constant(kind: KindLike, model: ModelClass) -> float:
    """The constant a of the matching proposition."""
    family = family_of(kind)
    if family is EstimatorFamily.KNN:
        return 32 * E ** 2 * math.sqrt(2)
    if family is EstimatorFamily.BAGGED:
        return 128 * E ** 3
    if family is EstimatorFamily.MNN:
        # alpha^(1/3) for every d, as stated for the mutual-NN proposition.
        return 64 * E ** 2 * model.require_alpha() ** (1 / 3)
    if family is EstimatorFamily.KERNEL:
        return 4 * E ** (2 / 3)
    if family is EstimatorFamily.PARTITION:
        return 16 * E * math.sqrt(model.d)
    raise InvalidArgumentError(f"no confidence radius for {family.value} rules")


def per_m_radius(kind: KindLike, model: ModelClass, n: int, m: int, robust: bool = False) -> float:
    """a * (sigma^2 m / (rho n))^(1/(d+2)): deviation threshold with probability <= e^-m."""
    radius = radius_constant(kind, model) * (model.sigma ** 2 * m / (model.rho * n)) ** (1 / (model.d + 2))
    return radius * ROBUST_INFLATION if robust else radius


def bound_radius(kind: KindLike, model: ModelClass, n: int, delta: float, robust: bool = False) -> ConfidenceRadius:
    family = family_of(kind)
    interval = admissible_delta(family, model, n)
    if not interval.contains(delta):
        raise ConfigurationError(
            'exp(-c n + 1) <= delta < 1', interval.lower, delta,
            f"delta={delta!r} is outside the admissible range [{interval.lower!r}, 1)",
        )
    m = select_m(delta)
    a = radius_constant(family, model)
    return ConfidenceRadius(
        kind=family,
        radius=per_m_radius(family, model, n, m, robust=robust),
        constant_a=a * ROBUST_INFLATION if robust else a,
        delta=delta,
        m=m,
        robust=robust,
    )


def tuned_radius(kind: BaseEstimatorKind, model: ModelClass, n: int, m: int) -> float:
    """Deviation bound t + s (probability <= e^-m) for an explicitly tuned base estimator."""
    N = _check_block_count(n, m)
    rho, sigma, d = model.rho, model.sigma, model.d
    if isinstance(kind, KNN):
        k = kind.k
        return 2 * E * sigma * math.sqrt(2 / k) + 16 * E ** 2 * (k * m / (rho * n)) ** (1 / d)
    if isinstance(kind, BaggedOneNN):
        if not kind.with_replacement:
            raise InvalidArgumentError("the bagged bound is only available for sampling with replacement")
        k = kind.k
        return 4 * E ** 2 * sigma * math.sqrt(2 * k * m / n) + 32 * E ** 3 / (rho * k) ** (1 / d)
    if isinstance(kind, MutualNN):
        k = kind.k
        return 4 * E * sigma * math.sqrt(model.require_alpha() / k) + 16 * E ** 2 * (k * m / (rho * n)) ** (1 / d)
    if isinstance(kind, Kernel):
        return 2 * E * math.sqrt(2 * sigma ** 2 * m / (rho * n * kind.h ** d)) + kind.h
    if isinstance(kind, Partition):
        K = kind.K
        return 2 * E * math.sqrt(2 ** (d + 1) * K ** d * sigma ** 2 * m / (rho * n)) + math.sqrt(d) / K
    if isinstance(kind, WeightedNN):
        v = kind.weights.v
        if v.size != N:
            raise InvalidArgumentError(f"{v.size} weights for blocks of {N} points")
        ranks = np.arange(1, N + 1)
        t = 2 * E * sigma * math.sqrt(2 * float(np.dot(v, v)))
        s = 16 * E ** 2 * float(np.dot(v, (ranks / (rho * (N + 1))) ** (1 / d)))
        return t + s
    raise InvalidArgumentError(f"unknown base estimator {kind!r}")


def uniform_partition_radius(model: ModelClass, n: int, m: int, K: int) -> float:
    """Threshold t + sqrt(d)/K exceeded by sup_x |r_mom(x) - r(x)| with probability <= e^-m."""
    _check_block_count(n, m)
    d = model.d
    t = E * math.sqrt(2 ** (d + 3) * model.sigma ** 2 * K ** (d + 2 * d / m) * m / (model.rho * n))
    return t + math.sqrt(d) / K


def adaptive_radius_knn(model: ModelClass, n: int, delta: float) -> float:
    """delta-independent k-NN guarantee (ceil of ln(1/((1 - 1/e) delta)) blocks)."""
    if not 0 < delta < 1:
        raise InvalidArgumentError(f"delta={delta!r} must lie in (0, 1)")
    blocks = max(1, ceil_log(math.log(1 / ((1 - math.exp(-1)) * delta))))
    return 64 * E ** 2 * math.sqrt(2) * (model.sigma ** 2 * blocks / (model.rho * n)) ** (1 / (model.d + 2))


# ---------------------------------------------------------------------------
# Median-of-means
# ---------------------------------------------------------------------------

def mom_block_predictions(dataset: Dataset, x, config: MoMConfig, seed: int = 0) -> np.ndarray:
    """Base prediction on each of the m blocks; block j breaks ties with seed child j."""
    config.validate(dataset.n)
    partition = split_blocks(dataset.n, config.m)
    return np.array([
        base_predict(config.base, dataset.block(indices), x, derive_seed(seed, j))
        for j, indices in enumerate(partition.blocks)
    ])


def mom_predict(dataset: Dataset, x, config: MoMConfig, seed: int = 0) -> float:
    return median_of(mom_block_predictions(dataset, x, config, seed))


def regular_grid(d: int, points_per_axis: int) -> np.ndarray:
    """Cell-centred regular grid of points_per_axis^d points in [0,1]^d."""
    axis = (np.arange(points_per_axis) + 0.5) / points_per_axis
    mesh = np.meshgrid(*([axis] * d), indexing='ij')
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def partition_cell_predictions(dataset: Dataset, m: int, K: int) -> np.ndarray:
    """MoM partitioning prediction for every one of the K^d cells (flattened C order)."""
    d = dataset.d
    cells = K ** d
    cap = int(get_setting('MOM_MAX_PARTITION_CELLS', 10 ** 6))
    if cells > cap:
        raise ResourceLimitError(f"K^d = {cells} cells exceeds the configured cap of {cap}")
    partition = split_blocks(dataset.n, m)
    flat = np.ravel_multi_index(cell_index(dataset.X, K).T, (K,) * d)
    predictions = np.zeros((m, cells))
    for j, indices in enumerate(partition.blocks):
        members = flat[indices.start:indices.stop]
        counts = np.bincount(members, minlength=cells)
        sums = np.bincount(members, weights=dataset.y[indices.start:indices.stop], minlength=cells)
        np.divide(sums, counts, out=predictions[j], where=counts > 0)
    rank = math.ceil(m / 2) - 1
    return np.sort(predictions, axis=0)[rank]


def sup_error_partition(dataset: Dataset, m: int, K: int, seed: int, truth: Callable,
                        grid: Optional[np.ndarray] = None) -> float:
    """sup over a grid of |r_mom(x) - r(x)| for partitioning MoM.

    The estimate is constant on each cell, so it is computed once per cell;
    ``truth`` is evaluated (vectorised) on the grid points. ``seed`` is accepted
    for interface symmetry: partitioning estimates involve no tie-breaking.
    """
    if int(K) != K or K < 1:
        raise InvalidArgumentError(f"cells per axis K={K!r} must be a positive integer")
    K = int(K)
    per_cell = partition_cell_predictions(dataset, m, K)
    if grid is None:
        grid = regular_grid(dataset.d, 4 * K)
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if grid.shape[1] != dataset.d:
        raise InvalidArgumentError(f"grid has dimension {grid.shape[1]}, expected {dataset.d}")
    flat = np.ravel_multi_index(cell_index(grid, K).T, (K,) * dataset.d)
    values = np.asarray(truth(grid), dtype=float).reshape(-1)
    return float(np.max(np.abs(per_cell[flat] - values)))
