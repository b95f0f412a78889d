"""Synthetic scenarios, contamination, adversarial lower-bound instances and Monte Carlo tail estimates.

Every trial draws from its own child seed ``derive_seed(scenario.seed, trial, stream)``
so the error matrix does not depend on how trials are spread over worker processes.
"""
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate, special, stats

from .adaptive import adaptive_predict, guarantee_width, m_delta
from .base import EstimatorFamily, make_kind
from .core import (
    ConsistencyError, Dataset, InvalidArgumentError, as_point, derive_seed, get_setting, make_rng,
)
from .mom import (
    ROBUST_INFLATION, ModelClass, MoMConfig, bound_radius, family_of, mom_predict, select_base, select_m,
    tuned_radius, validity_constant,
)

logger = logging.getLogger(__name__)

# Trial streams
DATA_STREAM, QUERY_STREAM, OUTLIER_STREAM, ESTIMATOR_STREAM = range(4)


def rho_unit_cube(d: int) -> float:
    """Small-ball constant of the uniform law on the unit cube."""
    if int(d) != d or d < 1:
        raise InvalidArgumentError(f"dimension d={d!r} must be a positive integer")
    return float(math.pi ** (d / 2) / (2 ** d * d ** (d / 2) * special.gamma(1 + d / 2)))


# ---------------------------------------------------------------------------
# Targets (1-Lipschitz, vectorised over (n, d) arrays)
# ---------------------------------------------------------------------------

def linear_target(X):
    return X[:, 0]


def zero_target(X):
    return np.zeros(X.shape[0])


def mean_coordinate_target(X):
    return X.mean(axis=1)


def sine_target(X):
    return np.sin(X[:, 0])


def distance_to_center_target(X):
    return np.sqrt(np.sum((X - 0.5) ** 2, axis=1))


TARGETS = {
    'linear': linear_target,
    'zero': zero_target,
    'mean_coordinate': mean_coordinate_target,
    'sine': sine_target,
    'distance_to_center': distance_to_center_target,
}


def resolve_target(target: Union[str, Callable]) -> Callable:
    if callable(target):
        return target
    try:
        return TARGETS[target]
    except KeyError:
        raise InvalidArgumentError(f"unknown target {target!r} (known: {', '.join(sorted(TARGETS))})")


# ---------------------------------------------------------------------------
# Scenario description
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseSpec:
    """Centred noise rescaled to variance exactly sigma^2."""

    family: str = 'gaussian'
    sigma: float = 1.0
    df: Optional[float] = None
    tail_index: Optional[float] = None

    FAMILIES = ('gaussian', 'student_t', 'pareto')

    def __post_init__(self):
        if self.family not in self.FAMILIES:
            raise InvalidArgumentError(f"unknown noise family {self.family!r}")
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise InvalidArgumentError(f"noise sigma={self.sigma!r} must be non-negative")
        if self.family == 'student_t' and not (self.df is not None and self.df > 2):
            raise InvalidArgumentError(f"Student-t noise needs df > 2 for a finite variance, got {self.df!r}")
        if self.family == 'pareto' and not (self.tail_index is not None and self.tail_index > 2):
            raise InvalidArgumentError(f"Pareto noise needs tail_index > 2, got {self.tail_index!r}")

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.sigma == 0:
            return np.zeros(size)
        if self.family == 'gaussian':
            return rng.normal(0.0, self.sigma, size)
        if self.family == 'student_t':
            return self.sigma * math.sqrt((self.df - 2) / self.df) * rng.standard_t(self.df, size)
        a = self.tail_index
        magnitude = 1.0 + rng.pareto(a, size)
        signs = np.where(rng.random(size) < 0.5, -1.0, 1.0)
        return self.sigma * math.sqrt((a - 2) / a) * signs * magnitude


@dataclass(frozen=True)
class QuerySpec:
    """Fixed query point (support centre when ``point`` is None) or a fresh X ~ mu per trial."""

    policy: str = 'fixed'
    point: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.policy not in ('fixed', 'random'):
            raise InvalidArgumentError(f"query policy must be 'fixed' or 'random', got {self.policy!r}")
        if self.point is not None:
            object.__setattr__(self, 'point', tuple(float(v) for v in np.atleast_1d(self.point)))

    def draw(self, rng: np.random.Generator, d: int, side: float) -> np.ndarray:
        if self.policy == 'random':
            return rng.uniform(0.0, side, d)
        if self.point is None:
            return np.full(d, side / 2)
        return as_point(self.point, d)


@dataclass(frozen=True)
class EstimatorSpec:
    """One MoM estimator under test.

    The block count is ``m`` or, failing that, select_m(delta). The tuning
    parameter is ``parameter`` or the closed-form choice for (n, m).
    """

    family: str = 'knn'
    delta: Optional[float] = None
    m: Optional[int] = None
    parameter: Optional[float] = None
    with_replacement: bool = True
    adaptive: bool = False
    robust: bool = False
    clamp: bool = False
    label: Optional[str] = None
    radius: Optional[float] = None

    def __post_init__(self):
        family = family_of(self.family)
        if family is EstimatorFamily.WEIGHTED:
            raise InvalidArgumentError("scenarios take knn, bagged, mnn, kernel or partition estimators")
        object.__setattr__(self, 'family', family.value)
        if self.delta is not None and not 0 < self.delta < 1:
            raise InvalidArgumentError(f"delta={self.delta!r} must lie in (0, 1)")
        if self.delta is None and self.m is None and not self.adaptive:
            raise InvalidArgumentError(f"estimator {self.name} needs delta or m")
        if self.adaptive and self.parameter is not None:
            raise InvalidArgumentError("adaptive estimators select their own tuning parameter")

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        name = f"{'adaptive-' if self.adaptive else 'mom-'}{self.family}"
        if self.m is not None:
            name += f"-m{self.m}"
        return name + ('-robust' if self.robust else '')

    def block_count(self) -> int:
        return int(self.m) if self.m is not None else select_m(self.delta)

    def resolve(self, model: ModelClass, n: int) -> MoMConfig:
        m = self.block_count()
        if self.parameter is not None:
            base = make_kind(self.family, self.parameter, with_replacement=self.with_replacement)
        else:
            base = select_base(self.family, model, n, m, with_replacement=self.with_replacement, clamp=self.clamp)
        config = MoMConfig(m, base)
        config.validate(n)
        return config

    def threshold(self, model: ModelClass, n: int) -> float:
        """Deviation level whose exceedance probability the theory bounds (or the fixed ``radius``)."""
        if self.radius is not None:
            return float(self.radius)
        if self.adaptive:
            if self.delta is None:
                raise InvalidArgumentError("adaptive threshold needs delta")
            return guarantee_width(self.family, model, n, self.delta)
        if self.parameter is None and self.delta is not None and self.m is None:
            return bound_radius(self.family, model, n, self.delta, robust=self.robust).radius
        radius = tuned_radius(self.resolve(model, n).base, model, n, self.block_count())
        return radius * ROBUST_INFLATION if self.robust else radius

    def predict(self, dataset: Dataset, x, model: ModelClass, seed: int) -> float:
        if self.adaptive:
            return adaptive_predict(dataset, x, self.family, model, seed, self.with_replacement).estimate
        return mom_predict(dataset, x, self.resolve(model, dataset.n), seed)


@dataclass(frozen=True)
class ContaminationSpec:
    """Replace ``n_outliers`` samples by (location, magnitude) pairs.

    ``block`` placement puts outlier t at offset t // m of block t mod m, so q
    outliers reach min(q, m) blocks; ``uniform`` picks indices at random.
    ``magnitude`` defaults to 1e6 sigma and ``location`` to a uniform point of S.
    """

    n_outliers: int = 0
    placement: str = 'block'
    magnitude: Optional[float] = None
    location: Optional[Tuple[float, ...]] = None
    blocks: Optional[int] = None

    def __post_init__(self):
        if int(self.n_outliers) != self.n_outliers or self.n_outliers < 0:
            raise InvalidArgumentError(f"n_outliers={self.n_outliers!r} must be a non-negative integer")
        if self.placement not in ('block', 'uniform'):
            raise InvalidArgumentError(f"placement must be 'block' or 'uniform', got {self.placement!r}")
        if self.location is not None:
            object.__setattr__(self, 'location', tuple(float(v) for v in np.atleast_1d(self.location)))


@dataclass(frozen=True)
class ScenarioSpec:
    scenario_id: str
    d: int
    n: int
    model: ModelClass
    estimators: Tuple[EstimatorSpec, ...]
    noise: NoiseSpec = NoiseSpec()
    target: Union[str, Callable] = 'linear'
    trials: int = 1000
    seed: int = 0
    query: QuerySpec = QuerySpec()
    contamination: Optional[ContaminationSpec] = None
    threshold: Optional[float] = None
    support_side: float = 1.0

    def __post_init__(self):
        if isinstance(self.estimators, EstimatorSpec):
            object.__setattr__(self, 'estimators', (self.estimators,))
        object.__setattr__(self, 'estimators', tuple(self.estimators))
        if not self.estimators:
            raise InvalidArgumentError(f"scenario {self.scenario_id!r} has no estimator")
        if int(self.d) != self.d or self.d < 1 or self.model.d != self.d:
            raise InvalidArgumentError(f"scenario dimension d={self.d!r} does not match the model (d={self.model.d})")
        if int(self.n) != self.n or self.n < 1:
            raise InvalidArgumentError(f"sample size n={self.n!r} must be a positive integer")
        if int(self.trials) != self.trials or self.trials < 1:
            raise InvalidArgumentError(f"trials={self.trials!r} must be a positive integer")
        if int(self.seed) != self.seed or self.seed < 0:
            raise InvalidArgumentError(f"seed={self.seed!r} must be a non-negative integer")
        if not self.support_side > 0:
            raise InvalidArgumentError(f"support_side={self.support_side!r} must be positive")
        if self.contamination is not None and self.contamination.n_outliers > self.n:
            raise InvalidArgumentError(f"{self.contamination.n_outliers} outliers for n={self.n}")
        resolve_target(self.target)

    @property
    def estimator(self) -> EstimatorSpec:
        return self.estimators[0]

    @property
    def regression_function(self) -> Callable:
        return resolve_target(self.target)


# ---------------------------------------------------------------------------
# Data generation and contamination
# ---------------------------------------------------------------------------

def generate_dataset(spec: ScenarioSpec, seed: Optional[int] = None) -> Dataset:
    """n i.i.d. samples X ~ Unif([0, side]^d), Y = r(X) + noise."""
    rng = make_rng(spec.seed if seed is None else seed)
    X = rng.uniform(0.0, spec.support_side, (spec.n, spec.d))
    y = np.asarray(spec.regression_function(X), dtype=float) + spec.noise.draw(rng, spec.n)
    return Dataset(X, y)


def outlier_budget_ok(m: int, n_outliers: int) -> bool:
    return m >= 4 * n_outliers


def outlier_indices(n: int, spec: ContaminationSpec, m: int, rng: np.random.Generator) -> np.ndarray:
    q = int(spec.n_outliers)
    if q > n:
        raise InvalidArgumentError(f"{q} outliers for a dataset of {n} samples")
    if q == 0:
        return np.zeros(0, dtype=np.int64)
    if spec.placement == 'uniform':
        return np.sort(rng.choice(n, size=q, replace=False))
    block_size = n // m
    t = np.arange(q)
    if (q - 1) // m >= block_size:
        raise InvalidArgumentError(f"{q} outliers do not fit in {m} blocks of {block_size}")
    return np.sort((t % m) * block_size + t // m)


def contaminate(dataset: Dataset, spec: ContaminationSpec, seed: int, m: Optional[int] = None,
                sigma: float = 1.0, side: float = 1.0) -> Tuple[Dataset, np.ndarray]:
    """Dataset with the outlier samples replaced, and the sorted outlier indices."""
    if spec.n_outliers > dataset.n:
        raise InvalidArgumentError(f"{spec.n_outliers} outliers for a dataset of {dataset.n} samples")
    if spec.n_outliers == 0:
        return dataset, np.zeros(0, dtype=np.int64)
    rng = make_rng(seed)
    m = int(spec.blocks or m or 1)
    indices = outlier_indices(dataset.n, spec, m, rng)
    X = dataset.X.copy()
    y = dataset.y.copy()
    if spec.location is None:
        X[indices] = rng.uniform(0.0, side, (indices.size, dataset.d))
    else:
        X[indices] = as_point(spec.location, dataset.d)
    y[indices] = spec.magnitude if spec.magnitude is not None else 1e6 * sigma
    return Dataset(X, y), indices


# ---------------------------------------------------------------------------
# Monte Carlo trials
# ---------------------------------------------------------------------------

def trial_dataset(spec: ScenarioSpec, trial: int) -> Dataset:
    dataset = generate_dataset(spec, derive_seed(spec.seed, trial, DATA_STREAM))
    if spec.contamination is not None and spec.contamination.n_outliers:
        placement_m = spec.contamination.blocks or spec.estimator.block_count()
        dataset, _ = contaminate(
            dataset, spec.contamination, derive_seed(spec.seed, trial, OUTLIER_STREAM),
            m=placement_m, sigma=spec.noise.sigma, side=spec.support_side,
        )
    return dataset


def _check_adaptive_guarantee(estimator: EstimatorSpec, spec: ScenarioSpec, dataset: Dataset, x, truth: float,
                              seed: int) -> float:
    result = adaptive_predict(dataset, x, estimator.family, spec.model, seed, estimator.with_replacement)
    if estimator.delta is not None:
        c = validity_constant(estimator.family, spec.model)
        level = m_delta(estimator.delta, c, dataset.n)
        covering = [i for i in result.intervals if i.m >= level]
        if covering and covering[0].m == level and all(truth in i for i in covering):
            width = 2 * covering[0].half_width
            if abs(result.estimate - truth) > width * (1 + 1e-12):
                raise ConsistencyError(
                    f"adaptive estimate {result.estimate!r} is {abs(result.estimate - truth)!r} from r(x), "
                    f"beyond the interval width {width!r} at m={level}"
                )
    return result.estimate


def run_trial(spec: ScenarioSpec, trial: int) -> np.ndarray:
    """Absolute errors |r_hat(x) - r(x)| of every estimator on one shared replication."""
    dataset = trial_dataset(spec, trial)
    x = spec.query.draw(make_rng(derive_seed(spec.seed, trial, QUERY_STREAM)), spec.d, spec.support_side)
    truth = float(np.asarray(spec.regression_function(x[None, :]), dtype=float)[0])
    tie_seed = derive_seed(spec.seed, trial, ESTIMATOR_STREAM)
    errors = np.empty(len(spec.estimators))
    for e, estimator in enumerate(spec.estimators):
        if estimator.adaptive:
            estimate = _check_adaptive_guarantee(estimator, spec, dataset, x, truth, tie_seed)
        else:
            estimate = estimator.predict(dataset, x, spec.model, tie_seed)
        errors[e] = abs(estimate - truth)
    return errors


def _run_trial_args(args):
    return run_trial(*args)


def default_jobs() -> int:
    return int(get_setting('MOM_DEFAULT_JOBS', 1))


def run_trials(spec: ScenarioSpec, estimators: Optional[Sequence[EstimatorSpec]] = None,
               trials: Optional[int] = None, seed: Optional[int] = None, jobs: Optional[int] = None) -> np.ndarray:
    """(trials x estimators) matrix of absolute errors.

    Rows come back in trial order for any ``jobs``; workers only change wall time.
    """
    changes = {}
    if estimators is not None:
        changes['estimators'] = tuple(estimators)
    if trials is not None:
        changes['trials'] = trials
    if seed is not None:
        changes['seed'] = seed
    if changes:
        spec = replace(spec, **changes)
    jobs = default_jobs() if jobs is None else int(jobs)
    if jobs < 1:
        raise InvalidArgumentError(f"jobs={jobs!r} must be at least 1")
    for estimator in spec.estimators:
        if not estimator.adaptive:
            estimator.resolve(spec.model, spec.n)
    work = [(spec, t) for t in range(spec.trials)]
    logger.debug("scenario %s: %d trials x %d estimators on %d worker(s)",
                 spec.scenario_id, spec.trials, len(spec.estimators), jobs)
    if jobs == 1:
        rows = [run_trial(s, t) for s, t in work]
    else:
        chunksize = max(1, spec.trials // (jobs * 8))
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_trial_args, work, chunksize=chunksize))
    return np.vstack(rows)


# ---------------------------------------------------------------------------
# Tail probabilities
# ---------------------------------------------------------------------------

def cp_level() -> float:
    return float(get_setting('MOM_CP_LEVEL', 0.95))


def clopper_pearson(successes: int, trials: int, level: Optional[float] = None) -> Tuple[float, float]:
    """Exact two-sided binomial interval from Beta quantiles."""
    if trials < 1 or not 0 <= successes <= trials:
        raise InvalidArgumentError(f"need 0 <= successes <= trials, trials >= 1 (got {successes}, {trials})")
    level = cp_level() if level is None else level
    if not 0 < level < 1:
        raise InvalidArgumentError(f"confidence level {level!r} must lie in (0, 1)")
    alpha = 1 - level
    lower = 0.0 if successes == 0 else float(stats.beta.ppf(alpha / 2, successes, trials - successes + 1))
    upper = 1.0 if successes == trials else float(stats.beta.ppf(1 - alpha / 2, successes + 1, trials - successes))
    return lower, upper


@dataclass(frozen=True)
class TailEstimate:
    exceedances: int
    trials: int
    point: float
    lower: float
    upper: float
    level: float

    @classmethod
    def from_counts(cls, exceedances: int, trials: int, level: Optional[float] = None) -> 'TailEstimate':
        level = cp_level() if level is None else level
        lower, upper = clopper_pearson(exceedances, trials, level)
        return cls(exceedances=int(exceedances), trials=int(trials), point=exceedances / trials,
                   lower=lower, upper=upper, level=level)

    @classmethod
    def from_errors(cls, errors, threshold: float, level: Optional[float] = None) -> 'TailEstimate':
        errors = np.asarray(errors, dtype=float).reshape(-1)
        return cls.from_counts(int(np.count_nonzero(errors >= threshold)), errors.size, level)


def zero_exceedance_upper(trials: int, level: Optional[float] = None) -> float:
    return clopper_pearson(0, trials, level)[1]


def warn_if_underpowered(trials: int, delta: Optional[float], label: str, level: Optional[float] = None) -> bool:
    """Warn when even zero exceedances cannot resolve probabilities near delta."""
    if delta is None:
        return False
    best = zero_exceedance_upper(trials, level)
    if best > delta / 100:
        logger.warning(
            "%s: %d trials are underpowered for delta=%.6g (zero exceedances only certify p <= %.3g)",
            label, trials, delta, best,
        )
        return True
    return False


@dataclass(frozen=True)
class TailResult:
    scenario_id: str
    estimator: str
    n: int
    d: int
    delta: Optional[float]
    threshold: float
    tail: TailEstimate
    wall_time_ms: int = 0

    def as_row(self) -> dict:
        return {
            'scenario_id': self.scenario_id,
            'estimator': self.estimator,
            'n': self.n,
            'd': self.d,
            'delta': self.delta,
            'threshold': self.threshold,
            'exceedances': self.tail.exceedances,
            'trials': self.tail.trials,
            'cp_lower': self.tail.lower,
            'cp_upper': self.tail.upper,
            'wall_time_ms': self.wall_time_ms,
        }

    @property
    def certified(self) -> bool:
        return self.delta is not None and self.tail.upper <= self.delta


def scenario_thresholds(spec: ScenarioSpec) -> List[float]:
    if spec.threshold is not None:
        return [float(spec.threshold)] * len(spec.estimators)
    return [estimator.threshold(spec.model, spec.n) for estimator in spec.estimators]


def tail_report(spec: ScenarioSpec, jobs: Optional[int] = None, timing: Optional[bool] = None) -> List[TailResult]:
    """One TailResult per estimator of the scenario, sharing the same replications."""
    thresholds = scenario_thresholds(spec)
    timing = bool(get_setting('MOM_REPORT_WALL_TIME', True)) if timing is None else timing
    started = time.perf_counter()
    errors = run_trials(spec, jobs=jobs)
    elapsed = int(round((time.perf_counter() - started) * 1000)) if timing else 0
    results = []
    for e, (estimator, threshold) in enumerate(zip(spec.estimators, thresholds)):
        warn_if_underpowered(spec.trials, estimator.delta, f"{spec.scenario_id}/{estimator.name}")
        results.append(TailResult(
            scenario_id=spec.scenario_id,
            estimator=estimator.name,
            n=spec.n,
            d=spec.d,
            delta=estimator.delta,
            threshold=threshold,
            tail=TailEstimate.from_errors(errors[:, e], threshold),
            wall_time_ms=elapsed,
        ))
    return results


def estimate_tail(spec: ScenarioSpec, threshold: Optional[float] = None, query: Optional[QuerySpec] = None,
                  trials: Optional[int] = None, seed: Optional[int] = None, jobs: Optional[int] = None) -> TailEstimate:
    """Empirical P(|r_hat(x) - r(x)| >= threshold) for the scenario's first estimator."""
    changes = {'estimators': (spec.estimator,)}
    if threshold is not None:
        changes['threshold'] = threshold
    if query is not None:
        changes['query'] = query
    if trials is not None:
        changes['trials'] = trials
    if seed is not None:
        changes['seed'] = seed
    return tail_report(replace(spec, **changes), jobs=jobs, timing=False)[0].tail


# ---------------------------------------------------------------------------
# Nearest-neighbour distances
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NNDistanceCheck:
    mean: float
    stderr: float
    bound: float

    def holds(self, standard_errors: float = 3.0) -> bool:
        return self.mean <= self.bound + standard_errors * self.stderr


def expected_nn_distance_check(d: int, N: int, i: int, trials: int, seed: int, x=None,
                               rho: Optional[float] = None, chunk: int = 2000) -> NNDistanceCheck:
    """Monte Carlo E[D_(i)(x)] for N uniform points on [0,1]^d against 2 (i / (rho (N+1)))^(1/d)."""
    if not 1 <= i <= N:
        raise InvalidArgumentError(f"rank i={i!r} must lie in [1, N={N}]")
    if trials < 2:
        raise InvalidArgumentError("need at least two trials for a standard error")
    rho = rho_unit_cube(d) if rho is None else rho
    x = np.full(d, 0.5) if x is None else as_point(x, d)
    rng = make_rng(seed)
    samples = np.empty(trials)
    for start in range(0, trials, chunk):
        size = min(chunk, trials - start)
        points = rng.random((size, N, d))
        distances = np.sqrt(np.sum((points - x) ** 2, axis=2))
        samples[start:start + size] = np.partition(distances, i - 1, axis=1)[:, i - 1]
    return NNDistanceCheck(
        mean=float(samples.mean()),
        stderr=float(samples.std(ddof=1) / math.sqrt(trials)),
        bound=2 * (i / (rho * (N + 1))) ** (1 / d),
    )


# ---------------------------------------------------------------------------
# Lower-bound instance
# ---------------------------------------------------------------------------

def lower_bound_g(x) -> np.ndarray:
    """Distance to the boundary of [-1/2, 1/2]^d inside the cube, 0 outside."""
    points = np.asarray(x, dtype=float)
    return np.clip(np.min(0.5 - np.abs(points), axis=-1), 0.0, None)


class AdversarialRegression:
    """sum_j c_j h g((x - a_j) / h) over the ceil(1/h)^d cells of side h tiling S = [0, h ceil(1/h)]^d."""

    def __init__(self, signs, h: float, d: int):
        if not h > 0:
            raise InvalidArgumentError(f"cell side h={h!r} must be positive")
        self.h = float(h)
        self.d = int(d)
        self.cells_per_axis = math.ceil(1 / self.h)
        self.side = self.h * self.cells_per_axis
        signs = np.asarray(signs, dtype=float).reshape(-1)
        if signs.size != self.cells_per_axis ** self.d:
            raise InvalidArgumentError(f"{signs.size} signs for {self.cells_per_axis ** self.d} cells")
        if not np.all(np.abs(signs) == 1):
            raise InvalidArgumentError("signs must be +1 or -1")
        self.signs = signs

    @property
    def cells(self) -> int:
        return self.signs.size

    def with_sign(self, cell: int, sign: int) -> 'AdversarialRegression':
        signs = self.signs.copy()
        signs[cell] = sign
        return AdversarialRegression(signs, self.h, self.d)

    def __call__(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        inside = np.all((X >= 0) & (X <= self.side), axis=1)
        index = np.minimum(np.floor(X / self.h).astype(np.int64), self.cells_per_axis - 1)
        index = np.clip(index, 0, self.cells_per_axis - 1)
        centers = (index + 0.5) * self.h
        flat = np.ravel_multi_index(index.T, (self.cells_per_axis,) * self.d)
        values = self.signs[flat] * self.h * lower_bound_g((X - centers) / self.h)
        return np.where(inside, values, 0.0)


def level_set_volume(t: float, d: int) -> float:
    """Volume of {g > t} inside [-1/2, 1/2]^d."""
    return max(0.0, 1 - 2 * t) ** d


def g_squared_integral(d: int) -> float:
    """Integral of g^2 over the cube by quadrature of the layer-cake form 2t vol{g > t}."""
    value, _ = integrate.quad(lambda t: 2 * t * level_set_volume(t, d), 0.0, 0.5, epsabs=0.0, epsrel=1e-12)
    return value


def _log_term(d: int, delta: float) -> float:
    if not 0 < delta <= 2.0 ** (-(d + 3)):
        raise InvalidArgumentError(f"delta={delta!r} must lie in (0, 2^-{d + 3}]")
    return max(0.0, math.log(1 / (2 ** (d + 3) * delta)))


def lower_bound_h(sigma: float, d: int, n: int, delta: float) -> float:
    log_term = _log_term(d, delta)
    if log_term == 0:
        logger.warning("delta = 2^-%d puts the lower-bound instance at h = 0 (degenerate)", d + 3)
        return 0.0
    return (math.pi * sigma ** 2 * (d + 1) * (d + 2) * log_term / n) ** (1 / (d + 2))


def lower_bound_threshold(sigma: float, d: int, n: int, delta: float) -> float:
    return 0.25 * (sigma ** 2 * _log_term(d, delta) / n) ** (1 / (d + 2))


def bayes_error_floor(sigma: float, d: int, n: int, delta: float) -> float:
    """Gaussian-tail floor 2^-(d+1) Phi(-sqrt(pi/2 ln(1/(2^(d+3) delta)))); at least delta."""
    return float(stats.norm.cdf(-math.sqrt(math.pi / 2 * _log_term(d, delta)))) / 2 ** (d + 1)


def lower_bound_scenario(d: int, sigma: float, n: int, delta: float, estimator: EstimatorSpec, trials: int,
                         seed: int, signs=None) -> Tuple[ScenarioSpec, float]:
    h = lower_bound_h(sigma, d, n, delta)
    threshold = lower_bound_threshold(sigma, d, n, delta)
    if h == 0:
        side = 1.0
        target = 'zero'
    else:
        cells_per_axis = math.ceil(1 / h)
        side = h * cells_per_axis
        signs = np.ones(cells_per_axis ** d) if signs is None else signs
        target = AdversarialRegression(signs, h, d)
    model = ModelClass(rho=rho_unit_cube(d) / side ** d, sigma=sigma, d=d, diameter=side * math.sqrt(d))
    spec = ScenarioSpec(
        scenario_id=f"lower-bound-d{d}-n{n}",
        d=d,
        n=n,
        model=model,
        estimators=(estimator,),
        noise=NoiseSpec('gaussian', sigma),
        target=target,
        trials=trials,
        seed=seed,
        query=QuerySpec('random'),
        threshold=threshold,
        support_side=side,
    )
    return spec, h


def search_adversarial_signs(spec: ScenarioSpec, pilot_trials: int, jobs: Optional[int] = None) -> AdversarialRegression:
    """Greedy per-cell sign choice maximising the pilot exceedance count.

    Both signs of a cell are scored on the same pilot seed.
    """
    target = spec.target
    if not isinstance(target, AdversarialRegression):
        return target
    pilot_seed = derive_seed(spec.seed, 0x5167)
    for cell in range(target.cells):
        scores = {}
        for sign in (1, -1):
            candidate = target.with_sign(cell, sign)
            errors = run_trials(replace(spec, target=candidate), trials=pilot_trials, seed=pilot_seed, jobs=jobs)
            scores[sign] = int(np.count_nonzero(errors[:, 0] >= spec.threshold))
        best = 1 if scores[1] >= scores[-1] else -1
        target = target.with_sign(cell, best)
        logger.debug("cell %d: exceedances %s, keeping sign %+d", cell, scores, best)
    return target


@dataclass(frozen=True)
class LowerBoundReport:
    d: int
    sigma: float
    n: int
    delta: float
    h: float
    cells: int
    threshold: float
    bayes_floor: float
    signs: Tuple[int, ...]
    result: TailResult

    @property
    def tail(self) -> TailEstimate:
        return self.result.tail

    @property
    def exceeds_delta(self) -> bool:
        return self.tail.point >= self.delta


def lower_bound_experiment(d: int, sigma: float, n: int, delta: float, trials: int, seed: int,
                           estimator: Optional[EstimatorSpec] = None, pilot_trials: Optional[int] = None,
                           jobs: Optional[int] = None, timing: Optional[bool] = None) -> LowerBoundReport:
    """Empirical exceedance of the lower-bound threshold on the worst sign vector found."""
    if estimator is None:
        estimator = EstimatorSpec('knn', delta=delta, clamp=True, label='mom-knn')
    spec, h = lower_bound_scenario(d, sigma, n, delta, estimator, trials, seed)
    if isinstance(spec.target, AdversarialRegression):
        pilot = pilot_trials or max(50, trials // 20)
        spec = replace(spec, target=search_adversarial_signs(spec, pilot, jobs=jobs))
        signs = tuple(int(s) for s in spec.target.signs)
        cells = spec.target.cells
    else:
        signs, cells = (), 0
    result = tail_report(spec, jobs=jobs, timing=timing)[0]
    result = replace(result, delta=delta)
    return LowerBoundReport(
        d=d, sigma=sigma, n=n, delta=delta, h=h, cells=cells, threshold=spec.threshold,
        bayes_floor=bayes_error_floor(sigma, d, n, delta), signs=signs, result=result,
    )


# ---------------------------------------------------------------------------
# Contamination demonstration
# ---------------------------------------------------------------------------
def contamination_scenario(base: ScenarioSpec, n_outliers: int, delta: float,
                           magnitude: Optional[float] = None, placement: str = 'block') -> ScenarioSpec:
    """MoM k-NN scored on the robust radius next to the single-block k-NN scored on the plain one.

    Outliers sit at the query point, so the pooled estimate averages them in.
    """
    m = select_m(delta)
    if not outlier_budget_ok(m, n_outliers):
        logger.warning("m=%d blocks for %d outliers: the budget m >= 4|O| does not hold", m, n_outliers)
    location = base.query.point if base.query.point is not None else (base.support_side / 2,) * base.d
    contamination = ContaminationSpec(n_outliers=n_outliers, placement=placement, magnitude=magnitude,
                                      location=location, blocks=m)
    estimators = (
        EstimatorSpec('knn', delta=delta, robust=True, label='mom-knn-robust'),
        EstimatorSpec('knn', delta=delta, m=1, clamp=True, label='pooled-knn',
                      radius=bound_radius('knn', base.model, base.n, delta).radius),
    )
    return replace(base, estimators=estimators, contamination=contamination,
                   query=QuerySpec('fixed', location), threshold=None)


def contamination_experiment(base: ScenarioSpec, n_outliers: int, delta: float, magnitude: Optional[float] = None,
                             placement: str = 'block', jobs: Optional[int] = None,
                             timing: Optional[bool] = None) -> List[TailResult]:
    spec = contamination_scenario(base, n_outliers, delta, magnitude, placement)
    return tail_report(spec, jobs=jobs, timing=timing)
