"""Confidence-level-free estimation: intersect the per-m confidence intervals and take a midpoint."""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

from .core import ConfigurationError, Dataset, InvalidArgumentError
from .mom import (
    KindLike, ModelClass, MoMConfig, ceil_log, family_of, mom_predict, per_m_radius, select_base,
    validity_constant,
)

logger = logging.getLogger(__name__)

# P(some interval with m' >= m misses r(x)) <= e^-m / (1 - e^-1)
GEOMETRIC_TAIL = 1 - math.exp(-1)


@dataclass(frozen=True)
class ConfidenceInterval:
    center: float
    half_width: float
    m: int

    @property
    def lower(self) -> float:
        return self.center - self.half_width

    @property
    def upper(self) -> float:
        return self.center + self.half_width

    def __contains__(self, value: float) -> bool:
        return self.lower <= value <= self.upper


@dataclass(frozen=True)
class AdaptiveEstimate:
    estimate: float
    m_hat: int
    lower: float
    upper: float
    intervals: Tuple[ConfidenceInterval, ...] = ()
    skipped: Tuple[int, ...] = field(default=())

    def interval(self, m: int) -> ConfidenceInterval:
        for interval in self.intervals:
            if interval.m == m:
                return interval
        raise KeyError(m)


def max_block_count(kind: KindLike, model: ModelClass, n: int) -> int:
    """floor(c n), the largest block count the guarantees cover."""
    return math.floor(validity_constant(kind, model) * n)


def interval_for(dataset: Dataset, x, m: int, kind: KindLike, model: ModelClass, seed: int = 0,
                 with_replacement: bool = True) -> ConfidenceInterval:
    family = family_of(kind)
    n = dataset.n
    top = max_block_count(family, model, n)
    if int(m) != m or not 1 <= m <= top:
        raise InvalidArgumentError(f"block count m={m!r} outside [1, floor(c n)={top}]")
    m = int(m)
    base = select_base(family, model, n, m, with_replacement=with_replacement)
    center = mom_predict(dataset, x, MoMConfig(m, base), seed)
    return ConfidenceInterval(center=center, half_width=per_m_radius(family, model, n, m), m=m)


def select_from_intervals(intervals: Sequence[ConfidenceInterval]) -> Tuple[int, float, float]:
    """(m_hat, lower, upper) for the first m whose suffix intersection is nonempty.

    ``intervals`` must be sorted by m. The sweep runs from the largest m down,
    keeping the running max of lower ends and min of upper ends.
    """
    if not intervals:
        raise InvalidArgumentError("no confidence intervals to intersect")
    lower, upper = -math.inf, math.inf
    chosen = None
    for interval in reversed(intervals):
        lower = max(lower, interval.lower)
        upper = min(upper, interval.upper)
        if lower > upper:
            break
        chosen = (interval.m, lower, upper)
    return chosen


def adaptive_predict(dataset: Dataset, x, kind: KindLike, model: ModelClass, seed: int = 0,
                     with_replacement: bool = True) -> AdaptiveEstimate:
    family = family_of(kind)
    n = dataset.n
    top = max_block_count(family, model, n)
    if top < 1:
        raise ConfigurationError(
            'floor(c n) >= 1', top, 1, f"floor(c n) = {top}: no block count is covered for n = {n}",
        )
    intervals: List[ConfidenceInterval] = []
    skipped: List[int] = []
    for m in range(1, top + 1):
        try:
            intervals.append(interval_for(dataset, x, m, family, model, seed, with_replacement))
        except ConfigurationError as exc:
            skipped.append(m)
            logger.debug("m=%d skipped: %s", m, exc)
    if skipped:
        logger.warning("%d of %d block counts skipped (tuning parameter out of range): %s",
                       len(skipped), top, _ranges(skipped))
    if not intervals:
        raise ConfigurationError('feasible m', 0, 1, "no block count in [1, floor(c n)] admits a tuning parameter")
    m_hat, lower, upper = select_from_intervals(intervals)
    return AdaptiveEstimate(
        estimate=(lower + upper) / 2,
        m_hat=m_hat,
        lower=lower,
        upper=upper,
        intervals=tuple(intervals),
        skipped=tuple(skipped),
    )


def m_delta(delta: float, c: float, n: int) -> int:
    """Smallest m in [1, floor(c n)] with e^-m / (1 - e^-1) <= delta."""
    top = math.floor(c * n)
    if top < 1:
        raise InvalidArgumentError(f"floor(c n) = {top}: no block count available")
    floor_delta = math.exp(-top) / GEOMETRIC_TAIL
    if not delta < 1 or delta < floor_delta * (1 - 1e-12):
        raise InvalidArgumentError(f"delta={delta!r} outside [{floor_delta!r}, 1)")
    m = max(1, ceil_log(-math.log(delta * GEOMETRIC_TAIL)))
    return min(m, top)


def guarantee_width(kind: KindLike, model: ModelClass, n: int, delta: float) -> float:
    """Full width of the m_delta interval: the adaptive error bound at level delta."""
    family = family_of(kind)
    m = m_delta(delta, validity_constant(family, model), n)
    return 2 * per_m_radius(family, model, n, m)


def _ranges(values: Sequence[int]) -> str:
    parts = []
    start = previous = values[0]
    for value in list(values[1:]) + [None]:
        if value is not None and value == previous + 1:
            previous = value
            continue
        parts.append(str(start) if start == previous else f"{start}-{previous}")
        if value is not None:
            start = previous = value
    return ', '.join(parts)
