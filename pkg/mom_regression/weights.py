"""Deterministic weight vectors (v_1, ..., v_N) for weighted nearest-neighbour rules."""
import math
from dataclasses import dataclass

import numpy as np

from .core import ConsistencyError, InvalidArgumentError

SUM_TOLERANCE = 1e-12


@dataclass(frozen=True)
class WeightVector:
    """Probability vector over nearest-neighbour ranks (v[0] weighs the nearest point)."""

    v: np.ndarray

    def __post_init__(self):
        v = np.array(self.v, dtype=float).reshape(-1)
        if v.size == 0:
            raise InvalidArgumentError("weight vector is empty")
        if np.any(v < 0) or np.any(v > 1) or not np.all(np.isfinite(v)):
            raise InvalidArgumentError("weights must lie in [0, 1]")
        total = math.fsum(v)
        if abs(total - 1.0) > SUM_TOLERANCE:
            raise InvalidArgumentError(f"weights sum to {total!r}, not 1")
        v.setflags(write=False)
        object.__setattr__(self, 'v', v)

    def __len__(self) -> int:
        return self.v.size

    @property
    def sum_of_squares(self) -> float:
        return float(np.dot(self.v, self.v))


def _check_k(k: int, N: int) -> None:
    if int(k) != k or int(N) != N or not 1 <= k <= N:
        raise InvalidArgumentError(f"need integers 1 <= k <= N, got k={k!r}, N={N!r}")


def _finalize(raw: np.ndarray, scheme: str) -> WeightVector:
    # Every scheme is normalized in closed form: a drift in the sum is a bug, not noise.
    raw = np.clip(raw, 0.0, 1.0)
    total = math.fsum(raw)
    if abs(total - 1.0) > SUM_TOLERANCE:
        raise ConsistencyError(f"{scheme} weights sum to {total!r}")
    return WeightVector(raw)


def knn_weights(k: int, N: int) -> WeightVector:
    _check_k(k, N)
    k, N = int(k), int(N)
    raw = np.zeros(N)
    raw[:k] = 1.0 / k
    return _finalize(raw, 'k-nn')


def bagged_weights_with_replacement(k: int, N: int) -> WeightVector:
    """v_i = (1 - (i-1)/N)^k - (1 - i/N)^k."""
    _check_k(k, N)
    k, N = int(k), int(N)
    survival = (1.0 - np.arange(N + 1) / N) ** k
    return _finalize(survival[:-1] - survival[1:], 'bagged (with replacement)')


def bagged_weights_without_replacement(k: int, N: int) -> WeightVector:
    """v_i = C(N-i, k-1) / C(N, k) on i <= N-k+1, zero beyond.

    Built in log space from v_1 = k/N and v_{i+1}/v_i = (N-i-k+1)/(N-i), which
    keeps the relative error near machine precision for N in the thousands.
    """
    _check_k(k, N)
    k, N = int(k), int(N)
    support = N - k + 1
    i = np.arange(1, support)
    log_v = math.log(k / N) + np.concatenate(([0.0], np.cumsum(np.log((N - i - k + 1) / (N - i)))))
    raw = np.zeros(N)
    raw[:support] = np.exp(log_v)
    return _finalize(raw, 'bagged (without replacement)')


def bagged_weights(k: int, N: int, with_replacement: bool = True) -> WeightVector:
    if with_replacement:
        return bagged_weights_with_replacement(k, N)
    return bagged_weights_without_replacement(k, N)
