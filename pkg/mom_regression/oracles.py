"""Exact numerical checks of the inequalities the confidence radii rest on."""
import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from .base import mnn_predict
from .core import Dataset, distances_to, make_rng, median_of, tie_uniforms
from .harness import expected_nn_distance_check, g_squared_integral, rho_unit_cube
from .weights import bagged_weights_with_replacement

logger = logging.getLogger(__name__)

BINOMIAL_GRID = tuple(0.005 * j for j in range(1, 51))
BLOCK_COUNTS = range(1, 21)
# Largest p for which the contamination argument applies.
ROBUST_P_CAP = 27 / (4 * math.e) ** 4


@dataclass(frozen=True)
class OracleResult:
    """``max_ratio`` is the largest observed lhs / rhs (passing means <= 1)."""

    name: str
    passed: bool
    max_ratio: float
    cases: int
    detail: str = ''

    def as_dict(self) -> dict:
        return {
            'name': self.name,
            'passed': self.passed,
            'max_ratio': self.max_ratio,
            'cases': self.cases,
            'detail': self.detail,
        }


def binomial_upper_tail(m: int, p: float, threshold: float) -> float:
    """P(Bin(m, p) >= threshold) by exact summation."""
    first = max(0, math.ceil(threshold))
    return math.fsum(math.comb(m, j) * p ** j * (1 - p) ** (m - j) for j in range(first, m + 1))


def _ratio_oracle(name: str, cases, lhs: Callable, rhs: Callable) -> OracleResult:
    worst, worst_case, count, failures = 0.0, None, 0, 0
    for case in cases:
        left, right = lhs(*case), rhs(*case)
        count += 1
        if left > right:
            failures += 1
        ratio = left / right if right > 0 else (0.0 if left == 0 else math.inf)
        if ratio > worst:
            worst, worst_case = ratio, case
    detail = f"{failures} failure(s); worst case {worst_case}" if failures else f"worst case {worst_case}"
    return OracleResult(name=name, passed=failures == 0, max_ratio=worst, cases=count, detail=detail)


def chernoff_identity_oracle(seed: int = 0, replications: int = 2000) -> OracleResult:
    """|median - r| > t forces at least m/2 block estimates to deviate by more than t."""
    rng = make_rng(seed, 1)
    worst, failures = 0.0, 0
    for _ in range(replications):
        m = int(rng.integers(1, 21))
        values = np.round(rng.normal(size=m), 1)
        t = float(np.round(abs(rng.normal()), 1))
        deviating = int(np.count_nonzero(np.abs(values) > t))
        if abs(median_of(values)) > t:
            worst = max(worst, (m / 2) / deviating)
            failures += deviating < m / 2
    return OracleResult('median-chernoff', failures == 0, worst, replications, f"{failures} failure(s)")


def binomial_oracle() -> OracleResult:
    cases = [(m, p) for m in BLOCK_COUNTS for p in BINOMIAL_GRID]
    return _ratio_oracle(
        'binomial', cases,
        lambda m, p: binomial_upper_tail(m, p, m / 2),
        lambda m, p: 2 ** m * p ** (m / 2),
    )


def robust_binomial_oracle() -> OracleResult:
    # The 0.005 grid has no point under the cap; use 50 points spread over (0, cap].
    grid = [j * ROBUST_P_CAP / 50 for j in range(1, 51)]
    cases = [(m, p) for m in BLOCK_COUNTS for p in grid]
    return _ratio_oracle(
        'robust-binomial', cases,
        lambda m, p: binomial_upper_tail(m, p, m / 4),
        lambda m, p: (4 / 3 ** 0.75) ** m * p ** (m / 4),
    )


def _k_values(N: int, limit: int = 50) -> List[int]:
    return sorted({int(k) for k in np.round(np.linspace(1, N, min(N, limit)))})


def _bagged_cases():
    for d in range(1, 7):
        for N in (5, 20, 100, 500):
            for k in _k_values(N):
                yield d, N, k


def bagged_bias_oracle() -> OracleResult:
    def lhs(d, N, k):
        v = bagged_weights_with_replacement(k, N).v
        return math.fsum(v * (np.arange(1, N + 1) / (N + 1)) ** (1 / d))

    return _ratio_oracle('bagged-bias', _bagged_cases(), lhs, lambda d, N, k: 2 * math.e * k ** (-1 / d))


def bagged_variance_oracle() -> OracleResult:
    cases = [(N, k) for N in (5, 20, 100, 500) for k in _k_values(N)]
    return _ratio_oracle(
        'bagged-variance', cases,
        lambda N, k: bagged_weights_with_replacement(k, N).sum_of_squares,
        lambda N, k: 2 * k / N * (1 + 1 / N) ** (2 * k),
    )


def g_quadrature_oracle(tolerance: float = 1e-6) -> OracleResult:
    errors = []
    for d in (1, 2, 3):
        exact = 1 / (2 * (d + 1) * (d + 2))
        errors.append(abs(g_squared_integral(d) - exact) / exact)
    worst = max(errors)
    return OracleResult('g-quadrature', worst <= tolerance, worst / tolerance, len(errors),
                        'relative errors ' + ', '.join(f"{e:.2e}" for e in errors))


def mnn_bruteforce(block: Dataset, x, k: int, tie_seed: int = 0) -> float:
    """Mutual-neighbour average by explicit sorting of (distance, tie) keys for every candidate."""
    N = block.n
    x = np.asarray(x, dtype=float)
    ties = tie_uniforms(tie_seed, N + 1)
    to_query = distances_to(block.X, x)
    by_query = sorted(range(N), key=lambda i: (to_query[i], ties[i]))
    mutual = []
    for i in by_query[:k]:
        keys = [(float(distances_to(block.X[j], block.X[i])), ties[j]) for j in range(N) if j != i]
        query_key = (float(to_query[i]), ties[N])
        if sum(1 for key in keys if key < query_key) < k:
            mutual.append(i)
    if not mutual:
        return 0.0
    return float(np.mean(block.y[sorted(mutual)]))


def mnn_equivalence_oracle(seed: int = 0, blocks: int = 1000) -> OracleResult:
    """Vectorised and brute-force mutual neighbours agree exactly on small random blocks."""
    rng = make_rng(seed, 2)
    mismatches = 0
    for b in range(blocks):
        N = int(rng.integers(1, 9))
        d = int(rng.integers(1, 4))
        # Coarse coordinates make distance ties frequent.
        X = rng.integers(0, 4, size=(N, d)) / 4
        y = rng.normal(size=N)
        x = rng.integers(0, 4, size=d) / 4
        k = int(rng.integers(1, N + 1))
        block = Dataset(X, y)
        if mnn_predict(block, x, k, b) != mnn_bruteforce(block, x, k, b):
            mismatches += 1
    return OracleResult('mnn-bruteforce', mismatches == 0, float(mismatches), blocks, f"{mismatches} mismatch(es)")


def nn_distance_oracle(seed: int = 0, trials: int = 50_000, N: int = 200) -> OracleResult:
    worst, failures, cases = 0.0, 0, 0
    for d in (1, 2, 3):
        for i in (1, 5, 20, 50):
            for label, x in (('corner', np.zeros(d)), ('center', np.full(d, 0.5))):
                check = expected_nn_distance_check(d, N, i, trials, seed=seed + cases, x=x, rho=rho_unit_cube(d))
                cases += 1
                worst = max(worst, check.mean / (check.bound + 3 * check.stderr))
                if not check.holds():
                    failures += 1
                    logger.warning("nn-distance d=%d i=%d %s: mean %.6g above bound %.6g",
                                   d, i, label, check.mean, check.bound)
    return OracleResult('nn-distance', failures == 0, worst, cases, f"{failures} failure(s)")


def run_oracle_suite(monte_carlo: bool = False, seed: int = 0, mc_trials: Optional[int] = None) -> List[OracleResult]:
    results = [
        chernoff_identity_oracle(seed),
        binomial_oracle(),
        robust_binomial_oracle(),
        bagged_bias_oracle(),
        bagged_variance_oracle(),
        g_quadrature_oracle(),
        mnn_equivalence_oracle(seed),
    ]
    if monte_carlo:
        results.append(nn_distance_oracle(seed, trials=mc_trials or 50_000))
    for result in results:
        logger.debug("%s: %s (max ratio %.6g over %d cases)", result.name,
                     'pass' if result.passed else 'FAIL', result.max_ratio, result.cases)
    return results
