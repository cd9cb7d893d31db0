"""Nonparametric two-sample tests used by the evaluation harness.

Both tests return two-sided p-values.  Small tie-free samples use exact
enumeration (all rank subsets for Mann-Whitney, all sign assignments for
the signed-rank test); larger samples use the normal approximation with
tie and continuity corrections.  Average ranks are multiples of 0.5, so
enumerated statistics compare exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AllZeroDifferences, EmptySample, LengthMismatch

MWU_EXACT_MAX = 8  # exact enumeration when min(|a|, |b|) <= this and no ties
WILCOXON_EXACT_MAX = 12  # exact sign enumeration when n nonzero diffs <= this


@dataclass(frozen=True)
class MwuResult:
    u: float  # U statistic of the first sample
    p_value: float
    method: str


@dataclass(frozen=True)
class WilcoxonResult:
    w: float  # sum of positive-difference ranks
    p_value: float
    n_zero_dropped: int
    method: str


def rankdata(values: np.ndarray) -> np.ndarray:
    """1-based ranks with average ranks for ties."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = 0.5 * (i + j) + 1.0
        ranks[order[i : j + 1]] = avg
        i = j + 1
    return ranks


def _tie_term(values: np.ndarray) -> float:
    _, counts = np.unique(values, return_counts=True)
    return float(np.sum(counts.astype(np.float64) ** 3 - counts))


def _two_sided_normal(z_num: float, sigma: float) -> float:
    """2*(1 - Phi(z)) with continuity correction already in z_num."""
    if sigma <= 0.0:
        return 1.0
    z = max(0.0, z_num) / sigma
    return min(1.0, math.erfc(z / math.sqrt(2.0)))


def _mwu_exact_counts(n1: int, n2: int) -> np.ndarray:
    """counts[u] = number of rank subsets of size n1 with U statistic u."""
    max_u = n1 * n2
    # dp[k][u]: subsets of size k among the first i items with U = u
    dp = np.zeros((n1 + 1, max_u + 1), dtype=np.float64)
    dp[0, 0] = 1.0
    for i in range(1, n1 + n2 + 1):
        # taking item i as the k-th smallest contributes (i - k) to U
        for k in range(min(i, n1), 0, -1):
            add = i - k
            if add > max_u:
                continue
            dp[k, add:] += dp[k - 1, : max_u + 1 - add]
    return dp[n1]


def mann_whitney_u(a, b) -> MwuResult:
    """Two-sided Mann-Whitney U test; exact for small tie-free samples."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise EmptySample("both samples must be non-empty")
    n1, n2 = a.size, b.size
    combined = np.concatenate([a, b])
    ranks = rankdata(combined)
    r1 = float(ranks[:n1].sum())
    u1 = r1 - n1 * (n1 + 1) / 2.0

    has_ties = np.unique(combined).size < combined.size
    if min(n1, n2) <= MWU_EXACT_MAX and not has_ties:
        counts = _mwu_exact_counts(n1, n2)
        total = counts.sum()
        u_int = int(round(u1))
        p_le = counts[: u_int + 1].sum() / total
        p_ge = counts[u_int:].sum() / total
        p = min(1.0, 2.0 * min(p_le, p_ge))
        return MwuResult(u1, float(p), "exact")

    mu = n1 * n2 / 2.0
    n = n1 + n2
    var = n1 * n2 / 12.0 * ((n + 1) - _tie_term(combined) / (n * (n - 1)))
    sigma = math.sqrt(var) if var > 0 else 0.0
    p = _two_sided_normal(abs(u1 - mu) - 0.5, sigma)
    return MwuResult(u1, p, "normal")


def wilcoxon_signed(a, b) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped (their count is reported); raises
    AllZeroDifferences when nothing remains.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size != b.size:
        raise LengthMismatch(f"paired samples differ in length: {a.size} vs {b.size}")
    if a.size == 0:
        raise EmptySample("paired samples must be non-empty")
    d = a - b
    nonzero = d[d != 0.0]
    n_zero = int(d.size - nonzero.size)
    if nonzero.size == 0:
        raise AllZeroDifferences("all paired differences are zero")

    n = nonzero.size
    ranks = rankdata(np.abs(nonzero))
    w_plus = float(ranks[nonzero > 0].sum())

    if n <= WILCOXON_EXACT_MAX:
        sums = np.zeros(1 << n, dtype=np.float64)
        for mask in range(1, 1 << n):
            low = mask & -mask
            sums[mask] = sums[mask ^ low] + ranks[low.bit_length() - 1]
        p_le = float(np.count_nonzero(sums <= w_plus)) / sums.size
        p_ge = float(np.count_nonzero(sums >= w_plus)) / sums.size
        p = min(1.0, 2.0 * min(p_le, p_ge))
        return WilcoxonResult(w_plus, p, n_zero, "exact")

    mu = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - _tie_term(np.abs(nonzero)) / 48.0
    sigma = math.sqrt(var) if var > 0 else 0.0
    p = _two_sided_normal(abs(w_plus - mu) - 0.5, sigma)
    return WilcoxonResult(w_plus, p, n_zero, "normal")
