"""Statistical bias testing across demographic subgroups.

Fisher's exact test is computed from scratch with log-factorial
accumulation; the two-sided p-value follows the minimum-likelihood
convention (sum over tables no more probable than the observed one).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import t as t_dist

from .dataset import SampleRecord

_LGAMMA_CACHE: list[float] = []


def _log_fact(n: int) -> float:
    global _LGAMMA_CACHE
    if n >= len(_LGAMMA_CACHE):
        start = len(_LGAMMA_CACHE)
        _LGAMMA_CACHE.extend(math.lgamma(k + 1) for k in range(start, n + 1))
    return _LGAMMA_CACHE[n]


def fisher_exact_two_sided(table) -> float:
    """Two-sided Fisher exact p-value for a 2x2 table [[a, b], [c, d]].

    Sums hypergeometric probabilities (margins fixed) of every table whose
    probability is <= the observed one, within relative tolerance 1e-7 to
    absorb floating rounding.
    """
    (a, b), (c, d) = table
    for v in (a, b, c, d):
        if int(v) != v or v < 0:
            raise ValueError(f"table entries must be non-negative integers, got {table}")
    a, b, c, d = int(a), int(b), int(c), int(d)
    n = a + b + c + d
    if n == 0:
        raise ValueError("table total must be positive")
    r1, r2, c1 = a + b, c + d, a + c

    def log_p(k: int) -> float:
        return (
            _log_fact(r1)
            + _log_fact(r2)
            + _log_fact(c1)
            + _log_fact(n - c1)
            - _log_fact(n)
            - _log_fact(k)
            - _log_fact(r1 - k)
            - _log_fact(c1 - k)
            - _log_fact(r2 - c1 + k)
        )

    lo = max(0, c1 - r2)
    hi = min(r1, c1)
    log_obs = log_p(a)
    cutoff = log_obs + math.log1p(1e-7)
    total = 0.0
    excluded_any = False
    for k in range(lo, hi + 1):
        lp = log_p(k)
        if lp <= cutoff:
            total += math.exp(lp)
        else:
            excluded_any = True
    if not excluded_any:
        return 1.0  # whole support included; the sum is exactly 1 by definition
    return min(total, 1.0)


def bonferroni(alpha: float, m: int) -> float:
    """Bonferroni-adjusted significance level alpha / m."""
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    return alpha / m


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x), dtype=float)
    i = 0
    sx = x[order]
    while i < len(x):
        j = i
        while j + 1 < len(x) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x, y, method: str = "auto") -> tuple[float, float]:
    """Spearman rank correlation with average ranks for ties.

    The p-value uses the t-approximation with n-2 degrees of freedom;
    ``method="exact"`` enumerates all rank permutations (n <= 10 only).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D arrays of equal length")
    n = len(x)
    if n < 4:
        raise ValueError(f"need at least 4 observations, got {n}")
    rx = _average_ranks(x)
    ry = _average_ranks(y)
    if np.ptp(rx) == 0 or np.ptp(ry) == 0:
        raise ValueError("constant input has zero rank variance")
    rx = rx - rx.mean()
    ry = ry - ry.mean()
    rho = float(np.dot(rx, ry) / math.sqrt(np.dot(rx, rx) * np.dot(ry, ry)))

    if method == "exact" or (method == "auto" and n <= 10):
        return rho, _spearman_exact_p(x, y, abs(rho))
    if abs(rho) >= 1.0:
        return rho, 0.0
    t = rho * math.sqrt((n - 2) / (1 - rho * rho))
    p = 2.0 * float(t_dist.sf(abs(t), df=n - 2))
    return rho, min(p, 1.0)


def _spearman_exact_p(x, y, abs_rho: float) -> float:
    n = len(x)
    if n > 10:
        raise ValueError("exact permutation p limited to n <= 10")
    rx = _average_ranks(np.asarray(x, dtype=float))
    ry = _average_ranks(np.asarray(y, dtype=float))
    rx = rx - rx.mean()
    denom_x = math.sqrt(np.dot(rx, rx))
    ry0 = ry - ry.mean()
    denom_y = math.sqrt(np.dot(ry0, ry0))
    count = 0
    total = 0
    for perm in itertools.permutations(range(n)):
        ryp = ry0[list(perm)]
        r = float(np.dot(rx, ryp) / (denom_x * denom_y))
        total += 1
        if abs(r) >= abs_rho - 1e-12:
            count += 1
    return count / total


@dataclass
class BiasComparison:
    property_name: str
    group_a: str
    group_b: str
    n_a: int
    n_b: int
    accuracy_a: float | None
    accuracy_b: float | None
    p_value: float | None
    significant: bool | None
    computable: bool


# the six paper comparisons: selector maps a record to its group or None
_COMPARISONS = [
    ("sex", "male", "female",
     lambda r: r.sex if r.sex in ("male", "female") else None),
    ("ethnicity", "white", "non-white",
     lambda r: None if r.ethnicity in (None, "unknown")
     else ("white" if r.ethnicity == "white" else "non-white")),
    ("age", "below 50", "50 and above",
     lambda r: None if r.age is None else ("below 50" if r.age < 50 else "50 and above")),
    ("recording environment", "home", "clinic",
     lambda r: r.cohort if r.cohort in ("home", "clinic") else None),
    ("recording environment", "home", "care",
     lambda r: r.cohort if r.cohort in ("home", "care") else None),
    ("recording environment", "clinic", "care",
     lambda r: r.cohort if r.cohort in ("clinic", "care") else None),
]


def subgroup_bias_report(
    records: list[SampleRecord],
    correct,
    alpha: float = 0.05,
) -> list[BiasComparison]:
    """Six pairwise Fisher tests of per-sample correctness across
    demographic subgroups, judged against the Bonferroni-adjusted level.

    Records missing the demographic under test are excluded from that
    comparison only.
    """
    correct = np.asarray(correct, dtype=bool)
    if len(records) != len(correct):
        raise ValueError("records and correctness flags must align")
    alpha_star = bonferroni(alpha, len(_COMPARISONS))
    report = []
    for prop, name_a, name_b, selector in _COMPARISONS:
        counts = {name_a: [0, 0], name_b: [0, 0]}  # [correct, incorrect]
        for rec, ok in zip(records, correct):
            group = selector(rec)
            if group is None:
                continue
            counts[group][0 if ok else 1] += 1
        (ca, wa), (cb, wb) = counts[name_a], counts[name_b]
        n_a, n_b = ca + wa, cb + wb
        if n_a == 0 or n_b == 0:
            report.append(
                BiasComparison(prop, name_a, name_b, n_a, n_b,
                               ca / n_a if n_a else None,
                               cb / n_b if n_b else None,
                               None, None, computable=False)
            )
            continue
        p = fisher_exact_two_sided([[ca, wa], [cb, wb]])
        report.append(
            BiasComparison(prop, name_a, name_b, n_a, n_b,
                           ca / n_a, cb / n_b, p, p < alpha_star, computable=True)
        )
    return report


def write_bias_csv(report: list[BiasComparison], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("property,group_a,group_b,n_a,n_b,accuracy_a,accuracy_b,p_value,significant\n")
        for c in report:
            acc_a = "" if c.accuracy_a is None else f"{100 * c.accuracy_a:.1f}"
            acc_b = "" if c.accuracy_b is None else f"{100 * c.accuracy_b:.1f}"
            p = "" if c.p_value is None else f"{c.p_value:.4f}"
            sig = "" if c.significant is None else ("yes" if c.significant else "no")
            fh.write(f"{c.property_name},{c.group_a},{c.group_b},"
                     f"{c.n_a},{c.n_b},{acc_a},{acc_b},{p},{sig}\n")
