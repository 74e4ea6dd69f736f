"""Hypervolume indicator and the statistical testing protocol.

Both objectives are minimized; the hypervolume reference point is
(1.1, 1.1), so a perfect solution set scores 1.1^2 = 1.21. Points outside
the reference box are clamped onto its boundary, where they contribute
zero area.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

HV_REFERENCE = (1.1, 1.1)

# Below this many observations per side the Mann-Whitney p-value is computed
# by exact enumeration of group assignments; from here on the tie-corrected
# normal approximation is used.
EXACT_MANN_WHITNEY_LIMIT = 8


def clamp_point(error: float, size_norm: float, reference=HV_REFERENCE):
    return (
        min(max(float(error), 0.0), reference[0]),
        min(max(float(size_norm), 0.0), reference[1]),
    )


def hypervolume_2d(points, reference=HV_REFERENCE) -> float:
    """Exact area dominated by `points` within the reference box.

    Standard staircase sweep: sort by error ascending and accumulate
    (previous size boundary - size) * (reference error - error) over the
    non-dominated staircase.
    """
    if len(points) == 0:
        return 0.0
    clamped = sorted(clamp_point(e, s, reference) for e, s in points)
    hv = 0.0
    boundary = reference[1]
    for error, size_norm in clamped:
        if size_norm < boundary:
            hv += (boundary - size_norm) * (reference[0] - error)
            boundary = size_norm
    return hv


@dataclass(frozen=True)
class TestReport:
    __test__ = False  # not a pytest class

    u_statistic: float
    p_value: float
    significant: bool
    adjusted_threshold: float


def _u_statistic(a: np.ndarray, b: np.ndarray) -> float:
    """Count of pairs (x in a, y in b) with x > y, plus 0.5 per tie."""
    gt = (a[:, None] > b[None, :]).sum()
    eq = (a[:, None] == b[None, :]).sum()
    return float(gt) + 0.5 * float(eq)


def _exact_p(a: np.ndarray, b: np.ndarray, u_obs: float, alternative: str) -> float:
    """Enumerate every assignment of the pooled values into groups of the
    observed sizes and read the tail probability off the U distribution."""
    pooled = np.concatenate([a, b])
    n = pooled.shape[0]
    n1 = a.shape[0]
    mu = n1 * (n - n1) / 2.0
    us = []
    for group_a in combinations(range(n), n1):
        mask = np.zeros(n, dtype=bool)
        mask[list(group_a)] = True
        us.append(_u_statistic(pooled[mask], pooled[~mask]))
    us = np.asarray(us)
    eps = 1e-9
    if alternative == "two-sided":
        return float(np.mean(np.abs(us - mu) >= abs(u_obs - mu) - eps))
    if alternative == "greater":
        return float(np.mean(us >= u_obs - eps))
    if alternative == "less":
        return float(np.mean(us <= u_obs + eps))
    raise ValueError(f"unknown alternative {alternative!r}")


def _normal_p(a: np.ndarray, b: np.ndarray, u_obs: float, alternative: str) -> float:
    n1 = a.shape[0]
    n2 = b.shape[0]
    n = n1 + n2
    pooled = np.concatenate([a, b])
    _, counts = np.unique(pooled, return_counts=True)
    tie_term = float(np.sum(counts**3 - counts)) / (n * (n - 1)) if n > 1 else 0.0
    variance = n1 * n2 / 12.0 * ((n + 1) - tie_term)
    if variance <= 0:
        return 1.0
    z = (u_obs - n1 * n2 / 2.0) / math.sqrt(variance)
    sf = lambda x: 0.5 * math.erfc(x / math.sqrt(2.0))  # upper normal tail
    if alternative == "two-sided":
        return min(1.0, 2.0 * sf(abs(z)))
    if alternative == "greater":
        return sf(z)
    if alternative == "less":
        return sf(-z)
    raise ValueError(f"unknown alternative {alternative!r}")


def mann_whitney_u(
    a,
    b,
    alternative: str = "two-sided",
    threshold: float = 0.05,
) -> TestReport:
    """Rank-sum test of two samples. The U statistic counts pairs where a
    value from `a` exceeds one from `b` (ties count one half).

    Small samples (under 8 per side) get an exact enumeration p-value; the
    rest use the tie-corrected normal approximation.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    u = _u_statistic(a, b)
    if a.size < EXACT_MANN_WHITNEY_LIMIT and b.size < EXACT_MANN_WHITNEY_LIMIT:
        p = _exact_p(a, b, u, alternative)
    else:
        p = _normal_p(a, b, u, alternative)
    return TestReport(
        u_statistic=u,
        p_value=p,
        significant=p < threshold,
        adjusted_threshold=threshold,
    )


def bonferroni(tests, family_alpha: float = 0.05) -> list[TestReport]:
    """Apply the family-size-adjusted threshold to every test.

    Accepts TestReports or bare p-values; the latter yield reports with a
    NaN statistic.
    """
    if len(tests) == 0:
        raise ValueError("bonferroni needs at least one p-value")
    adjusted = family_alpha / len(tests)
    out = []
    for t in tests:
        if isinstance(t, TestReport):
            out.append(
                TestReport(
                    u_statistic=t.u_statistic,
                    p_value=t.p_value,
                    significant=t.p_value < adjusted,
                    adjusted_threshold=adjusted,
                )
            )
        else:
            p = float(t)
            out.append(
                TestReport(
                    u_statistic=math.nan,
                    p_value=p,
                    significant=p < adjusted,
                    adjusted_threshold=adjusted,
                )
            )
    return out


@dataclass(frozen=True)
class ComparisonRow:
    algorithm: str
    mean: float
    std: float
    mark: str  # '+', '-', '=' against the reference; '' for the reference row


def summarize_runs(
    samples: dict,
    reference: str,
    family_alpha: float = 0.05,
    family_size: int = 1,
) -> list[ComparisonRow]:
    """Mean, standard deviation, and a +/-/= mark of the reference algorithm
    versus each other algorithm (larger values count as better).

    `family_size` is the Bonferroni family the threshold is divided by,
    e.g. the number of datasets a pairwise comparison is repeated across.
    """
    if reference not in samples:
        raise ValueError(f"reference algorithm {reference!r} missing from samples")
    if len(samples) < 2:
        raise ValueError("need at least two algorithms to compare")
    threshold = family_alpha / max(1, family_size)
    ref = np.asarray(samples[reference], dtype=np.float64)
    rows = []
    for name, values in samples.items():
        values = np.asarray(values, dtype=np.float64)
        if name == reference:
            mark = ""
        else:
            report = mann_whitney_u(ref, values, threshold=threshold)
            if not report.significant:
                mark = "="
            elif report.u_statistic > len(ref) * len(values) / 2.0:
                mark = "+"
            else:
                mark = "-"
        rows.append(
            ComparisonRow(
                algorithm=name,
                mean=float(values.mean()),
                std=float(values.std(ddof=1)) if values.size > 1 else 0.0,
                mark=mark,
            )
        )
    return rows
