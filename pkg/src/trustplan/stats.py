"""Hypothesis tests and per-arm summaries over batches of run records."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

EXACT_LIMIT = 400
METRICS = ("crashes", "progress", "success", "min_dist")
GROUP_KEYS = ("t_est", "mode", "noise", "scenario")


@dataclass(frozen=True)
class MannWhitneyResult:
    u: float
    p: float
    method: str


def midranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing the average of their positions."""
    values = np.asarray(values, dtype=float)
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values))
    sorted_vals = values[order]
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _exact_u_distribution(doubled_ranks: np.ndarray, n_a: int) -> dict[int, float]:
    """Probability of each doubled rank sum for a random size-``n_a`` subset."""
    total = int(doubled_ranks.sum())
    dp = np.zeros((n_a + 1, total + 1))
    dp[0, 0] = 1.0
    for r in doubled_ranks.astype(int):
        dp[1:, r:] = dp[1:, r:] + dp[:-1, :total + 1 - r]
    counts = dp[n_a]
    norm = counts.sum()
    return {s: c / norm for s, c in enumerate(counts) if c > 0}


def mann_whitney_u(sample_a: Sequence[float], sample_b: Sequence[float]) -> MannWhitneyResult:
    """Two-sided Mann-Whitney U test; ``u`` is the statistic of ``sample_a``.

    Small problems (``n_a * n_b <= 400``) use the exact permutation
    distribution of the midrank sum, which stays valid with ties. Larger
    ones use the normal approximation with tie-corrected variance and a
    continuity correction.
    """
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    n_a, n_b = a.size, b.size
    pooled = np.concatenate([a, b])
    ranks = midranks(pooled)
    u = float(ranks[:n_a].sum() - n_a * (n_a + 1) / 2)
    if np.all(pooled == pooled[0]):
        return MannWhitneyResult(u, 1.0, "degenerate")
    if n_a * n_b <= EXACT_LIMIT:
        dist = _exact_u_distribution(2 * ranks, n_a)
        obs = int(round(2 * ranks[:n_a].sum()))
        lower = sum(p for s, p in dist.items() if s <= obs)
        upper = sum(p for s, p in dist.items() if s >= obs)
        return MannWhitneyResult(u, float(min(1.0, 2.0 * min(lower, upper))), "exact")
    n = n_a + n_b
    _, counts = np.unique(pooled, return_counts=True)
    tie = float(np.sum(counts ** 3 - counts))
    var = n_a * n_b / 12.0 * ((n + 1) - tie / (n * (n - 1)))
    if var <= 0:
        return MannWhitneyResult(u, 1.0, "degenerate")
    z = (abs(u - n_a * n_b / 2.0) - 0.5) / math.sqrt(var)
    p = 1.0 if z <= 0 else math.erfc(z / math.sqrt(2.0))
    return MannWhitneyResult(u, min(1.0, p), "normal")


def _gammainc_lower_series(a: float, x: float) -> float:
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(10_000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * 1e-16:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gammainc_upper_cf(a: float, x: float) -> float:
    # modified Lentz evaluation of the continued fraction for Q(a, x)
    tiny = 1e-300
    b = x + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h * math.exp(-x + a * math.log(x) - math.lgamma(a))


def gammaincc(a: float, x: float) -> float:
    """Regularized upper incomplete gamma function Q(a, x)."""
    if a <= 0:
        raise ValueError("shape must be positive")
    if x <= 0:
        return 1.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _gammainc_lower_series(a, x))
    return min(1.0, _gammainc_upper_cf(a, x))


def chi2_sf(x: float, df: float) -> float:
    return gammaincc(0.5 * df, 0.5 * x)


def chi2_yates(success_a: int, n_a: int, success_b: int, n_b: int) -> tuple[float, float]:
    """Yates-corrected chi-squared test on the 2x2 success/failure table."""
    for s, n in ((success_a, n_a), (success_b, n_b)):
        if n < 0 or not 0 <= s <= n:
            raise ValueError(f"inconsistent counts: {s} successes of {n}")
    obs = np.array([[success_a, n_a - success_a], [success_b, n_b - success_b]], dtype=float)
    rows, cols = obs.sum(axis=1), obs.sum(axis=0)
    if np.any(rows == 0) or np.any(cols == 0):
        raise ValueError("chi-squared test undefined: a table margin is zero")
    expected = np.outer(rows, cols) / obs.sum()
    # the correction never flips the sign of a deviation
    dev = np.maximum(np.abs(obs - expected) - 0.5, 0.0)
    stat = float(np.sum(dev ** 2 / expected))
    return stat, chi2_sf(stat, 1)


@dataclass(frozen=True)
class MetricSummary:
    metric: str
    arm: str
    runs: int
    mean: float
    median: float
    std: float
    min: float
    max: float
    group: str = "all"


@dataclass(frozen=True)
class TestResult:
    metric: str
    test: str
    statistic: float
    p: float
    group: str = "all"
    note: str = ""


@dataclass(frozen=True)
class Report:
    summaries: tuple[MetricSummary, ...]
    tests: tuple[TestResult, ...]
    aborted: int = 0


def summarize_values(metric: str, arm: str, values: Sequence[float], group: str = "all") -> MetricSummary:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        nan = float("nan")
        return MetricSummary(metric, arm, 0, nan, nan, nan, nan, nan, group)
    std = float(np.std(v, ddof=1)) if v.size > 1 else float("nan")
    return MetricSummary(metric, arm, int(v.size), float(v.mean()), float(np.median(v)), std,
                         float(v.min()), float(v.max()), group)


def metric_values(records: Iterable[Mapping], metric: str) -> list[float]:
    if metric == "min_dist":
        # clearance is only meaningful for runs without contact
        return [float(r["min_dist"]) for r in records
                if _truthy(r["success"]) and math.isfinite(float(r["min_dist"]))]
    if metric == "success":
        return [1.0 if _truthy(r["success"]) else 0.0 for r in records]
    return [float(r[metric]) for r in records]


def _truthy(v) -> bool:
    if isinstance(v, str):
        return v.strip().lower() in ("1", "true", "yes")
    return bool(v)


def _compare(enabled: list[Mapping], disabled: list[Mapping], group: str) -> tuple[list, list]:
    summaries, tests = [], []
    for metric in METRICS:
        for arm, recs in (("enabled", enabled), ("disabled", disabled)):
            if recs:
                summaries.append(summarize_values(metric, arm, metric_values(recs, metric), group))
    if len(enabled) < 2 or len(disabled) < 2:
        note = "fewer than two runs in an arm; test skipped"
        for metric in METRICS:
            test = "chi2_yates" if metric == "success" else "mann_whitney_u"
            tests.append(TestResult(metric, test, float("nan"), float("nan"), group, note))
        return summaries, tests
    for metric in ("crashes", "progress", "min_dist"):
        va, vb = metric_values(enabled, metric), metric_values(disabled, metric)
        if len(va) < 2 or len(vb) < 2:
            tests.append(TestResult(metric, "mann_whitney_u", float("nan"), float("nan"), group,
                                    "fewer than two usable values in an arm; test skipped"))
            continue
        res = mann_whitney_u(va, vb)
        tests.append(TestResult(metric, "mann_whitney_u", res.u, res.p, group, res.method))
    sa = int(sum(metric_values(enabled, "success")))
    sb = int(sum(metric_values(disabled, "success")))
    try:
        stat, p = chi2_yates(sa, len(enabled), sb, len(disabled))
        tests.append(TestResult("success", "chi2_yates", stat, p, group))
    except ValueError:
        tests.append(TestResult("success", "chi2_yates", 0.0, 1.0, group,
                                "zero margin: both arms all succeed or all fail"))
    return summaries, tests


def summarize(records: Sequence[Mapping], group_by: str | None = None) -> Report:
    """Per-arm summaries and arm-vs-arm tests, optionally per facet.

    Arms are split on the ``trustmhe`` flag. With ``group_by="t_est"`` each
    facet compares the enabled runs at one horizon against every disabled
    run, since the horizon does not apply to the disabled arm.
    """
    if not records:
        raise ValueError("no records to summarize")
    if group_by is not None and group_by not in GROUP_KEYS:
        raise ValueError(f"group_by must be one of {GROUP_KEYS}")
    aborted = sum(1 for r in records if _truthy(r.get("aborted", False)))
    live = [r for r in records if not _truthy(r.get("aborted", False))]
    enabled = [r for r in live if _truthy(r["trustmhe"])]
    disabled = [r for r in live if not _truthy(r["trustmhe"])]
    summaries, tests = _compare(enabled, disabled, "all")
    if group_by is not None:
        source = enabled if group_by == "t_est" else live
        keys = sorted({str(r[group_by]) for r in source}, key=_sort_key)
        for key in keys:
            label = f"{group_by}={key}"
            en = [r for r in enabled if str(r[group_by]) == key]
            dis = disabled if group_by == "t_est" else [r for r in disabled if str(r[group_by]) == key]
            s, t = _compare(en, dis, label)
            summaries += s
            tests += t
    return Report(tuple(summaries), tuple(tests), aborted)


def _sort_key(k: str):
    try:
        return (0, float(k), k)
    except ValueError:
        return (1, 0.0, k)


def box_quantiles(values: Sequence[float]) -> dict[str, float]:
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        return {"n": 0, "min": math.nan, "q1": math.nan, "median": math.nan, "q3": math.nan, "max": math.nan}
    q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75])
    return {"n": int(v.size), "min": float(v.min()), "q1": float(q1), "median": float(med),
            "q3": float(q3), "max": float(v.max())}
