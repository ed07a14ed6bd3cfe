"""Ranking metrics, paired significance tests and retained-fraction summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.special import betainc
from scipy.stats import rankdata

from .selection import SelectionMask
from .store import Qrels, RunRanking

EXACT_WILCOXON_MAX_N = 20
MIN_NORMALITY_N = 8
# 0.95 quantile of chi-squared with 2 degrees of freedom, -2 ln(0.05)
JB_CRITICAL = -2.0 * math.log(0.05)

ALTERNATIVES = ("two-sided", "greater", "less")


# ---------------------------------------------------------------- metrics


def ndcg_at_k(run: RunRanking, qrels: Qrels, k: int = 10) -> float:
    """nDCG with gain ``2**grade - 1`` and discount ``log2(rank + 1)``.

    The ideal ranking is built from every judged document of the query, so a
    query without relevant judgments scores 0.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    judged = qrels.for_query(run.query_id)
    ideal = sorted((g for g in judged.values() if g > 0), reverse=True)[:k]
    idcg = sum((2.0**g - 1.0) / math.log2(i + 2) for i, g in enumerate(ideal))
    if idcg == 0:
        return 0.0
    dcg = 0.0
    for e in run.entries[:k]:
        g = judged.get(e.doc_id, 0)
        if g > 0:
            dcg += (2.0**g - 1.0) / math.log2(e.rank + 1)
    return dcg / idcg


def average_precision(run: RunRanking, qrels: Qrels) -> float:
    judged = qrels.for_query(run.query_id)
    n_rel = sum(1 for g in judged.values() if g >= 1)
    if n_rel == 0:
        return 0.0
    hits = 0
    total = 0.0
    for e in run.entries:
        if judged.get(e.doc_id, 0) >= 1:
            hits += 1
            total += hits / e.rank
    return total / n_rel


@dataclass(frozen=True)
class MetricReport:
    metric_name: str
    per_query: Mapping[str, float]

    @property
    def mean(self) -> float:
        if not self.per_query:
            return 0.0
        return math.fsum(self.per_query.values()) / len(self.per_query)

    def values(self, query_ids: Sequence[str]) -> np.ndarray:
        return np.array([self.per_query[q] for q in query_ids], dtype=np.float64)


def metric_name(metric: str, k: int = 10) -> str:
    return f"ndcg@{k}" if metric == "ndcg" else metric


def evaluate(runs: Iterable[RunRanking], qrels: Qrels, metric: str = "ndcg", k: int = 10) -> MetricReport:
    if metric == "ndcg":
        fn = lambda r: ndcg_at_k(r, qrels, k)  # noqa: E731
    elif metric == "ap":
        fn = lambda r: average_precision(r, qrels)  # noqa: E731
    else:
        raise ValueError(f"unknown metric {metric!r}")
    return MetricReport(metric_name(metric, k), {r.query_id: fn(r) for r in runs})


# ---------------------------------------------------------------- tests


@dataclass(frozen=True)
class SigTestResult:
    test_name: str
    statistic: float
    p_value: float
    n: int
    alternative: str = "two-sided"
    degenerate: bool = False
    corrected_reject: bool = False
    extra: dict = field(default_factory=dict, compare=False)


def _check_pair(x, y) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise ValueError(f"paired samples differ in length: {x.size} vs {y.size}")
    return x - y


def _check_alternative(alternative: str) -> None:
    if alternative not in ALTERNATIVES:
        raise ValueError(f"alternative must be one of {ALTERNATIVES}, got {alternative!r}")


def student_t_sf(t: float, df: float) -> float:
    """Upper tail P(T > t) via the regularized incomplete beta function."""
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    tail = 0.5 * float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return tail if t >= 0 else 1.0 - tail


def paired_t_test(x, y, alternative: str = "two-sided") -> SigTestResult:
    _check_alternative(alternative)
    d = _check_pair(x, y)
    n = d.size
    if n < 2:
        raise ValueError("paired t-test needs at least two pairs")
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    # sd can underflow to 0 on subnormal differences even when they are not all equal
    if np.ptp(d) == 0 or sd == 0:
        c = float(d[0]) if np.ptp(d) == 0 else mean
        if c == 0:
            return SigTestResult("t-test", 0.0, 1.0, n, alternative, degenerate=True)
        stat = math.copysign(math.inf, c)
        favoured = {"two-sided": True, "greater": c > 0, "less": c < 0}[alternative]
        return SigTestResult("t-test", stat, 0.0 if favoured else 1.0, n, alternative, degenerate=True)
    t = mean / (sd / math.sqrt(n))
    df = n - 1
    if alternative == "two-sided":
        p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    elif alternative == "greater":
        p = student_t_sf(t, df)
    else:
        p = student_t_sf(-t, df)
    return SigTestResult("t-test", t, min(max(p, 0.0), 1.0), n, alternative, extra={"df": df})


def _signed_rank_counts(doubled_ranks: np.ndarray) -> np.ndarray:
    """counts[s] = number of sign patterns whose positive doubled-rank sum is s."""
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for r in doubled_ranks.tolist():
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    return counts


def wilcoxon_signed_rank(x, y, alternative: str = "greater") -> SigTestResult:
    """Wilcoxon signed-rank test on ``x - y``; zero differences are dropped.

    ``statistic`` is the signed-rank sum ``W+ - W-``, so swapping the samples
    flips its sign. The p-value is exact for up to 20 non-zero differences
    (midranks for ties); beyond that a tie- and continuity-corrected normal
    approximation is used.
    """
    _check_alternative(alternative)
    d = _check_pair(x, y)
    d = d[d != 0]
    n = d.size
    if n == 0:
        return SigTestResult("wilcoxon", 0.0, 1.0, 0, alternative, degenerate=True)
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    stat = w_plus - w_minus
    extra = {"w_plus": w_plus, "w_minus": w_minus}
    if n <= EXACT_WILCOXON_MAX_N:
        doubled = np.rint(2 * ranks).astype(np.int64)
        counts = _signed_rank_counts(doubled)
        obs = int(round(2 * w_plus))
        total = 1 << n
        upper = int(counts[obs:].sum())
        lower = int(counts[: obs + 1].sum())
        if alternative == "greater":
            p = upper / total
        elif alternative == "less":
            p = lower / total
        else:
            p = min(1.0, 2 * min(upper, lower) / total)
        extra["method"] = "exact"
        return SigTestResult("wilcoxon", stat, p, n, alternative, extra=extra)
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_counts**3 - tie_counts)) / 48.0
    sd = math.sqrt(var)
    if alternative == "greater":
        p = _normal_sf((w_plus - mean - 0.5) / sd)
    elif alternative == "less":
        p = _normal_sf((mean - w_plus - 0.5) / sd)
    else:
        z = (abs(w_plus - mean) - 0.5) / sd
        p = min(1.0, 2 * _normal_sf(z))
    extra["method"] = "normal"
    return SigTestResult("wilcoxon", stat, min(max(p, 0.0), 1.0), n, alternative, extra=extra)


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def holm_bonferroni(p_values: Sequence[float], alpha: float = 0.05) -> list[bool]:
    p = [float(v) for v in p_values]
    if any(not 0 <= v <= 1 for v in p):
        raise ValueError("p-values must lie in [0, 1]")
    m = len(p)
    order = sorted(range(m), key=lambda i: p[i])
    reject = [False] * m
    for step, i in enumerate(order):
        if p[i] <= alpha / (m - step):
            reject[i] = True
        else:
            break
    return reject


def jarque_bera(x) -> float:
    """Jarque-Bera statistic from (biased) sample skewness and kurtosis."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    n = x.size
    c = x - x.mean()
    m2 = float(np.mean(c**2))
    if m2 == 0:
        return 0.0
    skew = float(np.mean(c**3)) / m2**1.5
    kurt = float(np.mean(c**4)) / m2**2
    return n / 6.0 * (skew**2 + (kurt - 3.0) ** 2 / 4.0)


def select_test(diffs) -> str:
    """``"t-test"`` when the differences pass a Jarque-Bera normality screen, else ``"wilcoxon"``."""
    d = np.asarray(diffs, dtype=np.float64).reshape(-1)
    if d.size < MIN_NORMALITY_N:
        return "wilcoxon"
    return "t-test" if jarque_bera(d) < JB_CRITICAL else "wilcoxon"


def compare(x, y, t_alternative: str = "two-sided", wilcoxon_alternative: str = "greater") -> SigTestResult:
    """Run whichever paired test the normality screen routes ``x - y`` to."""
    d = _check_pair(x, y)
    if select_test(d) == "t-test":
        return paired_t_test(x, y, t_alternative)
    return wilcoxon_signed_rank(x, y, wilcoxon_alternative)


def apply_holm(results: Sequence[SigTestResult], alpha: float = 0.05) -> list[SigTestResult]:
    flags = holm_bonferroni([r.p_value for r in results], alpha)
    return [replace(r, corrected_reject=f) for r, f in zip(results, flags)]


# ---------------------------------------------------------------- masks


@dataclass(frozen=True, eq=False)
class RetainedFractionSummary:
    fractions: np.ndarray
    median: float
    q1: float
    q3: float
    min: float
    max: float
    mean: float


def retained_fraction_summary(masks: Sequence[SelectionMask]) -> RetainedFractionSummary:
    if not masks:
        raise ValueError("no masks to summarize")
    f = np.array([m.size / m.dim for m in masks], dtype=np.float64)
    q1, med, q3 = np.percentile(f, [25, 50, 75])
    return RetainedFractionSummary(
        f, float(med), float(q1), float(q3), float(f.min()), float(f.max()), float(f.mean())
    )
