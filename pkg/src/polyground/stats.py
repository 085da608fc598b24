"""Nonparametric statistical protocol over paired (image, concept) blocks.

Three complementary tests quantify whether agreement differs
systematically across languages:

* a Friedman repeated-measures test with languages as treatments and
  (image, concept) pairs as blocks;
* a paired one-sided Wilcoxon signed-rank test on per-block
  high-resource vs low-resource group means (the headline test);
* per low-resource language, a one-sided Mann-Whitney U test against
  the pooled high-resource distribution.

Wilcoxon and Mann-Whitney run in exact mode below configurable sample
cutoffs (the exact null distributions are built by dynamic programming,
equivalent to full sign/labeling enumeration) and in tie- and
continuity-corrected normal approximation above them. P-values are also
carried as log10 so magnitudes far below float underflow survive into
reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from math import comb

import numpy as np
from scipy.stats import chi2, norm, rankdata

from .agreement import MetricRecord
from .corpusio import Manifest

LN10 = math.log(10.0)

WILCOXON_EXACT_MAX_N = 20
MANNWHITNEY_EXACT_MAX_NM = 400


def _chi2_log10_sf(stat: float, df: int) -> float:
    """log10 of the chi-squared survival function, stable for statistics
    whose tail probability underflows scipy's log-sf."""
    log_sf = float(chi2.logsf(stat, df))
    if math.isfinite(log_sf):
        return log_sf / LN10
    # Asymptotic series for the regularized upper incomplete gamma
    # Q(a, z) ~ z^(a-1) e^(-z) / Gamma(a) * sum_k prod_j (a-j)/z^k,  z >> a.
    a, z = df / 2.0, stat / 2.0
    term, series = 1.0, 1.0
    for k in range(1, 64):
        term *= (a - k) / z
        series += term
        if abs(term) < 1e-17 * series:
            break
    log_q = (a - 1.0) * math.log(z) - z - math.lgamma(a) + math.log(max(series, 1e-300))
    return log_q / LN10


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    log10_p: float
    n_used: int
    method: str  # exact | normal_approx | chi2_approx
    dropped_rows: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p_value out of [0, 1]: {self.p_value}")

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "p": self.p_value,
            "log10_p": self.log10_p,
            "n_used": self.n_used,
            "method": self.method,
            "dropped_rows": self.dropped_rows,
        }


@dataclass(frozen=True)
class PairedSeries:
    """Blocks x treatments matrix with one row per (image, concept) block."""

    keys: tuple[tuple[str, str], ...]
    treatments: tuple[str, ...]
    values: np.ndarray
    dropped_rows: int = 0


def _signed_rank_tail_prob(doubled_ranks: np.ndarray, doubled_w: int) -> float:
    """P(W+ >= w) under random signs, by convolution over the doubled-rank
    generating function (identical to enumerating all 2^n sign vectors)."""
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for s in doubled_ranks:
        shifted = np.zeros_like(counts)
        shifted[s:] = counts[: total + 1 - s]
        counts = counts + shifted
    doubled_w = min(max(doubled_w, 0), total + 1)
    return float(counts[doubled_w:].sum() / 2.0 ** len(doubled_ranks))


def wilcoxon_signed_rank(
    x,
    y,
    alternative: str = "greater",
    exact_max_n: int = WILCOXON_EXACT_MAX_N,
    method: str = "auto",
) -> TestResult:
    """Paired Wilcoxon signed-rank test.

    Zero differences are dropped (classic treatment; the drop count is
    reported via ``dropped_rows`` so the choice is auditable). Ties in
    |difference| receive average ranks. Exact p-values below the cutoff,
    tie-corrected normal approximation with 0.5 continuity correction
    above it.
    """
    if alternative not in ("greater", "less"):
        raise ValueError(f"alternative must be 'greater' or 'less', got {alternative!r}")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"x and y must be 1D of equal length, got {x.shape} and {y.shape}")
    if alternative == "less":
        x, y = y, x  # P(x < y) == P(y > x)

    d = x - y
    nonzero = d != 0
    n_zeros = int(d.size - np.count_nonzero(nonzero))
    d = d[nonzero]
    n = d.size
    if n == 0:
        raise ValueError("all differences are zero; no data for the signed-rank test")

    ranks = rankdata(np.abs(d), method="average")
    w_plus = float(ranks[d > 0].sum())

    if method == "auto":
        method = "exact" if n <= exact_max_n else "normal_approx"
    if method == "exact":
        # Average ranks are multiples of 0.5, so doubled ranks are exact ints.
        doubled = np.rint(2.0 * ranks).astype(np.int64)
        p = _signed_rank_tail_prob(doubled, int(round(2.0 * w_plus)))
        log10_p = math.log10(p) if p > 0 else -math.inf
    elif method == "normal_approx":
        mean = n * (n + 1) / 4.0
        tie_sizes = np.unique(ranks, return_counts=True)[1]
        var = n * (n + 1) * (2 * n + 1) / 24.0 - float((tie_sizes**3 - tie_sizes).sum()) / 48.0
        if var <= 0:
            raise ValueError("zero variance in signed-rank null (all |d| tied to one value?)")
        z = (w_plus - 0.5 - mean) / math.sqrt(var)
        p = float(norm.sf(z))
        log10_p = float(norm.logsf(z)) / LN10
    else:
        raise ValueError(f"method must be 'auto', 'exact' or 'normal_approx', got {method!r}")

    return TestResult(
        statistic=w_plus,
        p_value=p,
        log10_p=log10_p,
        n_used=n,
        method=method,
        dropped_rows=n_zeros,
    )


def friedman(values) -> TestResult:
    """Friedman chi-squared test over a blocks x treatments matrix.

    Within-block average ranks with the standard tie-correction divisor;
    an all-tied table yields chi2 = 0, p = 1.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected a blocks x treatments matrix, got shape {arr.shape}")
    n, k = arr.shape
    if n < 2 or k < 2:
        raise ValueError(f"need >= 2 blocks and >= 2 treatments, got {n} x {k}")

    ranks = rankdata(arr, method="average", axis=1)
    rank_sums = ranks.sum(axis=0)
    chi2_stat = 12.0 / (n * k * (k + 1)) * float((rank_sums**2).sum()) - 3.0 * n * (k + 1)

    tie_term = 0.0
    for row in arr:
        tie_sizes = np.unique(row, return_counts=True)[1]
        tie_term += float((tie_sizes**3 - tie_sizes).sum())
    correction = 1.0 - tie_term / (n * k * (k**2 - 1))
    if correction <= 0.0:
        chi2_stat, p, log10_p = 0.0, 1.0, 0.0
    else:
        chi2_stat /= correction
        chi2_stat = max(chi2_stat, 0.0)  # guard round-off at the fully-tied edge
        p = float(chi2.sf(chi2_stat, k - 1))
        log10_p = _chi2_log10_sf(chi2_stat, k - 1)

    return TestResult(
        statistic=chi2_stat, p_value=p, log10_p=log10_p, n_used=n, method="chi2_approx"
    )


def _mann_whitney_exact_tail(x: np.ndarray, y: np.ndarray, doubled_u: int) -> float:
    """P(U >= u) over all C(n+m, n) equally likely labelings of the pooled
    values, counted by dynamic programming over tie groups."""
    n, m = x.size, y.size
    pooled = np.concatenate([x, y])
    groups = np.unique(pooled, return_counts=True)[1]  # ascending value order

    # state: (number of x's placed so far, doubled U accumulated) -> labelings
    states: dict[tuple[int, int], int] = {(0, 0): 1}
    below = 0
    for c in groups.tolist():
        nxt: dict[tuple[int, int], int] = {}
        for (a_total, two_u), ways in states.items():
            for a in range(0, min(c, n - a_total) + 1):
                key = (
                    a_total + a,
                    two_u + 2 * a * (below - a_total) + a * (c - a),
                )
                nxt[key] = nxt.get(key, 0) + ways * comb(c, a)
        states = nxt
        below += c
    total = comb(n + m, n)
    favorable = sum(ways for (a_total, two_u), ways in states.items() if a_total == n and two_u >= doubled_u)
    return favorable / total


def mann_whitney_u(
    x,
    y,
    alternative: str = "greater",
    exact_max_nm: int = MANNWHITNEY_EXACT_MAX_NM,
    method: str = "auto",
) -> TestResult:
    """One-sided Mann-Whitney U test (x stochastically greater than y).

    U counts pairs with x > y plus half the ties. Exact mode enumerates
    the labeling distribution (via a tie-group DP equal to full
    enumeration) when n*m is at or below the cutoff; otherwise a tie- and
    continuity-corrected normal approximation is used.
    """
    if alternative not in ("greater", "less"):
        raise ValueError(f"alternative must be 'greater' or 'less', got {alternative!r}")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.size == 0 or y.size == 0:
        raise ValueError("x and y must be non-empty 1D arrays")
    if alternative == "less":
        x, y = y, x

    n, m = x.size, y.size
    pooled = np.concatenate([x, y])
    ranks = rankdata(pooled, method="average")
    u_stat = float(ranks[:n].sum()) - n * (n + 1) / 2.0

    if method == "auto":
        method = "exact" if n * m <= exact_max_nm else "normal_approx"
    if method == "exact":
        p = _mann_whitney_exact_tail(x, y, int(round(2.0 * u_stat)))
        log10_p = math.log10(p) if p > 0 else -math.inf
    elif method == "normal_approx":
        mean = n * m / 2.0
        big_n = n + m
        tie_sizes = np.unique(pooled, return_counts=True)[1]
        tie_term = float((tie_sizes**3 - tie_sizes).sum()) / (big_n * (big_n - 1))
        var = n * m / 12.0 * ((big_n + 1) - tie_term)
        if var <= 0:
            # every pooled value identical: U equals its mean with certainty
            p, log10_p = 1.0, 0.0
        else:
            z = (u_stat - 0.5 - mean) / math.sqrt(var)
            p = float(norm.sf(z))
            log10_p = float(norm.logsf(z)) / LN10
    else:
        raise ValueError(f"method must be 'auto', 'exact' or 'normal_approx', got {method!r}")

    return TestResult(
        statistic=u_stat, p_value=p, log10_p=log10_p, n_used=n + m, method=method
    )


def hr_lr_pairing(
    records: list[MetricRecord], manifest: Manifest, metric: str = "iou_cluster"
) -> PairedSeries:
    """Per (image, concept) block means over high- and low-resource languages.

    Blocks where either group has no defined value are dropped whole and
    counted; nothing is imputed.
    """
    hr = set(manifest.languages_by_class("high"))
    lr = set(manifest.languages_by_class("low"))
    if not hr or not lr:
        raise ValueError("manifest must tag at least one high- and one low-resource language")

    blocks: dict[tuple[str, str], tuple[list[float], list[float]]] = {}
    for rec in records:
        value = rec.value(metric)
        group = 0 if rec.language in hr else 1 if rec.language in lr else None
        if group is None:
            continue
        bucket = blocks.setdefault((rec.image_id, rec.concept), ([], []))
        if value is not None:
            bucket[group].append(value)

    keys, rows, dropped = [], [], 0
    for key in sorted(blocks):
        hr_vals, lr_vals = blocks[key]
        if not hr_vals or not lr_vals:
            dropped += 1
            continue
        keys.append(key)
        rows.append((float(np.mean(hr_vals)), float(np.mean(lr_vals))))

    return PairedSeries(
        keys=tuple(keys),
        treatments=("hr_mean", "lr_mean"),
        values=np.asarray(rows, dtype=np.float64).reshape(len(rows), 2),
        dropped_rows=dropped,
    )


@dataclass(frozen=True)
class ProtocolReport:
    metric: str
    friedman: TestResult
    wilcoxon_hr_gt_lr: TestResult
    mann_whitney_lr: dict[str, TestResult]

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "friedman": self.friedman.to_dict(),
            "wilcoxon_hr_gt_lr": self.wilcoxon_hr_gt_lr.to_dict(),
            "mann_whitney_lr": {
                lang: result.to_dict() for lang, result in self.mann_whitney_lr.items()
            },
        }


def run_protocol(
    records: list[MetricRecord],
    manifest: Manifest,
    metric: str = "iou_cluster",
    wilcoxon_exact_max_n: int = WILCOXON_EXACT_MAX_N,
    mw_exact_max_nm: int = MANNWHITNEY_EXACT_MAX_NM,
) -> ProtocolReport:
    """Run all three tests for one metric.

    Friedman treats every non-reference language as a treatment with
    (image, concept) blocks; blocks with any undefined entry are dropped
    listwise. The Wilcoxon compares per-block HR vs LR means, and each
    low-resource language is tested against the pooled high-resource
    values with Mann-Whitney.
    """
    languages = manifest.non_reference_languages()
    if len(languages) < 2:
        raise ValueError("protocol requires at least 2 non-reference languages")

    by_block: dict[tuple[str, str], dict[str, float | None]] = {}
    for rec in records:
        if rec.language not in languages:
            continue
        by_block.setdefault((rec.image_id, rec.concept), {})[rec.language] = rec.value(metric)

    full_rows, fr_dropped = [], 0
    for key in sorted(by_block):
        row = [by_block[key].get(lang) for lang in languages]
        if any(v is None for v in row):
            fr_dropped += 1
            continue
        full_rows.append(row)
    friedman_result = replace(
        friedman(np.asarray(full_rows, dtype=np.float64)), dropped_rows=fr_dropped
    )

    pairing = hr_lr_pairing(records, manifest, metric)
    wilcoxon_result = wilcoxon_signed_rank(
        pairing.values[:, 0],
        pairing.values[:, 1],
        alternative="greater",
        exact_max_n=wilcoxon_exact_max_n,
    )
    wilcoxon_result = replace(
        wilcoxon_result, dropped_rows=wilcoxon_result.dropped_rows + pairing.dropped_rows
    )

    hr_langs = set(manifest.languages_by_class("high"))
    hr_values, hr_undef = [], 0
    for rec in records:
        if rec.language in hr_langs:
            value = rec.value(metric)
            if value is None:
                hr_undef += 1
            else:
                hr_values.append(value)

    mw_results = {}
    for lang in manifest.languages_by_class("low"):
        lang_values, lang_undef = [], 0
        for rec in records:
            if rec.language == lang:
                value = rec.value(metric)
                if value is None:
                    lang_undef += 1
                else:
                    lang_values.append(value)
        result = mann_whitney_u(
            np.asarray(hr_values),
            np.asarray(lang_values),
            alternative="greater",
            exact_max_nm=mw_exact_max_nm,
        )
        mw_results[lang] = replace(result, dropped_rows=hr_undef + lang_undef)

    return ProtocolReport(
        metric=metric,
        friedman=friedman_result,
        wilcoxon_hr_gt_lr=wilcoxon_result,
        mann_whitney_lr=mw_results,
    )
