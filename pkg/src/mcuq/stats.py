"""Relationship between estimated uncertainty and prediction error."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from mcuq.errors import DegenerateStatisticError
from mcuq.metrics import METRICS, metric_matrix
from mcuq.selective import CurveSeries
from mcuq.tensor import LabelSet, MCSampleSet


@dataclass(frozen=True)
class BoxplotSummary:
    group: str
    min: float
    q1: float
    median: float
    q3: float
    max: float
    count: int


@dataclass(frozen=True)
class CorrelationReport:
    """Headline error/uncertainty statistics for one metric.

    ``spearman_rho`` is None when the correlation is undefined (constant
    series or too few items for the bins); ``wasserstein`` is None when one
    of the correct/erroneous groups is empty. The ``*_status`` fields say why.
    """

    metric: str
    spearman_rho: Optional[float]
    spearman_status: str
    wasserstein: Optional[float]
    wasserstein_status: str
    n_correct: int
    n_error: int
    n_bins: int


def rankdata(x) -> np.ndarray:
    """1-based ranks; tied values share the average of their ranks."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    xs = x[order]
    ranks = np.empty(x.size)
    # boundaries of runs of equal values
    starts = np.flatnonzero(np.r_[True, xs[1:] != xs[:-1]])
    ends = np.r_[starts[1:], x.size]
    for s, e in zip(starts, ends):
        ranks[order[s:e]] = 0.5 * (s + 1 + e)
    return ranks


def spearman(x, y) -> float:
    """Spearman rank correlation (Pearson correlation of average-tie ranks).

    Raises:
        DegenerateStatisticError: if either series is constant.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("spearman needs two sequences of equal length")
    if x.size < 3:
        raise ValueError("spearman needs at least 3 points")
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("non-finite input to spearman")
    rx = rankdata(x)
    ry = rankdata(y)
    rx -= rx.mean()
    ry -= ry.mean()
    sxx = float(rx @ rx)
    syy = float(ry @ ry)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateStatisticError("rank correlation undefined for a constant series")
    rho = float(rx @ ry) / np.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, rho)))


def wasserstein_1d(a, b) -> float:
    """Exact 1-Wasserstein distance between two empirical distributions.

    Integrates |F_a - F_b| over the merged sorted support; each sample has
    mass 1/len.
    """
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("wasserstein_1d of an empty sample")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValueError("non-finite input to wasserstein_1d")
    if a.size == b.size:
        return float(np.abs(a - b).mean())
    support = np.concatenate([a, b])
    support.sort(kind="mergesort")
    widths = np.diff(support)
    fa = np.searchsorted(a, support[:-1], side="right") / a.size
    fb = np.searchsorted(b, support[:-1], side="right") / b.size
    return float(np.sum(np.abs(fa - fb) * widths))


def split_by_correctness(uncertainties, predictions, labels) -> tuple[np.ndarray, np.ndarray]:
    u = np.asarray(uncertainties, dtype=np.float64)
    p = np.asarray(predictions)
    y = labels.labels if isinstance(labels, LabelSet) else np.asarray(labels)
    if not (u.shape == p.shape == y.shape):
        raise ValueError("uncertainties, predictions and labels differ in length")
    ok = p == y
    return u[ok], u[~ok]


def _median_sorted(s: np.ndarray) -> float:
    n = s.size
    mid = n // 2
    return float(s[mid]) if n % 2 else 0.5 * (float(s[mid - 1]) + float(s[mid]))


def boxplot_summary(values, group: str = "all") -> BoxplotSummary:
    """Five-number summary with median-of-halves quartiles.

    The lower and upper halves exclude the median element when the count is
    odd; each quartile is the median of its half (averaging the two middle
    values for even halves). Min and max are the raw extremes.
    """
    s = np.sort(np.asarray(values, dtype=np.float64).ravel())
    n = s.size
    if n == 0:
        raise ValueError("boxplot of an empty group")
    med = _median_sorted(s)
    if n == 1:
        q1 = q3 = med
    else:
        q1 = _median_sorted(s[: n // 2])
        q3 = _median_sorted(s[(n + 1) // 2 :])
    return BoxplotSummary(group, float(s[0]), q1, med, q3, float(s[-1]), n)


def binned_uncertainty_accuracy(uncertainties, correct, n_bins: int = 20) -> CurveSeries:
    """Sort by uncertainty, cut into ``n_bins`` equal-count bins, and report
    (mean uncertainty, accuracy) per bin.

    When N is not divisible by ``n_bins`` the earliest bins get one extra item.
    """
    u = np.asarray(uncertainties, dtype=np.float64)
    ok = np.asarray(correct, dtype=bool)
    if u.shape != ok.shape or u.ndim != 1:
        raise ValueError("uncertainties and correct flags differ in length")
    if n_bins < 2:
        raise ValueError("need at least 2 bins")
    if u.size < n_bins:
        raise ValueError(f"{u.size} items cannot fill {n_bins} bins")
    order = np.argsort(u, kind="stable")
    pts = []
    for idx in np.array_split(order, n_bins):
        pts.append((float(u[idx].mean()), float(np.count_nonzero(ok[idx])) / idx.size))
    return CurveSeries("bin_mean_uncertainty", "bin_accuracy", tuple(pts), strict=False)


def error_uncertainty_report(
    mcs: MCSampleSet,
    labels: LabelSet,
    metric: str = "sigma",
    n_bins: int = 20,
    _matrix: Optional[dict] = None,
) -> CorrelationReport:
    """Spearman correlation between binned uncertainty and bin error rate,
    plus the Wasserstein distance between the uncertainty distributions of
    correct and erroneous predictions.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}")
    if labels is None:
        raise ValueError("error/uncertainty statistics require labels")
    labels.check_against(mcs)
    m = _matrix if _matrix is not None else metric_matrix(mcs)
    u = m[metric]
    correct = m["pred"] == labels.labels
    good, bad = u[correct], u[~correct]

    rho, rho_status = None, "ok"
    if mcs.N < max(n_bins, 3):
        rho_status = "degenerate: too few items for bins"
    else:
        curve = binned_uncertainty_accuracy(u, correct, n_bins)
        try:
            rho = spearman(curve.xs, 1.0 - curve.ys)
        except DegenerateStatisticError:
            rho_status = "degenerate: constant series"

    if good.size and bad.size:
        w, w_status = wasserstein_1d(good, bad), "ok"
    else:
        w, w_status = None, "unavailable: empty group"
    return CorrelationReport(
        metric, rho, rho_status, w, w_status, int(good.size), int(bad.size), n_bins
    )


def grouped_boxplots(uncertainties, correct) -> dict[str, Optional[BoxplotSummary]]:
    u = np.asarray(uncertainties, dtype=np.float64)
    ok = np.asarray(correct, dtype=bool)
    return {
        "correct": boxplot_summary(u[ok], "correct") if ok.any() else None,
        "erroneous": boxplot_summary(u[~ok], "erroneous") if (~ok).any() else None,
    }
