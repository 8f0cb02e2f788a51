"""Reject-option classification: acceptance rule, ARQ, referral curves."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from mcuq.metrics import metric_matrix, normalize_metric
from mcuq.tensor import LabelSet, MCSampleSet


@dataclass(frozen=True)
class SelectionOutcome:
    item: int
    accepted: bool
    margin: float
    threshold: float
    predicted_class: int
    correct: Optional[bool] = None


@dataclass(frozen=True)
class ARQParams:
    epsilon: float = 0.0
    alpha: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        for name in ("epsilon", "alpha", "beta"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")


@dataclass(frozen=True)
class CurveSeries:
    """Ordered (x, y) points with axis labels.

    ``x`` must be strictly increasing unless ``strict=False`` (binned series,
    where tied uncertainties can produce equal bin means).
    """

    x_label: str
    y_label: str
    points: tuple[tuple[float, float], ...]
    note: str = ""
    strict: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        pts = tuple((float(x), float(y)) for x, y in self.points)
        object.__setattr__(self, "points", pts)
        xs = [p[0] for p in pts]
        bad = any(b <= a for a, b in zip(xs, xs[1:])) if self.strict else any(
            b < a for a, b in zip(xs, xs[1:])
        )
        if bad:
            raise ValueError(f"x values of {self.y_label!r} curve are not increasing")

    @property
    def xs(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def ys(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])


def acceptance_rule(mean_probs, class_stds, epsilon: float) -> tuple[bool, float, float]:
    """Accept iff the gap between the two largest class probabilities is at
    least ``epsilon`` times the spread of the most likely class.

    Returns:
        ``(accepted, margin, threshold)``
    """
    mu = np.asarray(mean_probs, dtype=np.float64)
    sd = np.asarray(class_stds, dtype=np.float64)
    if mu.ndim != 1 or mu.size < 2:
        raise ValueError("acceptance rule needs at least two classes")
    if sd.shape != mu.shape:
        raise ValueError("mean_probs and class_stds differ in length")
    if epsilon < 0 or (sd < 0).any():
        raise ValueError("epsilon and class stds must be nonnegative")
    top = int(mu.argmax())
    p1, p2 = np.sort(mu)[::-1][:2]
    margin = float(abs(p1 - p2))
    threshold = float(epsilon * sd[top])
    return margin >= threshold, margin, threshold


def _decide(mean: np.ndarray, std: np.ndarray, pred: np.ndarray, epsilon: float):
    """Vectorized acceptance rule over N items."""
    top2 = np.sort(mean, axis=1)[:, -2:]
    margin = np.abs(top2[:, 1] - top2[:, 0])
    threshold = epsilon * np.take_along_axis(std, pred[:, None], axis=1)[:, 0]
    return margin >= threshold, margin, threshold


def select(
    mcs: MCSampleSet, epsilon: float, labels: Optional[LabelSet] = None
) -> list[SelectionOutcome]:
    """Apply the acceptance rule to every item."""
    if epsilon < 0 or not math.isfinite(epsilon):
        raise ValueError("epsilon must be finite and >= 0")
    if labels is not None:
        labels.check_against(mcs)
    m = metric_matrix(mcs)
    acc, margin, thr = _decide(m["mean"], m["std"], m["pred"], epsilon)
    out = []
    for i in range(mcs.N):
        correct = None if labels is None else bool(m["pred"][i] == labels.labels[i])
        out.append(
            SelectionOutcome(
                i, bool(acc[i]), float(margin[i]), float(thr[i]), int(m["pred"][i]), correct
            )
        )
    return out


def accuracy(predictions: Sequence[int], labels) -> float:
    """Fraction of predictions equal to the label."""
    y = labels.labels if isinstance(labels, LabelSet) else np.asarray(labels)
    p = np.asarray(predictions)
    if p.shape != y.shape:
        raise ValueError(f"{p.size} predictions for {y.size} labels")
    if p.size == 0:
        raise ValueError("accuracy of an empty set")
    return float(np.count_nonzero(p == y)) / p.size


def _arq_counts(n_ok: int, n_wrong: int, n_rej: int, alpha: float, beta: float) -> float:
    return (n_ok - alpha * n_wrong - beta * n_rej) / (n_ok + n_wrong + n_rej)


def arq(outcomes: Sequence[SelectionOutcome], params: ARQParams) -> float:
    """Accuracy-rejection quotient.

    Each accepted correct item scores +1, each accepted error costs ``alpha``
    and each rejection costs ``beta``; the total is divided by N. Rejected
    items score nothing even when their prediction was right.
    """
    if not outcomes:
        raise ValueError("ARQ of an empty set")
    if any(o.correct is None for o in outcomes):
        raise ValueError("ARQ requires labels (every outcome needs a correct flag)")
    ok = sum(1 for o in outcomes if o.accepted and o.correct)
    wrong = sum(1 for o in outcomes if o.accepted and not o.correct)
    rej = len(outcomes) - ok - wrong
    return _arq_counts(ok, wrong, rej, params.alpha, params.beta)


def arq_sweep(
    mcs: MCSampleSet,
    labels: LabelSet,
    epsilons: Sequence[float],
    alpha: float = 1.0,
    beta: float = 0.0,
) -> CurveSeries:
    eps = [float(e) for e in epsilons]
    if not eps:
        raise ValueError("empty epsilon grid")
    if eps[0] < 0 or any(b <= a for a, b in zip(eps, eps[1:])):
        raise ValueError("epsilons must be nonnegative and strictly increasing")
    ARQParams(eps[-1], alpha, beta)
    labels.check_against(mcs)
    m = metric_matrix(mcs)
    correct = m["pred"] == labels.labels
    pts = []
    for e in eps:
        acc, _, _ = _decide(m["mean"], m["std"], m["pred"], e)
        ok = int(np.count_nonzero(acc & correct))
        wrong = int(np.count_nonzero(acc & ~correct))
        pts.append((e, _arq_counts(ok, wrong, mcs.N - ok - wrong, alpha, beta)))
    return CurveSeries("epsilon", f"arq(alpha={alpha:g},beta={beta:g})", tuple(pts))


def referral_count(fraction: float, n: int) -> int:
    """Number of items referred at ``fraction``: ceil(fraction * n).

    The product is rounded to 9 decimals first so that e.g. 0.3 * 10 refers
    3 items rather than 4.
    """
    return min(n, math.ceil(round(fraction * n, 9)))


def referral_curve(uncertainties, correct, fractions) -> CurveSeries:
    """Accuracy on the items left after referring the most uncertain ones.

    For each fraction r the ceil(r*N) most uncertain items are removed (equal
    uncertainties: lower item index is referred first). An empty remainder
    counts as accuracy 1.0.
    """
    u = np.asarray(uncertainties, dtype=np.float64)
    ok = np.asarray(correct, dtype=bool)
    if u.shape != ok.shape or u.ndim != 1:
        raise ValueError("uncertainties and correct flags differ in length")
    fr = [float(f) for f in fractions]
    if any(not 0.0 <= f <= 1.0 for f in fr) or any(b <= a for a, b in zip(fr, fr[1:])):
        raise ValueError("fractions must be strictly increasing within [0, 1]")
    n = u.size
    # most uncertain first, lower index first among equals
    order = np.lexsort((np.arange(n), -u))
    ok_sorted = ok[order]
    # suffix sums: correct count among items order[k:]
    tail_ok = np.concatenate([np.cumsum(ok_sorted[::-1])[::-1], [0]])
    pts = []
    for f in fr:
        k = referral_count(f, n)
        kept = n - k
        pts.append((f, 1.0 if kept == 0 else float(tail_ok[k]) / kept))
    return CurveSeries(
        "referred_fraction", "accuracy", tuple(pts), note="empty remainder reported as 1.0"
    )


def accuracy_vs_threshold(uncertainties, correct, thresholds) -> CurveSeries:
    """Accuracy over items whose normalized uncertainty is <= each threshold."""
    u = np.asarray(uncertainties, dtype=np.float64)
    ok = np.asarray(correct, dtype=bool)
    if u.shape != ok.shape or u.ndim != 1:
        raise ValueError("uncertainties and correct flags differ in length")
    if u.size and (np.isnan(u).any() or u.min() < 0.0 or u.max() > 1.0):
        raise ValueError("uncertainties must be normalized to [0, 1] (see normalize_metric)")
    pts = []
    for th in thresholds:
        keep = u <= th
        n = int(np.count_nonzero(keep))
        pts.append((th, 1.0 if n == 0 else float(np.count_nonzero(keep & ok)) / n))
    return CurveSeries(
        "normalized_uncertainty", "accuracy", tuple(pts), note="empty retained set reported as 1.0"
    )


def epsilon_grid(start: float, stop: float, step: float) -> list[float]:
    """Inclusive grid ``start, start+step, ..., stop`` built by multiplication."""
    if step <= 0:
        raise ValueError("grid step must be positive")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    if n < 1:
        raise ValueError("empty grid")
    return [start + k * step for k in range(n)]


__all__ = [
    "ARQParams",
    "CurveSeries",
    "SelectionOutcome",
    "acceptance_rule",
    "accuracy",
    "accuracy_vs_threshold",
    "arq",
    "arq_sweep",
    "epsilon_grid",
    "normalize_metric",
    "referral_curve",
    "select",
]
