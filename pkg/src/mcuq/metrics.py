"""Per-item uncertainty metrics computed from Monte-Carlo softmax samples.

All variance-type quantities use the population (1/T) normalization and
entropies are in nats. Means over the pass axis are taken relative to the
first pass (``p0 + mean(p - p0)``) so that identical passes give exactly
zero spread.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from mcuq.tensor import MCSampleSet

METRICS = (
    "sigma",
    "entropy",
    "mi",
    "feinman",
    "leibig",
    "kwon-aleatoric",
    "kwon-epistemic",
)


@dataclass(frozen=True)
class ItemUncertainty:
    item: int
    predicted_class: int
    mean_probs: tuple[float, ...]
    sigma_uncertainty: float
    entropy: float
    mutual_information: float
    feinman: float
    leibig: float
    kwon_aleatoric: float
    kwon_epistemic: float

    def metric(self, name: str) -> float:
        return getattr(self, _FIELD[name])


_FIELD = {
    "sigma": "sigma_uncertainty",
    "entropy": "entropy",
    "mi": "mutual_information",
    "feinman": "feinman",
    "leibig": "leibig",
    "kwon-aleatoric": "kwon_aleatoric",
    "kwon-epistemic": "kwon_epistemic",
}


# -- vectorized kernels over a (T, n, C) block ---------------------------------


# Every reduction runs over the last, contiguous axis so per-item results are
# bit-identical whatever the block width (single item, chunk, or full set).


def _pass_mean(x: np.ndarray) -> np.ndarray:
    ref = x[..., :1]
    return ref[..., 0] + (x - ref).mean(axis=-1)


def _entropy(p: np.ndarray) -> np.ndarray:
    safe = np.where(p > 0.0, p, 1.0)
    return -(p * np.log(safe)).sum(axis=-1)


def _block_metrics(block: np.ndarray) -> dict[str, np.ndarray]:
    by_pass = np.ascontiguousarray(block.transpose(1, 0, 2))  # (n, T, C)
    by_class = np.ascontiguousarray(block.transpose(1, 2, 0))  # (n, C, T)
    mu = _pass_mean(by_class)
    dev = by_class - mu[..., None]
    var = (dev * dev).mean(axis=-1)
    std = np.sqrt(var)
    pred = mu.argmax(axis=1)
    entropy = _entropy(mu)
    mi = np.maximum(entropy - _pass_mean(_entropy(by_pass)), 0.0)
    epistemic = var.sum(axis=-1)
    aleatoric = (by_pass * (1.0 - by_pass)).sum(axis=-1).mean(axis=-1)
    return {
        "mean": mu,
        "std": std,
        "pred": pred,
        "sigma": std.mean(axis=1),
        "entropy": entropy,
        "mi": mi,
        "feinman": epistemic,
        "leibig": np.take_along_axis(std, pred[:, None], axis=1)[:, 0],
        "kwon-aleatoric": aleatoric,
        "kwon-epistemic": epistemic,
    }


def _one(mcs: MCSampleSet, item: int) -> dict[str, np.ndarray]:
    mcs.item(item)  # bounds check
    return _block_metrics(mcs.probs[:, item : item + 1, :])


# -- single-item operations ----------------------------------------------------


def predictive_mean(mcs: MCSampleSet, item: int) -> np.ndarray:
    """Average softmax vector over the T passes."""
    return _one(mcs, item)["mean"][0]


def predicted_class(mcs: MCSampleSet, item: int) -> int:
    """Argmax of the predictive mean; ties go to the lowest class index."""
    return int(_one(mcs, item)["pred"][0])


def per_class_std(mcs: MCSampleSet, item: int) -> np.ndarray:
    return _one(mcs, item)["std"][0]


def sigma_uncertainty(mcs: MCSampleSet, item: int) -> float:
    """Mean over classes of the per-class standard deviation across passes."""
    return float(_one(mcs, item)["sigma"][0])


def predictive_entropy(mcs: MCSampleSet, item: int) -> float:
    return float(_one(mcs, item)["entropy"][0])


def mutual_information(mcs: MCSampleSet, item: int) -> float:
    """Entropy of the mean minus the mean per-pass entropy (BALD), clamped at 0."""
    return float(_one(mcs, item)["mi"][0])


def feinman_uncertainty(mcs: MCSampleSet, item: int) -> float:
    """Sum over classes of the across-pass variance (trace of the sample covariance)."""
    return float(_one(mcs, item)["feinman"][0])


def leibig_uncertainty(mcs: MCSampleSet, item: int) -> float:
    """Across-pass standard deviation of the predicted class's probability."""
    return float(_one(mcs, item)["leibig"][0])


def kwon_decomposition(mcs: MCSampleSet, item: int) -> tuple[float, float]:
    """Traces of the aleatoric ``mean(diag(p) - p p^T)`` and epistemic
    ``mean((p - mu)(p - mu)^T)`` terms.

    Returns:
        ``(aleatoric, epistemic)``
    """
    m = _one(mcs, item)
    return float(m["kwon-aleatoric"][0]), float(m["kwon-epistemic"][0])


# -- batch ----------------------------------------------------------------------


def _records(block: np.ndarray, start: int) -> list[ItemUncertainty]:
    m = _block_metrics(block)
    out = []
    for k in range(block.shape[1]):
        out.append(
            ItemUncertainty(
                item=start + k,
                predicted_class=int(m["pred"][k]),
                mean_probs=tuple(float(v) for v in m["mean"][k]),
                sigma_uncertainty=float(m["sigma"][k]),
                entropy=float(m["entropy"][k]),
                mutual_information=float(m["mi"][k]),
                feinman=float(m["feinman"][k]),
                leibig=float(m["leibig"][k]),
                kwon_aleatoric=float(m["kwon-aleatoric"][k]),
                kwon_epistemic=float(m["kwon-epistemic"][k]),
            )
        )
    return out


def compute_all(mcs: MCSampleSet, threads: Optional[int] = None) -> list[ItemUncertainty]:
    """One :class:`ItemUncertainty` per item, ordered by item index.

    Items are split into contiguous chunks evaluated on ``threads`` workers;
    every metric is computed per item, so the output does not depend on the
    worker count.
    """
    threads = max(1, threads or os.cpu_count() or 1)
    N = mcs.N
    if threads == 1 or N < 2 * threads:
        return _records(mcs.probs, 0)
    bounds = np.linspace(0, N, threads + 1).astype(int)
    spans = [(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = pool.map(lambda ab: _records(mcs.probs[:, ab[0] : ab[1], :], ab[0]), spans)
        return [rec for part in parts for rec in part]


def metric_matrix(mcs: MCSampleSet) -> dict[str, np.ndarray]:
    """All metrics as length-N arrays, plus ``mean``, ``std`` and ``pred``."""
    return _block_metrics(mcs.probs)


def metric_values(records: Sequence[ItemUncertainty], name: str) -> np.ndarray:
    if name not in _FIELD:
        raise ValueError(f"unknown metric {name!r}; choose from {', '.join(METRICS)}")
    return np.array([r.metric(name) for r in records], dtype=np.float64)


def normalize_metric(values) -> np.ndarray:
    """Min-max scale to [0, 1]; a constant input maps to all zeros."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("cannot normalize an empty sequence")
    if np.isnan(v).any():
        raise ValueError("NaN in metric values")
    if not np.isfinite(v).all():
        raise ValueError("non-finite metric values")
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros_like(v)
    return np.clip((v - lo) / (hi - lo), 0.0, 1.0)
