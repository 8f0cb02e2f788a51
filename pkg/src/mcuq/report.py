"""Deterministic JSON reports and curve CSVs.

Floats are printed with 12 significant digits (``%.12g``), keys are sorted,
and indentation is fixed, so identical inputs give byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict
from typing import Any, Optional

import numpy as np

from mcuq.metrics import METRICS, ItemUncertainty, compute_all, metric_matrix, metric_values
from mcuq.selective import (
    ARQParams,
    CurveSeries,
    SelectionOutcome,
    accuracy,
    arq,
    arq_sweep,
    select,
)
from mcuq.stats import binned_uncertainty_accuracy, error_uncertainty_report, grouped_boxplots
from mcuq.tensor import LabelSet, MCSampleSet

REPORT_VERSION = 1


def fmt_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"non-finite value {x!r} cannot be written to a report")
    return "%.12g" % x


def dumps(obj: Any, indent: int = 1) -> str:
    """JSON text with sorted keys and fixed 12-significant-digit floats."""
    out: list[str] = []
    _emit(obj, out, 0, indent)
    return "".join(out) + "\n"


def _emit(obj, out, level, indent):
    pad = "\n" + " " * (indent * (level + 1))
    end = "\n" + " " * (indent * level)
    if obj is None:
        out.append("null")
    elif isinstance(obj, (bool, np.bool_)):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(fmt_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{")
        for k, key in enumerate(sorted(obj)):
            out.append(("," if k else "") + pad)
            _emit(str(key), out, level + 1, indent)
            out.append(": ")
            _emit(obj[key], out, level + 1, indent)
        out.append(end + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            out.append("[]")
            return
        # flat numeric rows stay on one line
        if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool) for v in seq):
            out.append("[")
            for k, v in enumerate(seq):
                out.append(", " if k else "")
                _emit(v, out, level + 1, indent)
            out.append("]")
            return
        out.append("[")
        for k, v in enumerate(seq):
            out.append(("," if k else "") + pad)
            _emit(v, out, level + 1, indent)
        out.append(end + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def curve_csv(curve: CurveSeries) -> str:
    lines = [f"{curve.x_label},{curve.y_label}"]
    lines += [f"{fmt_float(x)},{fmt_float(y)}" for x, y in curve.points]
    return "\n".join(lines) + "\n"


def curve_dict(name: str, curve: CurveSeries) -> dict:
    return {
        "name": name,
        "x_label": curve.x_label,
        "y_label": curve.y_label,
        "note": curve.note,
        "points": [list(p) for p in curve.points],
    }


def digest(raw: bytes) -> str:
    return hashlib.sha256(raw).hexdigest()


def _item_dict(rec: ItemUncertainty, labels: Optional[LabelSet], sel: Optional[SelectionOutcome]):
    d = {
        "item": rec.item,
        "predicted_class": rec.predicted_class,
        "mean_probs": list(rec.mean_probs),
    }
    for name in METRICS:
        d[name] = rec.metric(name)
    if labels is not None:
        d["label"] = int(labels.labels[rec.item])
        d["correct"] = bool(rec.predicted_class == labels.labels[rec.item])
    if sel is not None:
        d["selection"] = {"accepted": sel.accepted, "margin": sel.margin, "threshold": sel.threshold}
    return d


def _correlations(mcs, labels, bins, m) -> tuple[dict, dict]:
    correct = m["pred"] == labels.labels
    corr, boxes = {}, {}
    for name in METRICS:
        corr[name] = asdict(error_uncertainty_report(mcs, labels, name, bins, _matrix=m))
        boxes[name] = {
            k: (asdict(v) if v is not None else None)
            for k, v in grouped_boxplots(m[name], correct).items()
        }
    return corr, boxes


def build_report(
    mcs: MCSampleSet,
    labels: Optional[LabelSet],
    input_bytes: bytes,
    config: dict,
    *,
    metric: str = "sigma",
    bins: int = 20,
    epsilon: Optional[float] = None,
    epsilon_grid: Optional[list[float]] = None,
    alpha: float = 1.0,
    beta: float = 0.0,
    threads: Optional[int] = None,
) -> dict:
    """Assemble the full analysis report.

    Correlation, boxplot, accuracy and ARQ sections appear only when labels
    are available.
    """
    records = compute_all(mcs, threads=threads)
    outcomes = select(mcs, epsilon, labels) if epsilon is not None else None
    summary: dict = {}
    curves = []
    if labels is not None:
        m = metric_matrix(mcs)
        preds = [r.predicted_class for r in records]
        summary["accuracy"] = accuracy(preds, labels)
        summary["correlations"], summary["boxplots"] = _correlations(mcs, labels, bins, m)
        correct = m["pred"] == labels.labels
        if mcs.N >= bins >= 2:
            curves.append(
                curve_dict(f"binned_accuracy_{metric}", binned_uncertainty_accuracy(
                    metric_values(records, metric), correct, bins))
            )
        if outcomes is not None:
            summary["arq"] = arq(outcomes, ARQParams(epsilon, alpha, beta))
        if epsilon_grid is not None:
            curves.append(curve_dict("arq_sweep", arq_sweep(mcs, labels, epsilon_grid, alpha, beta)))
    return {
        "version": REPORT_VERSION,
        "input_digest": digest(input_bytes),
        "dims": {"t": mcs.T, "n": mcs.N, "c": mcs.C},
        "items": [
            _item_dict(r, labels, outcomes[r.item] if outcomes else None) for r in records
        ],
        "summary": summary,
        "curves": curves,
        "config": config,
    }
