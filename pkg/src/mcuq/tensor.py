"""Monte-Carlo sample sets: validation, CSV and binary (.mcs) serialization.

A sample set holds T stochastic forward passes over N items, each pass a
softmax vector over C classes. Memory layout is row-major ``[t][i][c]``.

Binary layout (little-endian, no padding)::

    b"MCS1" | uint32 L | L bytes UTF-8 JSON manifest
    | int32[N] labels (iff has_labels) | float32[T*N*C] probabilities

CSV layout: header ``t,item,p0,...,p{C-1}[,label]``, one row per (t, item).
The label column is read from t=0 rows only.
"""

from __future__ import annotations

import csv
import io
import json
import os
import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from mcuq.errors import DimensionError, FormatError, ProbabilityError

MAGIC = b"MCS1"
FORMAT_VERSION = 1

# Rows off by more than this are not softmax output; anything within is repairable drift.
ROW_SUM_TOL = 1e-3
RENORM_TOL = 1e-12


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MCSampleSet:
    """Immutable T x N x C tensor of per-pass class probabilities.

    ``probs[t, i, c]`` is the softmax probability of class ``c`` for item
    ``i`` on pass ``t``.
    """

    probs: np.ndarray
    class_names: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        probs = np.array(self.probs, dtype=np.float64, copy=True)
        if probs.ndim != 3:
            raise DimensionError(f"expected a 3-d (T, N, C) array, got shape {probs.shape}")
        T, N, C = probs.shape
        if T < 1 or N < 1:
            raise DimensionError(f"need T >= 1 and N >= 1, got T={T}, N={N}")
        if C < 2:
            raise DimensionError(f"need C >= 2 classes, got {C}")
        if not np.all(np.isfinite(probs)):
            raise ProbabilityError("non-finite probability")
        if probs.min() < 0.0 or probs.max() > 1.0:
            raise ProbabilityError("probability out of [0, 1]")
        dev = np.abs(probs.sum(axis=2) - 1.0)
        if dev.max() > ROW_SUM_TOL:
            t, i = np.unravel_index(int(dev.argmax()), dev.shape)
            raise ProbabilityError(
                f"row sum out of tolerance at t={t}, item={i}: {probs[t, i].sum()!r}"
            )
        object.__setattr__(self, "probs", _readonly(probs))
        if self.class_names is not None:
            names = tuple(str(n) for n in self.class_names)
            if len(names) != C:
                raise DimensionError(f"{len(names)} class names for C={C}")
            object.__setattr__(self, "class_names", names)

    @classmethod
    def from_flat(cls, T: int, N: int, C: int, values, class_names=None) -> "MCSampleSet":
        values = np.asarray(values, dtype=np.float64).ravel()
        if T < 1 or N < 1 or C < 1 or values.size != T * N * C:
            raise DimensionError(
                f"declared T={T}, N={N}, C={C} needs {T * N * C} values, got {values.size}"
            )
        return cls(values.reshape(T, N, C), class_names)

    @property
    def T(self) -> int:
        return self.probs.shape[0]

    @property
    def N(self) -> int:
        return self.probs.shape[1]

    @property
    def C(self) -> int:
        return self.probs.shape[2]

    def item(self, i: int) -> np.ndarray:
        """The T x C block of samples for one item."""
        if not 0 <= i < self.N:
            raise DimensionError(f"item index {i} out of range for N={self.N}")
        return self.probs[:, i, :]

    def __eq__(self, other):
        if not isinstance(other, MCSampleSet):
            return NotImplemented
        return (
            self.probs.shape == other.probs.shape
            and bool(np.array_equal(self.probs, other.probs))
            and self.class_names == other.class_names
        )


@dataclass(frozen=True, eq=False)
class LabelSet:
    """Ground-truth class index per item."""

    labels: np.ndarray
    n_classes: Optional[int] = field(default=None)

    def __post_init__(self):
        raw = np.asarray(self.labels)
        if raw.ndim != 1:
            raise DimensionError("labels must be one-dimensional")
        if raw.size and not np.issubdtype(raw.dtype, np.integer):
            if not np.all(np.equal(np.mod(raw, 1), 0)):
                raise DimensionError("labels must be integer class indices")
        labels = raw.astype(np.int64)
        if labels.size and labels.min() < 0:
            raise DimensionError("negative class label")
        if self.n_classes is not None and labels.size and labels.max() >= self.n_classes:
            raise DimensionError(f"label {labels.max()} >= C={self.n_classes}")
        object.__setattr__(self, "labels", _readonly(labels))

    def __len__(self):
        return self.labels.size

    def check_against(self, mcs: MCSampleSet) -> None:
        if len(self) != mcs.N:
            raise DimensionError(f"{len(self)} labels for N={mcs.N} items")
        if len(self) and self.labels.max() >= mcs.C:
            raise DimensionError(f"label {self.labels.max()} >= C={mcs.C}")

    def __eq__(self, other):
        if not isinstance(other, LabelSet):
            return NotImplemented
        return bool(np.array_equal(self.labels, other.labels))


@dataclass(frozen=True)
class Manifest:
    T: int
    N: int
    C: int
    has_labels: bool = False
    class_names: Optional[tuple[str, ...]] = None
    payload_kind: str = "binary"
    format_version: int = FORMAT_VERSION

    def to_json(self) -> bytes:
        doc = {
            "format_version": self.format_version,
            "T": self.T,
            "N": self.N,
            "C": self.C,
            "has_labels": self.has_labels,
            "class_names": list(self.class_names) if self.class_names is not None else None,
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")

    @classmethod
    def from_json(cls, raw: bytes) -> "Manifest":
        try:
            doc = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"malformed header: {exc}") from None
        if not isinstance(doc, dict):
            raise FormatError("malformed header: manifest is not an object")
        if doc.get("format_version") != FORMAT_VERSION:
            raise FormatError(f"unsupported format_version {doc.get('format_version')!r}")
        dims = []
        for key in ("T", "N", "C"):
            v = doc.get(key)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise DimensionError(f"bad dimension {key}={v!r}")
            dims.append(v)
        names = doc.get("class_names")
        if names is not None:
            if not isinstance(names, list) or len(names) != dims[2]:
                raise DimensionError("class_names length does not match C")
            names = tuple(str(n) for n in names)
        return cls(*dims, has_labels=bool(doc.get("has_labels", False)), class_names=names)


def renormalize(mcs: MCSampleSet) -> MCSampleSet:
    """Divide every row by its sum so rows sum to 1 within 1e-12.

    Rows already within ``RENORM_TOL`` of 1 are left untouched, which makes
    the operation idempotent.
    """
    p = mcs.probs
    sums = p.sum(axis=2, keepdims=True)
    drift = np.abs(sums - 1.0)
    if drift.max() > ROW_SUM_TOL:
        raise ProbabilityError("row sum out of tolerance")
    out = np.where(drift <= RENORM_TOL, p, p / sums)
    return MCSampleSet(out, mcs.class_names)


# -- binary ---------------------------------------------------------------


def _encode_binary(mcs: MCSampleSet, labels: Optional[LabelSet]) -> bytes:
    man = Manifest(mcs.T, mcs.N, mcs.C, labels is not None, mcs.class_names)
    header = man.to_json()
    parts = [MAGIC, struct.pack("<I", len(header)), header]
    if labels is not None:
        parts.append(np.ascontiguousarray(labels.labels, dtype="<i4").tobytes())
    parts.append(np.ascontiguousarray(mcs.probs, dtype="<f4").tobytes())
    return b"".join(parts)


def _decode_binary(raw: bytes) -> tuple[MCSampleSet, Optional[LabelSet]]:
    if len(raw) < 8 or raw[:4] != MAGIC:
        raise FormatError("bad magic bytes; not an MCS1 file")
    (hlen,) = struct.unpack_from("<I", raw, 4)
    if 8 + hlen > len(raw):
        raise FormatError("malformed header: length exceeds file size")
    man = Manifest.from_json(raw[8 : 8 + hlen])
    off = 8 + hlen
    expected = (4 * man.N if man.has_labels else 0) + 4 * man.T * man.N * man.C
    if len(raw) - off != expected:
        raise DimensionError(
            f"payload is {len(raw) - off} bytes, header T={man.T} N={man.N} C={man.C} "
            f"needs {expected}"
        )
    labels = None
    if man.has_labels:
        labels = LabelSet(np.frombuffer(raw, dtype="<i4", count=man.N, offset=off), man.C)
        off += 4 * man.N
    values = np.frombuffer(raw, dtype="<f4", offset=off).astype(np.float64)
    mcs = MCSampleSet.from_flat(man.T, man.N, man.C, values, man.class_names)
    if labels is not None:
        labels.check_against(mcs)
    return mcs, labels


# -- csv ------------------------------------------------------------------


def _encode_csv(mcs: MCSampleSet, labels: Optional[LabelSet]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = ["t", "item"] + [f"p{c}" for c in range(mcs.C)]
    if labels is not None:
        header.append("label")
    w.writerow(header)
    for t in range(mcs.T):
        for i in range(mcs.N):
            row = [str(t), str(i)] + [repr(float(v)) for v in mcs.probs[t, i]]
            if labels is not None:
                row.append(str(int(labels.labels[i])) if t == 0 else "")
            w.writerow(row)
    return buf.getvalue()


def _decode_csv(text: str) -> tuple[MCSampleSet, Optional[LabelSet]]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise FormatError("malformed header: empty file")
    header = [h.strip() for h in rows[0]]
    has_labels = bool(header) and header[-1] == "label"
    pcols = header[2 : len(header) - has_labels]
    if header[:2] != ["t", "item"] or pcols != [f"p{c}" for c in range(len(pcols))]:
        raise FormatError(f"malformed header: {','.join(header)!r}")
    C = len(pcols)
    if C < 2:
        raise DimensionError(f"need C >= 2 classes, got {C}")
    body = [r for r in rows[1:] if r]
    cells = {}
    label_of = {}
    for lineno, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise DimensionError(f"line {lineno}: {len(r)} fields, header has {len(header)}")
        try:
            t, i = int(r[0]), int(r[1])
            vals = [float(v) for v in r[2 : 2 + C]]
        except ValueError:
            raise FormatError(f"line {lineno}: unparseable number") from None
        if t < 0 or i < 0:
            raise DimensionError(f"line {lineno}: negative index")
        if (t, i) in cells:
            raise DimensionError(f"line {lineno}: duplicate row t={t}, item={i}")
        cells[(t, i)] = vals
        if has_labels and t == 0:
            try:
                label_of[i] = int(r[-1])
            except ValueError:
                raise FormatError(f"line {lineno}: bad label {r[-1]!r}") from None
    if not cells:
        raise DimensionError("no data rows")
    T = max(t for t, _ in cells) + 1
    N = max(i for _, i in cells) + 1
    if len(cells) != T * N:
        raise DimensionError(f"{len(cells)} rows do not cover T={T} x N={N} grid")
    probs = np.empty((T, N, C))
    for (t, i), vals in cells.items():
        probs[t, i] = vals
    mcs = MCSampleSet(probs)
    labels = None
    if has_labels:
        if len(label_of) != N:
            raise DimensionError("label missing on some t=0 rows")
        labels = LabelSet(np.array([label_of[i] for i in range(N)]), C)
    return mcs, labels


def _infer_format(path) -> str:
    return "csv" if os.fspath(path).lower().endswith(".csv") else "binary"


def load_mcs(path, format: Optional[str] = None) -> tuple[MCSampleSet, Optional[LabelSet]]:
    """Read a sample set (and labels, when the file carries them).

    ``format`` is ``"csv"`` or ``"binary"``; inferred from the extension if omitted.
    """
    format = format or _infer_format(path)
    if format == "binary":
        with open(path, "rb") as fh:
            return _decode_binary(fh.read())
    if format == "csv":
        with open(path, "r", encoding="utf-8", newline="") as fh:
            return _decode_csv(fh.read())
    raise ValueError(f"unknown format {format!r}")


def save_mcs(
    mcs: MCSampleSet,
    labels: Optional[LabelSet],
    path,
    format: Optional[str] = None,
) -> None:
    format = format or _infer_format(path)
    if labels is not None:
        labels.check_against(mcs)
    if format == "binary":
        data = _encode_binary(mcs, labels)
        with open(path, "wb") as fh:
            fh.write(data)
    elif format == "csv":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(_encode_csv(mcs, labels))
    else:
        raise ValueError(f"unknown format {format!r}")


def encode_binary(mcs: MCSampleSet, labels: Optional[LabelSet] = None) -> bytes:
    """In-memory equivalent of ``save_mcs(..., format="binary")``."""
    return _encode_binary(mcs, labels)


def decode_binary(raw: bytes) -> tuple[MCSampleSet, Optional[LabelSet]]:
    return _decode_binary(raw)


def as_labels(labels: Sequence[int] | LabelSet | None, n_classes: Optional[int] = None):
    if labels is None or isinstance(labels, LabelSet):
        return labels
    return LabelSet(np.asarray(labels), n_classes)


def require_labels(labels: Optional[LabelSet], what: str) -> LabelSet:
    if labels is None:
        raise DimensionError(f"{what} requires labels")
    return labels


def row_sum_error(mcs: MCSampleSet) -> float:
    return float(np.abs(mcs.probs.sum(axis=2) - 1.0).max())


__all__ = [
    "FORMAT_VERSION",
    "LabelSet",
    "MAGIC",
    "MCSampleSet",
    "Manifest",
    "ROW_SUM_TOL",
    "decode_binary",
    "encode_binary",
    "load_mcs",
    "renormalize",
    "save_mcs",
]
