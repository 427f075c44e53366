"""Multi-label dataset parsing, validation and the label-to-instance index.

The on-disk format is the plain-text one used by the public extreme
classification benchmark repositories:

    N D L
    label,label,... featureId:value featureId:value ...

with 0-based label and feature ids, a possibly empty label field, UTF-8
text and tolerated CR line endings.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .sparse import SparseRowMatrix, SparseVec

log = logging.getLogger(__name__)


class DataFormatError(ValueError):
    """Raised when an input file violates the dataset format."""


@dataclass(frozen=True)
class ParseStats:
    """Counters for tolerated irregularities (not part of Dataset identity)."""

    duplicate_labels: int = 0
    zero_values: int = 0


@dataclass(frozen=True)
class Dataset:
    """Parallel feature rows X (n x d) and binary label rows Y (n x l)."""

    X: SparseRowMatrix
    Y: SparseRowMatrix
    n: int
    d: int
    l: int
    stats: ParseStats = field(default=ParseStats(), compare=False)

    def __post_init__(self):
        if self.X.n_rows != self.n or self.Y.n_rows != self.n:
            raise DataFormatError("row counts disagree with the declared N")
        if self.X.dim != self.d or self.Y.dim != self.l:
            raise DataFormatError("matrix dims disagree with the declared D/L")
        if len(self.Y.values) and not np.all(self.Y.values == 1.0):
            raise DataFormatError("label matrix values must all equal 1.0")


@dataclass(frozen=True)
class LabelIndex:
    """Per-label sorted instance-id lists and label frequencies."""

    instances: list[np.ndarray]
    freqs: np.ndarray

    @property
    def n_labels(self) -> int:
        return len(self.instances)


def _parse_header(line: str) -> tuple[int, int, int]:
    parts = line.split()
    if len(parts) != 3:
        raise DataFormatError(f"header must be 'N D L', got {line!r}")
    try:
        n, d, l = (int(p) for p in parts)
    except ValueError as e:
        raise DataFormatError(f"non-integer header field in {line!r}") from e
    if n < 0 or d < 0 or l < 0:
        raise DataFormatError("header counts must be non-negative")
    return n, d, l


def _parse_labels(text: str, l: int, lineno: int) -> tuple[np.ndarray, int]:
    if not text:
        return np.empty(0, dtype=np.int64), 0
    try:
        ids = np.array([int(t) for t in text.split(",")], dtype=np.int64)
    except ValueError as e:
        raise DataFormatError(f"line {lineno}: bad label id in {text!r}") from e
    if np.any(ids < 0) or np.any(ids >= l):
        raise DataFormatError(f"line {lineno}: label id out of range [0, {l})")
    uniq = np.unique(ids)
    return uniq, len(ids) - len(uniq)


def parse_dataset(source) -> Dataset:
    """Parse a dataset from a path or text stream.

    Duplicate feature ids within a line are an error; duplicate labels are
    deduplicated and counted; explicit zero feature values are dropped and
    counted; lines with an empty label list are kept as unlabeled instances.
    """
    if hasattr(source, "read"):
        if isinstance(source, io.TextIOBase):
            return _parse_stream(source)
        return _parse_stream(io.TextIOWrapper(source, encoding="utf-8"))
    with open(source, "r", encoding="utf-8") as f:
        return _parse_stream(f)


def _parse_stream(f) -> Dataset:
    header = f.readline()
    if not header:
        raise DataFormatError("empty input: missing header")
    n, d, l = _parse_header(header.rstrip("\r\n"))

    x_indptr = np.zeros(n + 1, dtype=np.int64)
    y_indptr = np.zeros(n + 1, dtype=np.int64)
    x_idx_parts, x_val_parts, y_idx_parts = [], [], []
    n_dup = 0
    n_zero = 0

    for i in range(n):
        line = f.readline()
        if line == "" and i < n:
            raise DataFormatError(f"expected {n} instance lines, found {i}")
        line = line.rstrip("\r\n")
        lineno = i + 2

        if " " in line:
            label_text, feat_text = line.split(" ", 1)
        else:
            label_text, feat_text = line, ""
        labels, dups = _parse_labels(label_text, l, lineno)
        n_dup += dups

        tokens = feat_text.split()
        fidx = np.empty(len(tokens), dtype=np.int64)
        fval = np.empty(len(tokens), dtype=np.float32)
        for j, tok in enumerate(tokens):
            fid, sep, sval = tok.partition(":")
            if not sep:
                raise DataFormatError(f"line {lineno}: malformed pair {tok!r}")
            try:
                fidx[j] = int(fid)
                fval[j] = float(sval)
            except ValueError as e:
                raise DataFormatError(f"line {lineno}: bad pair {tok!r}") from e
        if len(fidx):
            if np.any(fidx < 0) or np.any(fidx >= d):
                raise DataFormatError(f"line {lineno}: feature id out of range [0, {d})")
            if not np.all(np.isfinite(fval)):
                raise DataFormatError(f"line {lineno}: non-finite feature value")
            order = np.argsort(fidx, kind="stable")
            fidx, fval = fidx[order], fval[order]
            if np.any(np.diff(fidx) == 0):
                raise DataFormatError(f"line {lineno}: duplicate feature index")
            keep = fval != 0
            if not keep.all():
                n_zero += int((~keep).sum())
                fidx, fval = fidx[keep], fval[keep]

        x_idx_parts.append(fidx)
        x_val_parts.append(fval)
        y_idx_parts.append(labels)
        x_indptr[i + 1] = x_indptr[i] + len(fidx)
        y_indptr[i + 1] = y_indptr[i] + len(labels)

    trailer = f.read()
    if trailer.strip():
        raise DataFormatError("trailing content after the declared N instance lines")

    if n_dup:
        log.warning("deduplicated %d repeated label ids", n_dup)
    if n_zero:
        log.warning("dropped %d explicit zero feature values", n_zero)

    X = SparseRowMatrix(
        x_indptr,
        np.concatenate(x_idx_parts) if x_idx_parts else np.empty(0, dtype=np.int64),
        np.concatenate(x_val_parts) if x_val_parts else np.empty(0, dtype=np.float32),
        d,
    )
    Y = SparseRowMatrix(
        y_indptr,
        np.concatenate(y_idx_parts) if y_idx_parts else np.empty(0, dtype=np.int64),
        np.ones(int(y_indptr[-1]), dtype=np.float32),
        l,
    )
    return Dataset(X, Y, n, d, l, ParseStats(n_dup, n_zero))


def serialize_dataset(ds: Dataset, sink) -> None:
    """Write a Dataset in canonical text form (round-trips through parse)."""
    if not hasattr(sink, "write"):
        with open(sink, "w", encoding="utf-8") as f:
            serialize_dataset(ds, f)
        return
    sink.write(f"{ds.n} {ds.d} {ds.l}\n")
    for i in range(ds.n):
        x, y = ds.X.row(i), ds.Y.row(i)
        labels = ",".join(str(j) for j in y.indices)
        feats = " ".join(f"{j}:{v}" for j, v in zip(x.indices, x.values))
        sink.write(f"{labels} {feats}".rstrip() + "\n" if feats else f"{labels}\n")


def dataset_to_text(ds: Dataset) -> str:
    buf = io.StringIO()
    serialize_dataset(ds, buf)
    return buf.getvalue()


def build_label_index(ds: Dataset) -> LabelIndex:
    """Invert Y into per-label sorted instance-id lists."""
    cols = ds.Y.indices
    rows = np.repeat(np.arange(ds.n, dtype=np.int64), np.diff(ds.Y.indptr))
    order = np.lexsort((rows, cols))
    cols, rows = cols[order], rows[order]
    freqs = np.bincount(cols, minlength=ds.l).astype(np.int64)
    bounds = np.cumsum(freqs)[:-1]
    instances = np.split(rows, bounds) if ds.l else []
    return LabelIndex([np.ascontiguousarray(a) for a in instances], freqs)


def label_frequency_histogram(source, sink) -> None:
    """Write (rank, frequency) rows sorted by descending label frequency.

    ``source`` is a Dataset or a ready array of per-label counts.
    """
    if isinstance(source, Dataset):
        source = build_label_index(source).freqs
    freqs = np.sort(np.asarray(source))[::-1]
    if not hasattr(sink, "write"):
        with open(sink, "w", encoding="utf-8") as f:
            label_frequency_histogram(freqs, f)
        return
    for rank, c in enumerate(freqs, start=1):
        sink.write(f"{rank} {c}\n")


def normalize_instances(ds: Dataset) -> Dataset:
    """Return a copy of ``ds`` with every feature row scaled to unit L2 norm.

    Zero rows are left untouched.  Values stay float32; the norms are
    accumulated in float64.
    """
    X = ds.X
    v64 = X.values.astype(np.float64)
    if X.nnz:
        row_sq = np.zeros(X.n_rows, dtype=np.float64)
        lengths = np.diff(X.indptr)
        nonempty = lengths > 0
        row_sq[nonempty] = np.add.reduceat(v64 * v64, X.indptr[:-1][nonempty])
        norms = np.sqrt(row_sq)
        norms[norms == 0] = 1.0
        scaled = (v64 / np.repeat(norms, lengths)).astype(np.float32)
    else:
        scaled = X.values
    Xn = SparseRowMatrix(X.indptr, X.indices, scaled, X.dim)
    return Dataset(Xn, ds.Y, ds.n, ds.d, ds.l, ds.stats)
