"""Feature tables: loading, standardization, stratified splits and batching.

Labels are 0-indexed. Binary layout (little-endian)::

    "ECOF" | u32 version=1 | u32 N | u32 D | u32 K | f32[N*D] row-major | u32[N] labels

CSV layout: optional header line, then D feature columns and a trailing
integer label column.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateTable,
    DimensionMismatch,
    EmptySplit,
    IoFailure,
    LabelOutOfRange,
    NonFiniteFeature,
    ParseError,
)

_MAGIC = b"ECOF"
_VERSION = 1
_HEADER = struct.Struct("<4sIIII")


@dataclass(frozen=True)
class FeatureTable:
    features: np.ndarray
    labels: np.ndarray
    K: int
    provenance: str = ""

    def __post_init__(self):
        f = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if f.ndim != 2 or f.shape[0] < 1:
            raise ParseError(f"features must be a non-empty N x D matrix, got shape {f.shape}")
        if y.shape != (f.shape[0],):
            raise ParseError(f"{y.shape[0]} labels for {f.shape[0]} rows")
        if not np.all(np.isfinite(f)):
            r, c = np.argwhere(~np.isfinite(f))[0]
            raise NonFiniteFeature(f"non-finite feature at row {r}, column {c}")
        if y.min() < 0 or y.max() >= self.K:
            bad = int(np.flatnonzero((y < 0) | (y >= self.K))[0])
            raise LabelOutOfRange(f"label {y[bad]} at row {bad} outside [0, {self.K})")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "labels", y)

    @property
    def N(self) -> int:
        return self.features.shape[0]

    @property
    def D(self) -> int:
        return self.features.shape[1]

    def subset(self, idx, tag: str = "") -> "FeatureTable":
        idx = np.asarray(idx, dtype=np.int64)
        prov = f"{self.provenance}[{tag}]" if tag else self.provenance
        return FeatureTable(self.features[idx], self.labels[idx], self.K, prov)


# -- I/O --------------------------------------------------------------------


def save_table(table: FeatureTable, path) -> None:
    """Write the binary format. Features are stored as float32."""
    parts = [
        _HEADER.pack(_MAGIC, _VERSION, table.N, table.D, table.K),
        np.ascontiguousarray(table.features, dtype="<f4").tobytes(),
        np.ascontiguousarray(table.labels, dtype="<u4").tobytes(),
    ]
    try:
        Path(path).write_bytes(b"".join(parts))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _read_binary(raw: bytes, n_classes, provenance):
    if len(raw) < _HEADER.size:
        raise ParseError("truncated header", offset=len(raw))
    magic, version, N, D, K = _HEADER.unpack_from(raw, 0)
    if magic != _MAGIC:
        raise ParseError("bad magic, expected ECOF", offset=0)
    if version != _VERSION:
        raise ParseError(f"unsupported version {version}", offset=4)
    expected = _HEADER.size + 4 * N * D + 4 * N
    if len(raw) != expected:
        raise ParseError(f"expected {expected} bytes, found {len(raw)}", offset=min(len(raw), expected))
    feats = np.frombuffer(raw, dtype="<f4", count=N * D, offset=_HEADER.size).reshape(N, D)
    labels = np.frombuffer(raw, dtype="<u4", count=N, offset=_HEADER.size + 4 * N * D)
    return FeatureTable(feats.astype(np.float64), labels.astype(np.int64), n_classes or K, provenance)


def _read_csv(text: str, n_classes, provenance):
    rows = list(csv.reader(text.splitlines()))
    start = 0
    if rows:
        try:
            [float(v) for v in rows[0]]
        except ValueError:
            start = 1  # header line
    feats, labels, width = [], [], None
    for lineno, row in enumerate(rows[start:], start=start + 1):
        if not row or all(not v.strip() for v in row):
            continue
        if width is None:
            width = len(row)
            if width < 2:
                raise ParseError("need at least one feature and a label column", line=lineno)
        elif len(row) != width:
            raise ParseError(f"expected {width} columns, found {len(row)}", line=lineno)
        try:
            feats.append([float(v) for v in row[:-1]])
        except ValueError:
            col = next(i for i, v in enumerate(row[:-1], 1) if not _is_float(v))
            raise ParseError(f"bad number {row[col - 1]!r}", line=lineno, column=col) from None
        try:
            labels.append(int(row[-1]))
        except ValueError:
            raise ParseError(f"bad label {row[-1]!r}", line=lineno, column=width) from None
    if not feats:
        raise ParseError("no data rows", line=len(rows))
    labels = np.array(labels, dtype=np.int64)
    K = n_classes if n_classes is not None else int(labels.max()) + 1
    return FeatureTable(np.array(feats, dtype=np.float64), labels, K, provenance)


def _is_float(v):
    try:
        float(v)
        return True
    except ValueError:
        return False


def load_table(path, fmt: str | None = None, n_classes: int | None = None) -> FeatureTable:
    """Load a feature table.

    ``fmt`` is ``"csv"`` or ``"binary"``; when omitted it is guessed from the
    file's magic bytes. ``n_classes`` overrides the class count stored in (or
    inferred from) the file.
    """
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if fmt is None:
        fmt = "binary" if raw[:4] == _MAGIC else "csv"
    if fmt == "binary":
        return _read_binary(raw, n_classes, str(path))
    if fmt == "csv":
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError("CSV is not UTF-8", offset=exc.start) from None
        return _read_csv(text, n_classes, str(path))
    raise ValueError(f"unknown format {fmt!r}")


def save_csv(table: FeatureTable, path) -> None:
    lines = [",".join([repr(float(v)) for v in row] + [str(int(y))]) for row, y in zip(table.features, table.labels)]
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


# -- preprocessing ----------------------------------------------------------


@dataclass(frozen=True)
class Standardizer:
    """Per-column population statistics (1/N convention)."""

    mean: np.ndarray
    std: np.ndarray
    degenerate: np.ndarray = field(repr=False)
    convention: str = "population"

    def apply(self, table: FeatureTable) -> FeatureTable:
        if table.D != self.mean.shape[0]:
            raise DimensionMismatch(f"table has {table.D} features, scaler was fit on {self.mean.shape[0]}")
        scale = np.where(self.degenerate, 1.0, self.std)
        return replace(table, features=(table.features - self.mean) / scale)


def standardize(table: FeatureTable, tol: float = 1e-12):
    if table.N < 2:
        raise DegenerateTable("standardization needs at least 2 rows")
    mean = table.features.mean(axis=0)
    std = table.features.std(axis=0)
    stats = Standardizer(mean, std, std < tol)
    return stats.apply(table), stats


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    val_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        test = 1.0 - self.train_fraction - self.val_fraction
        for name, v in (("train", self.train_fraction), ("val", self.val_fraction), ("test", test)):
            if not 0.0 < v < 1.0:
                raise EmptySplit(f"{name} fraction {v:.6g} outside (0, 1)")


def split_indices(labels, spec: SplitSpec):
    """Class-stratified partition of ``range(N)`` into train/val/test indices.

    Each class gets the floor of its target count per part; leftover samples
    go to the parts furthest behind their overall target, so every class
    stays within one sample of its proportions.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(spec.seed)
    fracs = np.array([spec.train_fraction, spec.val_fraction, 1.0 - spec.train_fraction - spec.val_fraction])
    parts = ([], [], [])
    cum_target = np.zeros(3)
    cum_alloc = np.zeros(3, dtype=np.int64)
    for c in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == c))
        target = fracs * len(idx)
        alloc = np.floor(target).astype(np.int64)
        deficit = cum_target + target - (cum_alloc + alloc)
        for k in np.argsort(-deficit, kind="stable")[: len(idx) - alloc.sum()]:
            alloc[k] += 1
        cum_target += target
        cum_alloc += alloc
        bounds = np.cumsum(alloc)
        for k, chunk in enumerate(np.split(idx, bounds[:2])):
            parts[k].append(chunk)
    out = []
    for name, chunks in zip(("train", "val", "test"), parts):
        merged = np.sort(np.concatenate(chunks))
        if merged.size == 0:
            raise EmptySplit(f"{name} split is empty for N={len(labels)}")
        out.append(merged)
    return tuple(out)


def split(table: FeatureTable, spec: SplitSpec):
    tr, va, te = split_indices(table.labels, spec)
    return table.subset(tr, "train"), table.subset(va, "val"), table.subset(te, "test")


@dataclass(frozen=True)
class Batch:
    features: np.ndarray
    labels: np.ndarray
    one_hot: np.ndarray
    indices: np.ndarray


def one_hot(labels, K: int) -> np.ndarray:
    T = np.zeros((len(labels), K))
    T[np.arange(len(labels)), labels] = 1.0
    return T


def batches(table: FeatureTable, batch_size: int, shuffle_seed: int = 0, epoch: int = 0) -> list[Batch]:
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    order = np.random.default_rng([shuffle_seed, epoch]).permutation(table.N)
    out = []
    for start in range(0, table.N, batch_size):
        idx = order[start : start + batch_size]
        y = table.labels[idx]
        out.append(Batch(table.features[idx], y, one_hot(y, table.K), idx))
    return out


def gaussian_blobs(K: int, D: int, n_per_class: int, spread: float = 1.0, separation: float = 3.0, seed: int = 0):
    """Isotropic Gaussian clusters around random centres (toy data)."""
    rng = np.random.default_rng(seed)
    centres = rng.normal(scale=separation, size=(K, D))
    labels = np.repeat(np.arange(K), n_per_class)
    feats = centres[labels] + rng.normal(scale=spread, size=(len(labels), D))
    perm = rng.permutation(len(labels))
    return FeatureTable(feats[perm], labels[perm], K, f"blobs(K={K},D={D},seed={seed})")
