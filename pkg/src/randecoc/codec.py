"""Code matrices: generation, validation, distance statistics and decoding.

Symbols are -1, 0, +1. A 0 at ``M[i, j]`` means class ``i`` takes no part in
dichotomy ``j``. Hamming distance between ternary words only counts positions
where both symbols are nonzero and differ.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import (
    AttemptBudgetExceeded,
    IndexOutOfRange,
    InfeasibleCode,
    InvalidMatrix,
    IoFailure,
    LengthMismatch,
    ParseError,
)

METRICS = ("hamming", "euclidean", "manhattan")

HAMMING_CONVENTION = "ternary zeros contribute 0; sign(0) = +1 for soft outputs"


class CodeMatrix:
    """Immutable K x L code matrix.

    Construction only checks shape and integrality; use :func:`validate` to
    check the design rules (distinct rows, non-constant columns, ...).
    """

    __slots__ = ("_entries", "kind")

    def __init__(self, entries, kind=None):
        arr = np.asarray(entries)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidMatrix(f"code matrix must be a non-empty 2-D array, got shape {arr.shape}")
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise InvalidMatrix("code matrix entries must be integers")
        arr = arr.astype(np.int8)
        arr.setflags(write=False)
        if kind is None:
            kind = "binary" if not np.any(arr == 0) else "ternary"
        if kind not in ("binary", "ternary"):
            raise InvalidMatrix(f"unknown kind {kind!r}")
        self._entries = arr
        self.kind = kind

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @property
    def K(self) -> int:
        return self._entries.shape[0]

    @property
    def L(self) -> int:
        return self._entries.shape[1]

    def nonzeros(self) -> np.ndarray:
        """Per-row count of nonzero symbols (``L`` for binary rows)."""
        return np.count_nonzero(self._entries, axis=1)

    def __eq__(self, other):
        if not isinstance(other, CodeMatrix):
            return NotImplemented
        # kind is not part of the file format, so equality is on entries alone
        return np.array_equal(self._entries, other._entries)

    def __hash__(self):
        return hash((self._entries.shape, self._entries.tobytes()))

    def __repr__(self):
        return f"CodeMatrix(K={self.K}, L={self.L}, kind={self.kind!r})"


@dataclass(frozen=True)
class Violation:
    rule: str
    rows: tuple = ()
    cols: tuple = ()
    message: str = ""


@dataclass(frozen=True)
class DecodeResult:
    predicted_class: int
    distances: np.ndarray
    metric: str


@dataclass(frozen=True)
class MatrixStats:
    min_hamming: int
    correctable: int
    pairwise_hd: np.ndarray = field(repr=False)
    convention: str = HAMMING_CONVENTION


def sample_matrix() -> CodeMatrix:
    """4-class, 5-classifier binary example code."""
    return CodeMatrix(
        [
            [+1, +1, +1, -1, -1],
            [+1, -1, -1, +1, -1],
            [-1, +1, -1, +1, -1],
            [-1, -1, -1, -1, +1],
        ]
    )


def one_vs_all_matrix(K: int) -> CodeMatrix:
    return CodeMatrix(2 * np.eye(K, dtype=np.int8) - 1)


def validate(M: CodeMatrix) -> list[Violation]:
    """Return every rule violation of ``M``; an empty list means valid."""
    e = M.entries
    out = []
    bad = np.argwhere((e != -1) & (e != 0) & (e != 1))
    for i, j in bad:
        out.append(Violation("SymbolOutOfRange", (int(i),), (int(j),), f"M[{i},{j}]={e[i, j]}"))
    if M.kind == "binary":
        for i, j in np.argwhere(e == 0):
            out.append(Violation("ZeroInBinary", (int(i),), (int(j),), f"M[{i},{j}]=0 in binary matrix"))
    groups = {}
    for i, row in enumerate(e):
        groups.setdefault(row.tobytes(), []).append(i)
    for rows in groups.values():
        if len(rows) > 1:
            out.append(Violation("DuplicateRows", tuple(rows), (), f"rows {rows} are identical"))
    for j in range(M.L):
        col = e[:, j]
        if not (np.any(col == 1) and np.any(col == -1)):
            out.append(Violation("ConstantColumn", (), (j,), f"column {j} lacks a +1 or a -1"))
    for i in np.flatnonzero(~np.any(e != 0, axis=1)):
        out.append(Violation("ZeroRow", (int(i),), (), f"row {i} has no nonzero symbol"))
    return out


def require_valid(M: CodeMatrix):
    violations = validate(M)
    if violations:
        raise InvalidMatrix("; ".join(v.message for v in violations), violations)


def generate_random_matrix(
    K: int, L: int, kind: str = "binary", zero_fraction: float = 0.0, seed: int = 0
) -> CodeMatrix:
    """Draw a random code matrix by rejection sampling.

    Each column is drawn symbol by symbol (0 with probability
    ``zero_fraction``, otherwise +1/-1 with equal odds) and redrawn while it
    lacks either sign. A full candidate with duplicate or all-zero rows is
    discarded. At most ``1000*K*L`` column draws are attempted.
    """
    if kind not in ("binary", "ternary"):
        raise InfeasibleCode(f"unknown kind {kind!r}")
    if K < 2 or L < 1:
        raise InfeasibleCode(f"need K >= 2 and L >= 1, got K={K}, L={L}")
    if not 0.0 <= zero_fraction < 1.0:
        raise InfeasibleCode(f"zero_fraction must be in [0, 1), got {zero_fraction}")
    if kind == "binary" and zero_fraction != 0.0:
        raise InfeasibleCode("binary matrices cannot contain zeros")
    alphabet = 2 if zero_fraction == 0.0 else 3
    # binary: K distinct sign vectors; ternary: also excludes the all-zero word
    if K > alphabet**L - (alphabet - 2):
        raise InfeasibleCode(f"no valid {kind} code with K={K} rows of length L={L}")

    rng = np.random.default_rng(seed)
    budget = 1000 * K * L
    draws = 0
    while True:
        cols = []
        while len(cols) < L:
            if draws >= budget:
                raise AttemptBudgetExceeded(
                    f"no valid matrix after {budget} column draws (K={K}, L={L}, kind={kind})", budget
                )
            draws += 1
            zero = rng.random(K) < zero_fraction
            sign = np.where(rng.integers(0, 2, size=K) == 1, 1, -1)
            col = np.where(zero, 0, sign)
            if np.any(col == 1) and np.any(col == -1):
                cols.append(col)
        e = np.stack(cols, axis=1)
        if np.any(~np.any(e != 0, axis=1)):
            continue
        if len(np.unique(e, axis=0)) < K:
            continue
        return CodeMatrix(e, kind=kind)


def correctable_bound(e: int) -> int:
    """Number of bit errors a minimum distance ``e`` guarantees to fix."""
    return max(0, math.floor((e - 1) / 2))


def pairwise_hamming(M: CodeMatrix) -> np.ndarray:
    return kernels.hamming_distances(M.entries, M.entries)


def matrix_stats(M: CodeMatrix) -> MatrixStats:
    """Exact pairwise Hamming distances and the derived correction bound.

    Only malformed symbols are rejected; duplicate rows are reported through
    ``min_hamming == 0`` rather than raised.
    """
    bad = [v for v in validate(M) if v.rule in ("SymbolOutOfRange", "ZeroInBinary")]
    if bad or M.K < 2:
        raise InvalidMatrix("matrix_stats needs K >= 2 and symbols in {-1, 0, +1}", bad)
    hd = pairwise_hamming(M)
    off = hd[~np.eye(M.K, dtype=bool)]
    e = int(off.min())
    return MatrixStats(min_hamming=e, correctable=correctable_bound(e), pairwise_hd=hd)


def column_targets(M: CodeMatrix, j: int, labels) -> np.ndarray:
    """Relabel samples for dichotomy ``j``; 0 marks excluded samples."""
    if not 0 <= j < M.L:
        raise IndexOutOfRange(f"column {j} outside [0, {M.L})")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= M.K):
        raise IndexOutOfRange(f"labels must lie in [0, {M.K})")
    return M.entries[labels, j].astype(np.int8)


def hard_signs(Y) -> np.ndarray:
    """Map soft outputs to +-1 with sign(0) = +1."""
    return np.where(np.asarray(Y) >= 0, 1, -1).astype(np.int8)


def distances(Y, M: CodeMatrix, metric: str = "hamming") -> np.ndarray:
    """Batch distances: ``Y`` is (N, L) -> (N, K)."""
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2 or Y.shape[1] != M.L:
        raise LengthMismatch(f"expected outputs of length {M.L}, got shape {Y.shape}")
    if metric == "hamming":
        return kernels.hamming_distances(hard_signs(Y), M.entries).astype(np.float64)
    if metric == "manhattan":
        return kernels.soft_distances(Y, M.entries, kernels.MANHATTAN)
    if metric == "euclidean":
        return kernels.soft_distances(Y, M.entries, kernels.EUCLIDEAN)
    raise ValueError(f"unknown metric {metric!r}; choose from {METRICS}")


def decode(Y, M: CodeMatrix, metric: str = "hamming") -> DecodeResult:
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 1 or Y.shape[0] != M.L:
        raise LengthMismatch(f"expected output vector of length {M.L}, got shape {Y.shape}")
    d = distances(Y[None, :], M, metric)[0]
    return DecodeResult(int(np.argmin(d)), d, metric)


def decode_batch(Y, M: CodeMatrix, metric: str = "hamming") -> np.ndarray:
    return np.argmin(distances(Y, M, metric), axis=1)


def class_scores(h, M: CodeMatrix) -> np.ndarray:
    """Score of each class: dot product of ``h`` with its codeword.

    Accepts a single vector (L,) or a batch (N, L).
    """
    h = np.asarray(h, dtype=np.float64)
    if h.shape[-1] != M.L:
        raise LengthMismatch(f"expected length {M.L}, got shape {h.shape}")
    return h @ M.entries.T.astype(np.float64)


def hd_from_score(o_c: float, L_eff: int) -> float:
    return (L_eff - o_c) / 2


# -- text format ------------------------------------------------------------


def format_matrix(M: CodeMatrix) -> str:
    lines = [f"{M.K} {M.L}"]
    lines += [" ".join(str(int(v)) for v in row) for row in M.entries]
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> CodeMatrix:
    if not text.endswith("\n"):
        raise ParseError("missing trailing newline", line=text.count("\n") + 1)
    lines = text[:-1].split("\n")
    head = lines[0].split()
    if len(head) != 2:
        raise ParseError("header must be 'K L'", line=1)
    try:
        K, L = int(head[0]), int(head[1])
    except ValueError:
        raise ParseError("header must hold two integers", line=1) from None
    if K < 1 or L < 1:
        raise ParseError("K and L must be positive", line=1)
    body = lines[1:]
    if len(body) != K:
        raise ParseError(f"expected {K} rows, found {len(body)}", line=len(lines) + 1)
    rows = []
    for i, line in enumerate(body, start=2):
        toks = line.split(" ")
        if len(toks) != L:
            raise ParseError(f"expected {L} symbols, found {len(toks)}", line=i)
        row = []
        for col, tok in enumerate(toks, start=1):
            if tok not in ("-1", "0", "1"):
                raise ParseError(f"bad symbol {tok!r}", line=i, column=col)
            row.append(int(tok))
        rows.append(row)
    return CodeMatrix(np.array(rows, dtype=np.int8))


def save_matrix(M: CodeMatrix, path) -> None:
    try:
        Path(path).write_bytes(format_matrix(M).encode("utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_matrix(path) -> CodeMatrix:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError("file is not UTF-8", offset=exc.start) from None
    if "\r" in text:
        raise ParseError("CR line endings are not allowed", line=text[: text.index("\r")].count("\n") + 1)
    return parse_matrix(text)
