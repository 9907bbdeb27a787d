"""Synthetic base-classifier channel.

Every trial picks a class uniformly, flips each nonzero bit of its codeword
independently with probability ``p`` and Hamming-decodes the result. This
isolates the error-correcting behaviour of a code matrix from any training.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from .codec import CodeMatrix, InvalidMatrix, generate_random_matrix, validate
from .errors import InvalidArgs

# trials are drawn in fixed-size chunks, each with its own spawned seed, so the
# result does not depend on how chunks are distributed over workers
_CHUNK_ELEMS = 1 << 21


@dataclass(frozen=True)
class ChannelSpec:
    matrix: CodeMatrix
    flip_prob: float
    trials: int
    seed: int = 0


@dataclass(frozen=True)
class ChannelReport:
    accuracy: float
    stderr: float
    per_class_accuracy: np.ndarray
    trials: int
    correct: int


def _chunk_sizes(trials, length):
    size = max(1024, _CHUNK_ELEMS // length)
    sizes = [size] * (trials // size)
    if trials % size:
        sizes.append(trials % size)
    return sizes


def _run_chunk(code, p, n, seed_seq):
    rng = np.random.default_rng(seed_seq)
    K, L = code.shape
    classes = rng.integers(0, K, size=n)
    flips = rng.random((n, L)) < p
    received = code[classes] * np.where(flips, -1, 1).astype(np.int8)
    pred = kernels.hamming_decode(received, code)
    hit = pred == classes
    return np.bincount(classes, minlength=K), np.bincount(classes[hit], minlength=K)


def simulate_channel(spec: ChannelSpec, workers: int = 1) -> ChannelReport:
    M = spec.matrix
    if validate(M):
        raise InvalidMatrix("channel simulation needs a valid code matrix", validate(M))
    if not 0.0 <= spec.flip_prob < 0.5:
        raise InvalidArgs(f"flip probability must be in [0, 0.5), got {spec.flip_prob}")
    if spec.trials < 1:
        raise InvalidArgs("trials must be positive")

    code = np.ascontiguousarray(M.entries)
    sizes = _chunk_sizes(spec.trials, M.L)
    seeds = np.random.SeedSequence(spec.seed).spawn(len(sizes))
    jobs = list(zip(sizes, seeds))
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(lambda job: _run_chunk(code, spec.flip_prob, *job), jobs))
    else:
        parts = [_run_chunk(code, spec.flip_prob, *job) for job in jobs]

    drawn = sum(p[0] for p in parts)
    hits = sum(p[1] for p in parts)
    correct = int(hits.sum())
    acc = correct / spec.trials
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(drawn > 0, hits / np.maximum(drawn, 1), np.nan)
    return ChannelReport(
        accuracy=acc,
        stderr=math.sqrt(acc * (1 - acc) / spec.trials),
        per_class_accuracy=per_class,
        trials=spec.trials,
        correct=correct,
    )


def binomial_tail_oracle(L: int, p: float) -> float:
    """Exact decode-error rate for two complementary codewords of odd length.

    Decoding is then a bit majority vote, which fails when more than half of
    the ``L`` bits flip.
    """
    if L < 1 or L % 2 == 0:
        raise InvalidArgs(f"L must be a positive odd integer, got {L}")
    if not 0.0 <= p < 0.5:
        raise InvalidArgs(f"p must be in [0, 0.5), got {p}")
    return sum(math.comb(L, k) * p**k * (1 - p) ** (L - k) for k in range(L // 2 + 1, L + 1))


def complementary_pair(L: int) -> CodeMatrix:
    """Two-class code whose rows are all +1 and all -1."""
    return CodeMatrix(np.array([[1] * L, [-1] * L], dtype=np.int8))


def convergence_curve(K, p, lengths, trials, seed=0, workers=1):
    """Accuracy of fresh random binary codes of each length, ordered by length."""
    out = []
    for L in sorted(lengths):
        mseed, cseed = np.random.SeedSequence([seed, L]).generate_state(2)
        M = generate_random_matrix(K, L, "binary", 0.0, int(mseed))
        out.append((L, simulate_channel(ChannelSpec(M, p, trials, int(cseed)), workers=workers)))
    return out


def curve_to_csv(curve) -> str:
    lines = ["L,accuracy,stderr,trials"]
    lines += [f"{L},{r.accuracy!r},{r.stderr!r},{r.trials}" for L, r in curve]
    return "\n".join(lines) + "\n"
