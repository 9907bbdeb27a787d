"""The three ensemble designs built on a shared code matrix.

* ``IndependentEnsemble``: one small tanh-output network per matrix column.
* ``MtlNetwork``: a shared trunk with one small head per column.
* ``MtlEmbeddingNetwork``: the MTL network followed by a frozen linear layer
  whose weights are the code matrix, producing one score per class.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from . import codec
from .codec import CodeMatrix
from .errors import IndexOutOfRange, InvalidMatrix, IoFailure, LengthMismatch, ParseError
from .nncore import Dense, Dropout, Network, ReLU, Tanh, load_network, save_network

INDEPENDENT_HIDDEN = (500, 50, 10)
TRUNK_HIDDEN = (500, 50)
HEAD_HIDDEN = 10

KINDS = ("independent", "mtl", "mtl-embedding")


def derive_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def independent_spec(D, hidden=INDEPENDENT_HIDDEN, dropout=0.5):
    spec, prev = [], D
    for w in hidden:
        spec += [Dense(prev, w), ReLU(), Dropout(dropout)]
        prev = w
    return spec + [Dense(prev, 1), Tanh()]


def trunk_spec(D, hidden=TRUNK_HIDDEN, dropout=0.5):
    spec, prev = [], D
    for w in hidden:
        spec += [Dense(prev, w), ReLU(), Dropout(dropout)]
        prev = w
    return spec


def head_spec(in_dim, hidden=HEAD_HIDDEN, dropout=0.5):
    return [Dropout(dropout), Dense(in_dim, hidden), ReLU(), Dense(hidden, 1), Tanh()]


def _check_matrix(M):
    violations = codec.validate(M)
    if violations:
        raise InvalidMatrix("invalid code matrix: " + "; ".join(v.message for v in violations), violations)


def _as_batch(model, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != model.D:
        raise LengthMismatch(f"expected feature dim {model.D}, got shape {x.shape}")
    return X, single


class IndependentEnsemble:
    kind = "independent"

    def __init__(self, D, M: CodeMatrix, seed=0, hidden=INDEPENDENT_HIDDEN, dropout=0.5):
        _check_matrix(M)
        if D < 1:
            raise LengthMismatch("feature dim must be positive")
        self.D, self.matrix, self.seed = D, M, seed
        self.hidden, self.dropout = tuple(hidden), dropout
        self.spec = independent_spec(D, hidden, dropout)
        self.classifiers = [Network(self.spec, derive_seed(seed, j)) for j in range(M.L)]

    def networks(self):
        return list(self.classifiers)

    def bits(self, X):
        return np.concatenate([net(X) for net in self.classifiers], axis=1)


class MtlNetwork:
    kind = "mtl"

    def __init__(self, D, M: CodeMatrix, seed=0, trunk_hidden=TRUNK_HIDDEN, head_hidden=HEAD_HIDDEN, dropout=0.5):
        _check_matrix(M)
        if D < 1:
            raise LengthMismatch("feature dim must be positive")
        self.D, self.matrix, self.seed = D, M, seed
        self.trunk_hidden, self.head_hidden, self.dropout = tuple(trunk_hidden), head_hidden, dropout
        self.trunk_spec = trunk_spec(D, trunk_hidden, dropout)
        feat = self.trunk_spec[-3].out_dim if self.trunk_spec else D
        self.head_spec = head_spec(feat, head_hidden, dropout)
        self.trunk = Network(self.trunk_spec, derive_seed(seed, 0))
        self.heads = [Network(self.head_spec, derive_seed(seed, j + 1)) for j in range(M.L)]

    def networks(self):
        return [self.trunk] + self.heads

    def bits(self, X):
        z = self.trunk(X)
        return np.concatenate([head(z) for head in self.heads], axis=1)

    def forward_train(self, X):
        """Training-mode pass; returns bits and the traces needed by ``backward_train``."""
        z, ttrace = self.trunk.forward(X, train=True)
        outs, htraces = [], []
        for head in self.heads:
            y, tr = head.forward(z, train=True)
            outs.append(y)
            htraces.append(tr)
        return np.concatenate(outs, axis=1), (ttrace, htraces)

    def backward_train(self, traces, grad_bits):
        """Gradients for ``networks()`` order given dLoss/dbits of shape (B, L)."""
        ttrace, htraces = traces
        grads_heads, gz = [], 0.0
        for j, (head, tr) in enumerate(zip(self.heads, htraces)):
            gs = head.backward(tr, grad_bits[:, j : j + 1])
            grads_heads.append(gs.params)
            gz = gz + gs.input
        gt = self.trunk.backward(ttrace, gz)
        return [gt.params] + grads_heads


class MtlEmbeddingNetwork:
    kind = "mtl-embedding"

    def __init__(self, D, M: CodeMatrix, seed=0, **kw):
        self.base = MtlNetwork(D, M, seed, **kw)
        w = M.entries.astype(np.float64)
        w.setflags(write=False)
        self.embedding_weights = w

    D = property(lambda self: self.base.D)
    matrix = property(lambda self: self.base.matrix)
    seed = property(lambda self: self.base.seed)

    def networks(self):
        return self.base.networks()

    def bits(self, X):
        return self.base.bits(X)

    def scores(self, X):
        """Output of the frozen class layer: one score per class, no bias."""
        return self.bits(X) @ self.embedding_weights.T


def build_independent(D, M, seed=0, **kw) -> IndependentEnsemble:
    return IndependentEnsemble(D, M, seed, **kw)


def build_mtl(D, M, seed=0, **kw) -> MtlNetwork:
    return MtlNetwork(D, M, seed, **kw)


def build_embedding(D, M, seed=0, **kw) -> MtlEmbeddingNetwork:
    return MtlEmbeddingNetwork(D, M, seed, **kw)


def build(kind, D, M, seed=0, **kw):
    try:
        ctor = {"independent": build_independent, "mtl": build_mtl, "mtl-embedding": build_embedding}[kind]
    except KeyError:
        raise ValueError(f"unknown model kind {kind!r}; choose from {KINDS}") from None
    return ctor(D, M, seed, **kw)


def predict_bits(model, x) -> np.ndarray:
    """Eval-mode base classifier outputs, each in (-1, 1)."""
    X, single = _as_batch(model, x)
    h = model.bits(X)
    return h[0] if single else h


def class_score_matrix(model, X, metric="hamming") -> np.ndarray:
    """Per-class scores used for prediction and averaging (higher is better).

    Embedding models report their class-layer outputs; the others report
    negated decoding distances.
    """
    X, _ = _as_batch(model, X)
    if isinstance(model, MtlEmbeddingNetwork):
        return model.scores(X)
    return -codec.distances(model.bits(X), model.matrix, metric)


def predict_class(model, x, metric="hamming"):
    X, single = _as_batch(model, x)
    pred = np.argmax(class_score_matrix(model, X, metric), axis=1)
    return int(pred[0]) if single else pred


# -- combined loss for the embedding network --------------------------------


class LossBreakdown:
    __slots__ = ("total", "score_term", "bit_term")

    def __init__(self, score_term, bit_term):
        self.score_term = score_term
        self.bit_term = bit_term
        self.total = score_term + bit_term

    def __repr__(self):
        return f"LossBreakdown(total={self.total!r}, score_term={self.score_term!r}, bit_term={self.bit_term!r})"


def _loss_parts(H, labels, M):
    H = np.asarray(H, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if H.shape[-1] != M.L:
        raise LengthMismatch(f"expected outputs of length {M.L}, got shape {H.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= M.K):
        raise IndexOutOfRange(f"class index outside [0, {M.K})")
    rows = M.entries[labels].astype(np.float64)
    l_eff = np.count_nonzero(rows, axis=-1).astype(np.float64)
    o_c = np.sum(H * rows, axis=-1)
    active = rows != 0
    return H, rows, l_eff, o_c, active


def embedding_loss_batch(H, labels, M):
    """Per-sample score and bit terms for a batch of outputs (N, L)."""
    H, rows, l_eff, o_c, active = _loss_parts(H, labels, M)
    score = (l_eff - o_c) ** 2
    bit = np.sum(np.where(active, (H - rows) ** 2, 0.0), axis=-1)
    return score, bit


def embedding_loss_grad_batch(H, labels, M):
    H, rows, l_eff, o_c, active = _loss_parts(H, labels, M)
    g = -2.0 * (l_eff - o_c)[..., None] * rows + 2.0 * (H - rows)
    return np.where(active, g, 0.0)


def embedding_loss(h, c, M: CodeMatrix) -> LossBreakdown:
    """Combined loss for one sample of true class ``c``.

    ``(L_eff - o_c)^2 + sum over nonzero M[c, l] of (h_l - M[c, l])^2``, where
    ``L_eff`` counts the nonzero symbols of row ``c``.
    """
    if not 0 <= c < M.K:
        raise IndexOutOfRange(f"class {c} outside [0, {M.K})")
    score, bit = embedding_loss_batch(np.asarray(h, dtype=np.float64)[None, :], [c], M)
    return LossBreakdown(float(score[0]), float(bit[0]))


def embedding_loss_grad(h, c, M: CodeMatrix) -> np.ndarray:
    if not 0 <= c < M.K:
        raise IndexOutOfRange(f"class {c} outside [0, {M.K})")
    return embedding_loss_grad_batch(np.asarray(h, dtype=np.float64)[None, :], [c], M)[0]


# -- ensemble checkpoints ----------------------------------------------------
# A directory holding matrix.txt, manifest.txt (key=value lines) and one ECNN
# file per network.

MANIFEST = "manifest.txt"
MATRIX_FILE = "matrix.txt"


def _network_files(model):
    if isinstance(model, IndependentEnsemble):
        return [f"clf_{j:04d}.ecnn" for j in range(model.matrix.L)]
    return ["trunk.ecnn"] + [f"head_{j:04d}.ecnn" for j in range(model.matrix.L)]


def _arch(model):
    if isinstance(model, IndependentEnsemble):
        return {"hidden": ",".join(map(str, model.hidden)), "dropout": repr(model.dropout)}
    base = model.base if isinstance(model, MtlEmbeddingNetwork) else model
    return {
        "trunk_hidden": ",".join(map(str, base.trunk_hidden)),
        "head_hidden": str(base.head_hidden),
        "dropout": repr(base.dropout),
    }


def format_manifest(items: dict) -> str:
    lines = []
    for k, v in items.items():
        v = str(v)
        if "\n" in v or "=" in k or not k:
            raise ValueError(f"cannot store {k!r}={v!r} in a manifest")
        lines.append(f"{k}={v}")
    return "\n".join(lines) + "\n"


def parse_manifest(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"expected key=value, got {line!r}", line=lineno)
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def save_model(model, directory, extra: dict | None = None) -> Path:
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create {directory}: {exc}") from exc
    codec.save_matrix(model.matrix, directory / MATRIX_FILE)
    names = _network_files(model)
    for name, net in zip(names, model.networks()):
        save_network(net, directory / name)
    manifest = {
        "kind": model.kind,
        "D": model.D,
        "K": model.matrix.K,
        "L": model.matrix.L,
        "seed": model.seed,
        **_arch(model),
        **(extra or {}),
    }
    try:
        (directory / MANIFEST).write_text(format_manifest(manifest), encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot write manifest: {exc}") from exc
    return directory


def read_manifest(directory) -> dict:
    path = Path(directory) / MANIFEST
    try:
        return parse_manifest(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


def load_model(directory):
    """Rebuild a model from a checkpoint directory; returns (model, manifest)."""
    directory = Path(directory)
    man = read_manifest(directory)
    M = codec.load_matrix(directory / MATRIX_FILE)
    try:
        kind, D, seed = man["kind"], int(man["D"]), int(man["seed"])
        dropout = float(man["dropout"])
        if kind == "independent":
            arch = {"hidden": tuple(int(w) for w in man["hidden"].split(","))}
        else:
            arch = {
                "trunk_hidden": tuple(int(w) for w in man["trunk_hidden"].split(",")),
                "head_hidden": int(man["head_hidden"]),
            }
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad manifest in {directory}: {exc}") from None
    if int(man.get("K", M.K)) != M.K or int(man.get("L", M.L)) != M.L:
        raise ParseError("manifest K/L disagree with matrix file")
    model = build(kind, D, M, seed, dropout=dropout, **arch)
    for name, net in zip(_network_files(model), model.networks()):
        stored = load_network(directory / name, net.spec)
        net.set_params(stored.params())
    if "train_seconds" in man:
        model.train_seconds = float(man["train_seconds"])
    return model, man
