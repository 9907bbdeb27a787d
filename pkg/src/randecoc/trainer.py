"""Training loops, evaluation and averaging over several ensembles."""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import codec, models
from .data import FeatureTable, batches
from .errors import DimensionMismatch, IncompatibleModels
from .nncore import RmsPropState, rmsprop_step


@dataclass
class HyperParams:
    lr: float = 3e-4
    decay: float = 0.99
    batch_size: int = 512
    epochs: int = 30
    dropout: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0 or not 0 < self.decay < 1:
            raise ValueError("lr must be positive and decay in (0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")

    def as_dict(self):
        return asdict(self)


@dataclass
class Metrics:
    accuracy: float
    n_test: int
    train_seconds: float
    test_seconds: float
    per_class_accuracy: np.ndarray = field(repr=False)
    n_correct: int = 0
    predictions: np.ndarray = field(default=None, repr=False)

    def record(self, **extra) -> str:
        """Single-line ``key=value`` rendering."""
        items = {
            "accuracy": f"{self.accuracy:.6f}",
            "n_test": self.n_test,
            "n_correct": self.n_correct,
            "train_seconds": f"{self.train_seconds:.3f}",
            "test_seconds": f"{self.test_seconds:.3f}",
        }
        items.update(extra)
        return " ".join(f"{k}={v}" for k, v in items.items())


def _check_dims(table, D, what="table"):
    if table.D != D:
        raise DimensionMismatch(f"{what} has feature dim {table.D}, model expects {D}")


def _check_classes(table, M):
    if table.K > M.K:
        raise DimensionMismatch(f"table has {table.K} classes, matrix has {M.K} rows")


def _optimizer(params, hp):
    return RmsPropState.for_params(params, decay=hp.decay, lr=hp.lr)


def _train_one_classifier(net, train, targets, hp, j):
    opt = _optimizer(net.params(), hp)
    keep = targets != 0
    for epoch in range(hp.epochs):
        for b in batches(train, hp.batch_size, shuffle_seed=models.derive_seed(hp.seed, j), epoch=epoch):
            idx = b.indices[keep[b.indices]]
            if idx.size == 0:
                continue
            y, trace = net.forward(train.features[idx], train=True)
            diff = y[:, 0] - targets[idx]
            grads = net.backward(trace, (2.0 * diff / idx.size)[:, None])
            rmsprop_step(net.params(), grads.params, opt)


def train_independent(train: FeatureTable, val, M, hp: HyperParams, workers: int = 1, **arch):
    """Train one network per column on ``column_targets``; zero symbols are skipped."""
    _check_classes(train, M)
    model = models.build_independent(train.D, M, hp.seed, dropout=hp.dropout, **arch)
    jobs = [(j, net, codec.column_targets(M, j, train.labels).astype(np.float64)) for j, net in enumerate(model.classifiers)]

    def run(job):
        j, net, t = job
        _train_one_classifier(net, train, t, hp, j)

    start = time.perf_counter()
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            list(ex.map(run, jobs))
    else:
        for job in jobs:
            run(job)
    model.train_seconds = time.perf_counter() - start
    return model


def _mtl_loop(model, train, hp, grad_fn, on_epoch=None):
    nets = model.networks()
    mtl = model if isinstance(model, models.MtlNetwork) else model.base
    opts = [_optimizer(n.params(), hp) for n in nets]
    for epoch in range(hp.epochs):
        for b in batches(train, hp.batch_size, shuffle_seed=hp.seed, epoch=epoch):
            H, traces = mtl.forward_train(b.features)
            grad_h = grad_fn(H, b.labels)
            for net, g, opt in zip(nets, mtl.backward_train(traces, grad_h), opts):
                rmsprop_step(net.params(), g, opt)
        if on_epoch is not None:
            on_epoch(epoch, model)


def mtl_bit_grad(H, labels, M):
    """Gradient of the mean over heads of each head's masked MSE."""
    T = M.entries[labels].astype(np.float64)
    active = T != 0
    counts = active.sum(axis=0)
    scale = np.where(counts > 0, 2.0 / (np.maximum(counts, 1) * M.L), 0.0)
    return np.where(active, (H - T) * scale, 0.0)


def mtl_loss(H, labels, M):
    T = M.entries[labels].astype(np.float64)
    active = T != 0
    counts = active.sum(axis=0)
    per_head = np.where(active, (H - T) ** 2, 0.0).sum(axis=0) / np.maximum(counts, 1)
    return float(per_head.mean())


def train_mtl(train: FeatureTable, val, M, hp: HyperParams, **arch):
    _check_classes(train, M)
    model = models.build_mtl(train.D, M, hp.seed, dropout=hp.dropout, **arch)
    start = time.perf_counter()
    _mtl_loop(model, train, hp, lambda H, y: mtl_bit_grad(H, y, M))
    model.train_seconds = time.perf_counter() - start
    return model


def embedding_batch_grad(H, labels, M):
    return models.embedding_loss_grad_batch(H, labels, M) / len(labels)


def mean_embedding_loss(model, table):
    score, bit = models.embedding_loss_batch(model.bits(table.features), table.labels, model.matrix)
    return float(np.mean(score + bit))


def train_embedding(train: FeatureTable, val, M, hp: HyperParams, history=None, **arch):
    """Train the MTL trunk and heads through the frozen class layer.

    If ``history`` is a list, the eval-mode mean training loss is appended
    before training and after every epoch.
    """
    _check_classes(train, M)
    model = models.build_embedding(train.D, M, hp.seed, dropout=hp.dropout, **arch)
    on_epoch = None
    if history is not None:
        history.append(mean_embedding_loss(model, train))
        on_epoch = lambda epoch, m: history.append(mean_embedding_loss(m, train))  # noqa: E731
    start = time.perf_counter()
    _mtl_loop(model, train, hp, lambda H, y: embedding_batch_grad(H, y, M), on_epoch)
    model.train_seconds = time.perf_counter() - start
    return model


def train(kind, train_table, val_table, M, hp, workers=1, **arch):
    if kind == "independent":
        return train_independent(train_table, val_table, M, hp, workers=workers, **arch)
    if kind == "mtl":
        return train_mtl(train_table, val_table, M, hp, **arch)
    if kind == "mtl-embedding":
        return train_embedding(train_table, val_table, M, hp, **arch)
    raise ValueError(f"unknown model kind {kind!r}")


def metrics_from_predictions(pred, labels, K, train_seconds=0.0, test_seconds=0.0) -> Metrics:
    pred = np.asarray(pred)
    labels = np.asarray(labels)
    hit = pred == labels
    counts = np.bincount(labels, minlength=K)
    hits = np.bincount(labels[hit], minlength=K)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(counts > 0, hits / np.maximum(counts, 1), np.nan)
    n_correct = int(hit.sum())
    return Metrics(
        accuracy=n_correct / len(labels),
        n_test=len(labels),
        train_seconds=train_seconds,
        test_seconds=test_seconds,
        per_class_accuracy=per_class,
        n_correct=n_correct,
        predictions=pred,
    )


def evaluate(model, test: FeatureTable, metric="hamming") -> Metrics:
    _check_dims(test, model.D, "test table")
    _check_classes(test, model.matrix)
    start = time.perf_counter()
    pred = models.predict_class(model, test.features, metric)
    elapsed = time.perf_counter() - start
    return metrics_from_predictions(pred, test.labels, model.matrix.K, getattr(model, "train_seconds", 0.0), elapsed)


def average_ensembles(model_list, test: FeatureTable, metric="hamming") -> Metrics:
    """Average per-class scores over several ensembles and take the argmax."""
    if not model_list:
        raise IncompatibleModels("need at least one model")
    first = model_list[0]
    for m in model_list[1:]:
        if m.D != first.D or m.matrix.K != first.matrix.K:
            raise IncompatibleModels("models differ in feature dim or class count")
        if m.matrix != first.matrix:
            raise IncompatibleModels("models were trained with different code matrices")
    _check_dims(test, first.D, "test table")
    start = time.perf_counter()
    total = np.zeros((test.N, first.matrix.K))
    for m in model_list:
        total += models.class_score_matrix(m, test.features, metric)
    pred = np.argmax(total / len(model_list), axis=1)
    elapsed = time.perf_counter() - start
    train_s = sum(getattr(m, "train_seconds", 0.0) for m in model_list)
    return metrics_from_predictions(pred, test.labels, first.matrix.K, train_s, elapsed)
