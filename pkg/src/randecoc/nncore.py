"""A small dense feedforward engine with exact backpropagation.

Inputs are either a single vector ``(D,)`` or a batch ``(B, D)``; parameter
gradients are summed over the batch rows, so callers fold any averaging into
``grad_out``. Everything runs in float64.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    EmptyVector,
    InconsistentDims,
    IoFailure,
    LengthMismatch,
    ParseError,
    ShapeMismatch,
    TraceMismatch,
)


@dataclass(frozen=True)
class Dense:
    in_dim: int
    out_dim: int


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class Tanh:
    pass


@dataclass(frozen=True)
class Dropout:
    rate: float = 0.5


LayerSpec = Dense | ReLU | Tanh | Dropout


def check_spec(spec) -> tuple[int, int]:
    """Validate a layer list and return its (input, output) dimension."""
    spec = list(spec)
    dense = [s for s in spec if isinstance(s, Dense)]
    if not dense:
        raise InconsistentDims("a network needs at least one dense layer")
    prev = None
    for s in spec:
        if isinstance(s, Dense):
            if s.in_dim < 1 or s.out_dim < 1:
                raise InconsistentDims(f"dense dims must be positive: {s}")
            if prev is not None and s.in_dim != prev:
                raise InconsistentDims(f"dense layer expects {s.in_dim} inputs but receives {prev}")
            prev = s.out_dim
        elif isinstance(s, Dropout):
            if not 0.0 <= s.rate < 1.0:
                raise InconsistentDims(f"dropout rate must be in [0, 1), got {s.rate}")
        elif not isinstance(s, (ReLU, Tanh)):
            raise InconsistentDims(f"unknown layer {s!r}")
    return dense[0].in_dim, dense[-1].out_dim


@dataclass
class ForwardTrace:
    inputs: list  # input seen by each layer
    masks: list  # dropout mask (scaled) per layer, None elsewhere
    squeeze: bool
    net_id: int


@dataclass
class GradientSet:
    params: list  # aligned with Network.params()
    input: np.ndarray


class Network:
    def __init__(self, spec, seed: int = 0):
        self.in_dim, self.out_dim = check_spec(spec)
        self.spec = list(spec)
        ss = np.random.SeedSequence(seed)
        init_ss, drop_ss = ss.spawn(2)
        init_rng = np.random.default_rng(init_ss)
        self.rng = np.random.default_rng(drop_ss)
        self.weights = []
        self.biases = []
        for s in self.spec:
            if isinstance(s, Dense):
                bound = np.sqrt(6.0 / (s.in_dim + s.out_dim))
                self.weights.append(init_rng.uniform(-bound, bound, size=(s.out_dim, s.in_dim)))
                self.biases.append(np.zeros(s.out_dim))

    def params(self) -> list:
        """Parameters in order W0, b0, W1, b1, ... (live references)."""
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def copy_params(self) -> list:
        return [p.copy() for p in self.params()]

    def set_params(self, params):
        cur = self.params()
        if len(params) != len(cur):
            raise ShapeMismatch(f"expected {len(cur)} arrays, got {len(params)}")
        for dst, src in zip(cur, params):
            if dst.shape != np.shape(src):
                raise ShapeMismatch(f"parameter shape {np.shape(src)} != {dst.shape}")
            dst[...] = src

    def forward(self, x, train: bool = False):
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise LengthMismatch(f"expected input dim {self.in_dim}, got shape {x.shape}")
        inputs, masks = [], []
        d = 0
        for s in self.spec:
            inputs.append(x)
            mask = None
            if isinstance(s, Dense):
                x = x @ self.weights[d].T + self.biases[d]
                d += 1
            elif isinstance(s, ReLU):
                x = np.maximum(x, 0.0)
            elif isinstance(s, Tanh):
                x = np.tanh(x)
            elif train and s.rate > 0.0:
                keep = self.rng.random(x.shape) >= s.rate
                mask = keep / (1.0 - s.rate)
                x = x * mask
            masks.append(mask)
        trace = ForwardTrace(inputs, masks, squeeze, id(self))
        return (x[0] if squeeze else x), trace

    def __call__(self, x):
        return self.forward(x, train=False)[0]

    def backward(self, trace: ForwardTrace, grad_out) -> GradientSet:
        if trace.net_id != id(self) or len(trace.inputs) != len(self.spec):
            raise TraceMismatch("trace does not come from this network")
        g = np.asarray(grad_out, dtype=np.float64)
        if trace.squeeze:
            g = g[None, :] if g.ndim == 1 else g
        expected = (trace.inputs[0].shape[0], self.out_dim)
        if g.shape != expected:
            raise TraceMismatch(f"grad_out shape {g.shape} != output shape {expected}")
        gw = [None] * len(self.weights)
        gb = [None] * len(self.biases)
        d = len(self.weights)
        for s, x, mask in zip(reversed(self.spec), reversed(trace.inputs), reversed(trace.masks)):
            if isinstance(s, Dense):
                d -= 1
                gw[d] = g.T @ x
                gb[d] = g.sum(axis=0)
                g = g @ self.weights[d]
            elif isinstance(s, ReLU):
                # subgradient 0 at exactly 0
                g = g * (x > 0.0)
            elif isinstance(s, Tanh):
                t = np.tanh(x)
                g = g * (1.0 - t * t)
            elif mask is not None:
                g = g * mask
        grads = []
        for a, b in zip(gw, gb):
            grads += [a, b]
        return GradientSet(grads, g[0] if trace.squeeze else g)


def init_network(spec, seed: int = 0) -> Network:
    return Network(spec, seed)


def mse_loss(pred, target):
    """Mean squared error and its gradient with respect to ``pred``."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise LengthMismatch(f"pred shape {pred.shape} != target shape {target.shape}")
    if pred.size == 0:
        raise EmptyVector("mse_loss of an empty vector")
    diff = pred - target
    n = diff.size
    return float(np.dot(diff.ravel(), diff.ravel()) / n), 2.0 * diff / n


@dataclass
class RmsPropState:
    accum: list = field(default_factory=list)
    decay: float = 0.99
    lr: float = 3e-4
    eps: float = 1e-8

    def __post_init__(self):
        if not 0.0 < self.decay < 1.0:
            raise ValueError(f"decay must be in (0, 1), got {self.decay}")
        if self.lr <= 0.0:
            raise ValueError(f"lr must be positive, got {self.lr}")

    @classmethod
    def for_params(cls, params, **kw):
        return cls(accum=[np.zeros_like(p, dtype=np.float64) for p in params], **kw)


def rmsprop_step(params, grads, state: RmsPropState):
    """In-place update: accum <- decay*accum + (1-decay)*g^2; p -= lr*g/(sqrt(accum)+eps)."""
    if not state.accum:
        state.accum = [np.zeros_like(p, dtype=np.float64) for p in params]
    if not (len(params) == len(grads) == len(state.accum)):
        raise ShapeMismatch("params, grads and accumulators differ in count")
    for p, g, a in zip(params, grads, state.accum):
        if p.shape != np.shape(g) or p.shape != a.shape:
            raise ShapeMismatch(f"shapes {p.shape}, {np.shape(g)}, {a.shape} disagree")
        a *= state.decay
        a += (1.0 - state.decay) * g * g
        p -= state.lr * g / (np.sqrt(a) + state.eps)
    return params, state


# -- checkpoint format ------------------------------------------------------
#   "ECNN" | u32 version | u32 n_dense | per dense: u32 in, u32 out,
#   f64 weights (row-major, out x in), f64 biases; all little-endian

_MAGIC = b"ECNN"
_VERSION = 1


def params_to_bytes(net: Network) -> bytes:
    parts = [_MAGIC, struct.pack("<II", _VERSION, len(net.weights))]
    for W, b in zip(net.weights, net.biases):
        out_dim, in_dim = W.shape
        parts.append(struct.pack("<II", in_dim, out_dim))
        parts.append(np.ascontiguousarray(W, dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return b"".join(parts)


def params_from_bytes(raw: bytes) -> list:
    """Parse a checkpoint into a list of (W, b) pairs."""
    if raw[:4] != _MAGIC:
        raise ParseError("bad magic, expected ECNN", offset=0)
    if len(raw) < 12:
        raise ParseError("truncated header", offset=len(raw))
    version, n = struct.unpack_from("<II", raw, 4)
    if version != _VERSION:
        raise ParseError(f"unsupported version {version}", offset=4)
    pos = 12
    layers = []
    for _ in range(n):
        if pos + 8 > len(raw):
            raise ParseError("truncated layer header", offset=pos)
        in_dim, out_dim = struct.unpack_from("<II", raw, pos)
        pos += 8
        need = 8 * (in_dim * out_dim + out_dim)
        if pos + need > len(raw):
            raise ParseError("truncated layer data", offset=pos)
        W = np.frombuffer(raw, dtype="<f8", count=in_dim * out_dim, offset=pos).reshape(out_dim, in_dim)
        pos += 8 * in_dim * out_dim
        b = np.frombuffer(raw, dtype="<f8", count=out_dim, offset=pos)
        pos += 8 * out_dim
        layers.append((W.astype(np.float64), b.astype(np.float64)))
    if pos != len(raw):
        raise ParseError("trailing bytes after last layer", offset=pos)
    return layers


def save_network(net: Network, path) -> None:
    try:
        Path(path).write_bytes(params_to_bytes(net))
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_network(path, spec, seed: int = 0) -> Network:
    """Build a network from ``spec`` and fill it with the stored parameters."""
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    layers = params_from_bytes(raw)
    net = Network(spec, seed)
    if len(layers) != len(net.weights):
        raise ShapeMismatch(f"checkpoint holds {len(layers)} dense layers, spec has {len(net.weights)}")
    net.set_params([a for pair in layers for a in pair])
    return net
