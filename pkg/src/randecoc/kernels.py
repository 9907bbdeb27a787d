"""Backend selection for the decoding kernels.

The compiled Cython module is used when it was built; otherwise the numpy
fallback is loaded. Set ``RANDECOC_PURE_PYTHON=1`` to force the fallback.
Both backends return identical integer results; soft distances agree to
floating-point rounding.
"""
import os

import numpy as np

from . import _pykernels

MANHATTAN = 1
EUCLIDEAN = 2

_compiled = None
if os.environ.get("RANDECOC_PURE_PYTHON", "") in ("", "0"):
    try:
        from . import _ckernels as _compiled
    except ImportError:
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"


def available_backends():
    return ["cython", "python"] if _compiled is not None else ["python"]


def _impl(backend):
    if backend is None:
        backend = BACKEND
    if backend == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built")
        return _compiled
    if backend == "python":
        return _pykernels
    raise ValueError(f"unknown backend {backend!r}")


def _i8(a):
    return np.ascontiguousarray(a, dtype=np.int8)


def hamming_distances(words, code, backend=None):
    """(N, L) int words vs (K, L) code -> (N, K) int32 distances.

    Positions where either symbol is 0 contribute nothing.
    """
    return _impl(backend).hamming_distances(_i8(words), _i8(code))


def hamming_decode(words, code, backend=None):
    """Lowest-index nearest codeword under ``hamming_distances``."""
    return _impl(backend).hamming_decode(_i8(words), _i8(code))


def soft_distances(outputs, code, metric, backend=None):
    """Manhattan (``metric=1``) or Euclidean (``metric=2``) distances."""
    outputs = np.ascontiguousarray(outputs, dtype=np.float64)
    return _impl(backend).soft_distances(outputs, _i8(code), int(metric))
