"""Pure numpy versions of the compiled kernels in ``_ckernels.pyx``."""
import numpy as np

# rows per block so that an (n, k, L) temporary stays around 32 MB
_BLOCK_ELEMS = 1 << 22


def hamming_distances(words, code):
    words = np.asarray(words, dtype=np.float64)
    code = np.asarray(code, dtype=np.float64)
    # both-nonzero count minus agreement-weighted dot gives twice the disagreements
    both = (words != 0).astype(np.float64) @ (code != 0).astype(np.float64).T
    dot = words @ code.T
    return ((both - dot) / 2).astype(np.int32)


def hamming_decode(words, code):
    return np.argmin(hamming_distances(words, code), axis=1).astype(np.int64)


def soft_distances(outputs, code, metric):
    outputs = np.asarray(outputs, dtype=np.float64)
    code = np.asarray(code, dtype=np.float64)
    n, length = outputs.shape
    k = code.shape[0]
    out = np.empty((n, k), dtype=np.float64)
    step = max(1, _BLOCK_ELEMS // max(1, k * length))
    for start in range(0, n, step):
        diff = outputs[start:start + step, None, :] - code[None, :, :]
        if metric == 1:
            out[start:start + step] = np.abs(diff).sum(axis=2)
        else:
            out[start:start + step] = np.sqrt((diff * diff).sum(axis=2))
    return out
