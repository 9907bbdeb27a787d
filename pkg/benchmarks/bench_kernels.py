"""Time the compiled and numpy kernel backends on the same inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from randecoc import codec, kernels, synth
from randecoc.synth import ChannelSpec


def cases(rng):
    M = codec.generate_random_matrix(100, 64, seed=0)
    words = np.where(rng.random((200_000, 64)) < 0.5, 1, -1).astype(np.int8)
    soft = rng.uniform(-1, 1, (50_000, 64))
    small = codec.generate_random_matrix(10, 30, seed=1)
    return {
        "hamming_decode 200k x 100 x 64": lambda b: kernels.hamming_decode(words, M.entries, backend=b),
        "hamming_distances 200k x 100 x 64": lambda b: kernels.hamming_distances(words, M.entries, backend=b),
        "euclidean 50k x 100 x 64": lambda b: kernels.soft_distances(soft, M.entries, kernels.EUCLIDEAN, backend=b),
        "manhattan 50k x 100 x 64": lambda b: kernels.soft_distances(soft, M.entries, kernels.MANHATTAN, backend=b),
        "channel K=10 L=30 1e6 trials": lambda b: _channel(small, b),
    }


def _channel(M, backend):
    old = kernels.BACKEND
    kernels.BACKEND = backend
    try:
        synth.simulate_channel(ChannelSpec(M, 0.2, 10**6, 0))
    finally:
        kernels.BACKEND = old


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = kernels.available_backends()
    print(f"backends: {', '.join(backends)}")
    rng = np.random.default_rng(0)
    print(f"{'kernel':38s}" + "".join(f"{b:>12s}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for name, fn in cases(rng).items():
        times = [min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat)) for b in backends]
        row = f"{name:38s}" + "".join(f"{t:11.3f}s" for t in times)
        if len(times) > 1:
            row += f"{times[1] / times[0]:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
