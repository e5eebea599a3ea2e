"""Compare the compiled kernels against the numpy reference.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Shapes follow the training workloads: the word-level scan runs over
max_seq_len steps for every utterance slot in a batch, the sentence-level
scan over W=5 slots, and the CRF over W=5 with a SwDA-sized tag set.
"""
import argparse
import timeit

import numpy as np

from dactag import kernels

CASES = {
    # name: (T, batch, H)
    "word scan (T=20, B=160, H=128)": (20, 160, 128),
    "sentence scan (T=5, B=32, H=128)": (5, 32, 128),
    "toy scan (T=5, B=8, H=8)": (5, 8, 8),
}


def scan_inputs(T, B, H, rng):
    xw = rng.normal(size=(T, B, 3 * H))
    h0 = np.zeros((B, H))
    U = rng.normal(size=(H, 3 * H)) * 0.1
    mask = (rng.random((T, B)) < 0.9).astype(np.float64)
    keep = np.ones((T, B))
    return xw, h0, U, mask, keep


def time_call(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if kernels.compiled is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")
    rng = np.random.default_rng(0)
    impls = [("numpy", kernels.reference), ("cython", kernels.compiled)]
    print(f"{'kernel':<44}{'numpy ms':>10}{'cython ms':>11}{'speedup':>9}")
    for name, (T, B, H) in CASES.items():
        xw, h0, U, mask, keep = scan_inputs(T, B, H, rng)
        fwd, bwd = [], []
        for _, k in impls:
            fwd.append(time_call(lambda: k.gru_scan_forward(xw, h0, U, mask, keep, False), args.repeat))
            _, z, r, n, hp = k.gru_scan_forward(xw, h0, U, mask, keep, False)
            g = rng.normal(size=(T, B, H))
            bwd.append(time_call(lambda: k.gru_scan_backward(g, U, mask, keep, False, z, r, n, hp), args.repeat))
        for label, (a, b) in ((f"{name} fwd", fwd), (f"{name} bwd", bwd)):
            print(f"{label:<44}{a * 1e3:>10.3f}{b * 1e3:>11.3f}{a / b:>8.1f}x")
    for Y in (4, 42):
        unary = rng.normal(size=(32, 5, Y))
        trans = rng.normal(size=(Y + 1, Y))
        start = rng.integers(0, 5, 32)
        for op in ("crf_forward", "crf_viterbi"):
            t = [time_call(lambda: getattr(k, op)(unary, trans, start), args.repeat) for _, k in impls]
            label = f"{op} (B=32, W=5, Y={Y})"
            print(f"{label:<44}{t[0] * 1e3:>10.3f}{t[1] * 1e3:>11.3f}{t[0] / t[1]:>8.1f}x")


if __name__ == "__main__":
    main()
