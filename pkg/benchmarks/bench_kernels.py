"""Compare the compiled and pure-Python kernel backends on generator-sized workloads.

Usage: python benchmarks/bench_kernels.py [--repeat N] [--json]
"""

import argparse
import json
import time

import numpy as np

from univnet import _pykernels, kernels

try:
    from univnet import _ckernels
except ImportError:
    _ckernels = None


def _workloads(rng):
    f32 = np.float32
    x1 = rng.standard_normal((4, 16, 8192 + 2)).astype(f32)
    cols1 = rng.standard_normal((4, 16 * 3, 8192)).astype(f32)
    x2 = rng.standard_normal((8, 16, 36, 515)).astype(f32)
    ho, wo = 34, 127
    cols2 = rng.standard_normal((8, 16 * 27, ho * wo)).astype(f32)
    hop, frames, c, o, k, d = 256, 16, 16, 32, 3, 9
    xp = rng.standard_normal((1, c, frames * hop + d * (k - 1))).astype(f32)
    w = rng.standard_normal((1, frames, o, c * k)).astype(f32)
    b = rng.standard_normal((1, frames, o)).astype(f32)
    g = rng.standard_normal((1, o, frames * hop)).astype(f32)
    stft_frames = rng.standard_normal((4, 200, 1024)).astype(f32)
    return {
        "im2col_1d": lambda m: m.im2col_1d(x1, 3, 1, 1, 8192),
        "col2im_1d": lambda m: m.col2im_1d(cols1, 8194, 3, 1, 1),
        "im2col_2d": lambda m: m.im2col_2d(x2, 3, 9, 1, 4, ho, wo),
        "col2im_2d": lambda m: m.col2im_2d(cols2, 36, 515, 3, 9, 1, 4, ho, wo),
        "lvc_forward": lambda m: m.lvc_forward(xp, w, b, k, d, hop),
        "lvc_backward": lambda m: m.lvc_backward(xp, w, g, k, d, hop),
        "overlap_add": lambda m: m.overlap_add(stft_frames, 256, 199 * 256 + 1024),
    }


def _time(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return float(np.median(times))


def run(repeat=7, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for name, fn in _workloads(rng).items():
        row = {"kernel": name, "python_ms": 1e3 * _time(lambda: fn(_pykernels), repeat)}
        if _ckernels is not None:
            row["compiled_ms"] = 1e3 * _time(lambda: fn(_ckernels), repeat)
            row["speedup"] = row["python_ms"] / row["compiled_ms"]
        rows.append(row)
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=7)
    parser.add_argument("--json", action="store_true")
    args = parser.parse_args()
    rows = run(args.repeat)
    if args.json:
        print(json.dumps({"backends": kernels.available_backends(), "results": rows}, indent=1))
        return
    print(f"backends: {', '.join(kernels.available_backends())}")
    print(f"{'kernel':14s} {'python ms':>10s} {'compiled ms':>12s} {'speedup':>8s}")
    for r in rows:
        comp = f"{r['compiled_ms']:12.2f} {r['speedup']:8.2f}" if "compiled_ms" in r else f"{'n/a':>12s}"
        print(f"{r['kernel']:14s} {r['python_ms']:10.2f} {comp}")


if __name__ == "__main__":
    main()
