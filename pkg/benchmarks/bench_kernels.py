"""Time the compiled and numpy kernels on the shapes the learners use.

    python benchmarks/bench_kernels.py [--repeat 20]

Prints one row per (kernel, shape) with the median time of each backend,
the speedup, and the max abs difference between their outputs.
"""
import argparse
import statistics
import time

import numpy as np

from coarse2fine import _backend
from coarse2fine.model import PROB_EPS, Architecture, init_params

SHAPES = [
    ("batch 32, 32-64-64-20", Architecture(32, (64, 64), 20), 32),
    ("batch 1, 32-64-64-20", Architecture(32, (64, 64), 20), 1),
    ("batch 2000, 32-64-64-20", Architecture(32, (64, 64), 20), 2000),
    ("batch 32, linear 32-20", Architecture(32, (), 20), 32),
]


def _median_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return statistics.median(times)


def _calls(kernels, theta, X, T, W, v):
    args = (theta.flat, theta.arch.sizes, theta.arch.act_code)
    return {
        "forward_logits": lambda: kernels.forward_logits(*args, X),
        "loss_and_grad": lambda: kernels.loss_and_grad(*args, X, T, W, PROB_EPS)[1],
        "logit_tangent": lambda: kernels.logit_tangent(*args, X, v),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args()

    backends = _backend.available()
    if "cython" not in backends:
        print("compiled kernels not built; only the numpy backend is available")
        return
    py, cy = _backend.get("python"), _backend.get("cython")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<16}{'shape':<26}{'numpy ms':>10}{'cython ms':>11}{'speedup':>9}{'max diff':>11}")
    for label, arch, batch in SHAPES:
        theta = init_params(arch, 0)
        X = rng.standard_normal((batch, arch.input_dim))
        T = (rng.random((batch, arch.n_labels)) < 0.25).astype(float)
        W = np.ones_like(T)
        v = rng.standard_normal(arch.n_params)
        slow, fast = _calls(py, theta, X, T, W, v), _calls(cy, theta, X, T, W, v)
        for name in slow:
            diff = float(np.max(np.abs(slow[name]() - fast[name]())))
            t_py = _median_time(slow[name], args.repeat)
            t_cy = _median_time(fast[name], args.repeat)
            print(f"{name:<16}{label:<26}{1e3 * t_py:>10.3f}{1e3 * t_cy:>11.3f}{t_py / t_cy:>8.1f}x{diff:>11.1e}")


if __name__ == "__main__":
    main()
