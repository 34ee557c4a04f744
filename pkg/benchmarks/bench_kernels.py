"""Compare the compiled and numpy kernels on the QR log-sum and Markov sampling loops.

    python benchmarks/bench_kernels.py [--n-iter 100000] [--samples 16] [--dim 2] [--repeat 3]
"""

import argparse
import time

import numpy as np

from cocycle_lab import kernels


def best_of(fn, repeat):
    times, out = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-iter", type=int, default=100_000)
    ap.add_argument("--samples", type=int, default=16)
    ap.add_argument("--dim", type=int, default=2)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    if kernels.BACKEND != "compiled":
        print("compiled extension not available; only the numpy backend can run")
    rng = np.random.default_rng(args.seed)
    mats = rng.standard_normal((4, args.dim, args.dim)) + 2 * np.eye(args.dim)
    idx = rng.integers(0, len(mats), size=(args.samples, args.n_iter))
    cum = np.cumsum([[0.6, 0.4], [0.3, 0.7]], axis=1)
    u = rng.random(args.samples * args.n_iter)

    rows = []
    for name, fn in (
        ("qr_log_sums", lambda b: kernels.qr_log_sums(mats, idx, backend=b)[0]),
        ("sample_markov", lambda b: kernels.sample_markov(cum, 0, u, backend=b)),
    ):
        t_py, out_py = best_of(lambda: fn("python"), args.repeat)
        if kernels.BACKEND == "compiled":
            t_c, out_c = best_of(lambda: fn("compiled"), args.repeat)
            diff = float(np.max(np.abs(out_c - out_py)))
            rows.append((name, t_py, t_c, t_py / t_c, diff))
        else:
            rows.append((name, t_py, float("nan"), float("nan"), float("nan")))

    print(f"{args.samples} samples x {args.n_iter} steps, d = {args.dim}, best of {args.repeat}")
    print(f"{'kernel':<14}{'numpy [s]':>12}{'compiled [s]':>14}{'speedup':>10}{'max |diff|':>13}")
    for name, t_py, t_c, speed, diff in rows:
        print(f"{name:<14}{t_py:>12.4f}{t_c:>14.4f}{speed:>10.1f}{diff:>13.2e}")


if __name__ == "__main__":
    main()
