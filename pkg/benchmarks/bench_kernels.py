"""Compare the compiled and pure-numpy paths.

    python benchmarks/bench_kernels.py [--teams 12] [--repeat 200]

Times the log density + gradient kernel on a simulated season and a short
single-chain fit in each mode. The compiled timings exclude JIT warm-up.
"""
import argparse
import time

import numpy as np

from rugbyeffort import _kernels
from rugbyeffort.model import ModelConfig, Posterior
from rugbyeffort.sampler import SamplerConfig, run_sampler
from rugbyeffort.simulate import SimConfig, simulate_season


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times), float(np.median(times))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--teams", type=int, default=12)
    ap.add_argument("--repeat", type=int, default=200)
    ap.add_argument("--iters", type=int, default=600)
    args = ap.parse_args()

    fs = simulate_season(SimConfig(nteams=args.teams, seed=0)).features
    cfg = ModelConfig(variant="III")
    post = Posterior(fs, cfg)
    theta = np.random.default_rng(0).normal(0, 0.3, size=post.dim)
    kernels = {
        "numba": _kernels.logp_grad_nb,
        "numpy": _kernels.logp_grad_numpy,
        "python loops": _kernels.logp_grad_loops,
    }
    ref = kernels["numpy"](theta, post.data)
    print(f"{fs.ngames} games, {post.dim} parameters")
    print(f"{'kernel':<14}{'best us':>10}{'median us':>11}{'max |dgrad|':>13}")
    for name, fn in kernels.items():
        lp, g = fn(theta, post.data)
        err = float(np.max(np.abs(g - ref[1])))
        best, med = best_of(lambda: fn(theta, post.data), args.repeat if name != "python loops" else 5)
        print(f"{name:<14}{best * 1e6:>10.1f}{med * 1e6:>11.1f}{err:>13.1e}")

    sc = SamplerConfig(chains=1, iters=args.iters, warmup=args.iters // 2, seed=0)
    run_sampler(fs, cfg, SamplerConfig(chains=1, iters=101, warmup=100), use_numba=True)  # compile
    print(f"\nsingle chain, {args.iters} iterations")
    for use_numba in (True, False):
        t0 = time.perf_counter()
        draws = run_sampler(fs, cfg, sc, use_numba=use_numba)
        dt = time.perf_counter() - t0
        print(f"{'numba' if use_numba else 'numpy':<14}{dt:>8.2f}s  b_effort mean {draws.flat('b_effort').mean():.3f}")


if __name__ == "__main__":
    main()
