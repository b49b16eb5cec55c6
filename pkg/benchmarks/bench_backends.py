"""Compare the numba kernels against the pure-numpy fallback.

    python benchmarks/bench_backends.py [--length 3000] [--seeds 5]

Both backends run the same configurations on the same stream; the script
checks that the outputs agree and prints per-run wall-clock times.
"""
import argparse
import statistics
import time
from dataclasses import replace

import numpy as np

from gmocp import RunConfig, generate_stream, run, use_backend

CONFIGS = {
    "gmocp N=1 J=1": RunConfig(method="gmocp"),
    "gmocp N=3 J=2": RunConfig(method="gmocp", n_trials=3, n_selective=2),
    "mocp": RunConfig(method="mocp"),
}


def time_runs(stream, config, seeds):
    times, reports = [], []
    for seed in seeds:
        cfg = replace(config, seed=seed)
        start = time.perf_counter()
        reports.append(run(stream, cfg))
        times.append(time.perf_counter() - start)
    return times, reports


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--length", type=int, default=3000)
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()

    stream = generate_stream(length=args.length, seed=0)
    seeds = range(args.seeds)
    print(f"stream: {stream.probs.shape[1]} models, {stream.probs.shape[2]} labels, {args.length} steps")
    print(f"{'config':<16}{'numba (ms)':>14}{'numpy (ms)':>14}{'speedup':>10}  identical")
    for name, config in CONFIGS.items():
        results = {}
        for backend in ("numba", "numpy"):
            with use_backend(backend):
                run(stream.head(100), config)  # compile / warm caches
                results[backend] = time_runs(stream, config, seeds)
        fast, slow = (statistics.median(results[b][0]) * 1e3 for b in ("numba", "numpy"))
        same = all(np.array_equal(a.set_size, b.set_size) and np.array_equal(a.chosen, b.chosen)
                   for a, b in zip(results["numba"][1], results["numpy"][1]))
        print(f"{name:<16}{fast:>14.2f}{slow:>14.2f}{slow / fast:>9.1f}x  {same}")


if __name__ == "__main__":
    main()
