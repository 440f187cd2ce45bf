"""Time the grouped alignment kernel on both backends.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]
"""

import argparse
import json
import time

import numpy as np

from cafe import FeatureStats, GroupPartition, build_grouped_source_stats, feature_alignment_loss, kernels

CASES = [
    # (d, k, batch): desk-scale default, dimwise, mid-size, full-scale grouping
    (32, 4, 256),
    (32, 32, 256),
    (256, 16, 256),
    (2048, 128, 256),
]


def make_case(d, k, n, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(d, d)) / np.sqrt(d)
    cov = a @ a.T + 0.1 * np.eye(d)
    labels = np.arange(d) % k
    stats = build_grouped_source_stats(FeatureStats(np.zeros(d), cov, 10 * d), GroupPartition.from_assignment(labels))
    z = rng.normal(size=(n, d)) @ np.linalg.cholesky(cov).T + 0.1
    return z, stats


def best_time(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--json", default=None)
    args = parser.parse_args()
    backends = kernels.available_backends()
    rows = []
    print(f"{'d':>5} {'k':>4} {'B':>4}  " + "  ".join(f"{b:>12}" for b in backends) + "   speedup")
    for d, k, n in CASES:
        z, stats = make_case(d, k, n)
        row = dict(d=d, k=k, batch=n)
        for b in backends:
            row[b] = best_time(lambda: feature_alignment_loss(z, stats, backend=b), args.repeat)
        losses = {b: feature_alignment_loss(z, stats, backend=b).loss for b in backends}
        row["max_loss_gap"] = max(losses.values()) - min(losses.values())
        speed = row["python"] / row["compiled"] if "compiled" in row else float("nan")
        row["speedup"] = speed
        rows.append(row)
        print(f"{d:5d} {k:4d} {n:4d}  " + "  ".join(f"{1e3 * row[b]:10.3f}ms" for b in backends) + f"   {speed:6.2f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=1)


if __name__ == "__main__":
    main()
