"""Regenerate tests/fixtures/bench_reference.json from benchmarks/mixed_shift.toml."""

import json
from pathlib import Path

from cafe.bench import load_bench_config, run_benchmark

ROOT = Path(__file__).resolve().parent.parent


def main():
    config = ROOT / "benchmarks" / "mixed_shift.toml"
    setup, methods, shifts, seeds = load_bench_config(str(config))
    summary = run_benchmark(methods, shifts, seeds, setup).summary()
    cells = {
        f"{method}/{shift}": dict(accuracy=v["mean"], accuracy_std=v["std"], frechet_after=v["frechet_after"])
        for (method, shift), v in summary.items()
    }
    mixed = {m: summary[(m, "mixed")] for m in methods}
    margins = dict(
        cafe_minus_source_pts=100 * (mixed["cafe"]["mean"] - mixed["source"]["mean"]),
        cafe_minus_dimwise_pts=100 * (mixed["cafe"]["mean"] - mixed["cafe-dimwise"]["mean"]),
        cafe_frechet_reduction=1 - mixed["cafe"]["frechet_after"] / mixed["cafe"]["frechet_before"],
        same_max_shift_pts=max(
            abs(100 * (summary[(m, "same")]["mean"] - summary[("source", "same")]["mean"])) for m in methods
        ),
    )
    out = dict(config="benchmarks/mixed_shift.toml", seeds=seeds, cells=cells, margins=margins)
    path = ROOT / "tests" / "fixtures" / "bench_reference.json"
    path.write_text(json.dumps(out, indent=1, sort_keys=True) + "\n")
    print(json.dumps(margins, indent=1))


if __name__ == "__main__":
    main()
