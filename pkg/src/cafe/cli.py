"""Command-line entry point: ``cafe <command>``."""

import csv
import functools
import json
import logging
import sys

import click
import numpy as np

from . import bench as bench_mod
from .alignment import DEFAULT_EPSILON, build_grouped_source_stats
from .errors import CafeError, DegenerateBatch, NumericalError
from .formats import load_dataset, load_model, load_stats, save_dataset, save_model, save_stats
from .grouping import GroupPartition, correlation_adjacency, spectral_cluster
from .model import ToyModel, accuracy, pretrain_source
from .stats import FeatureStats
from .tta import TTAConfig, TTAReport, adapt_offline, adapt_online, iter_batches, precompute_source_stats, source_reference


def _fail(exc):
    click.echo(f"error [{exc.code}]: {exc}", err=True)
    sys.exit(2)


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except CafeError as exc:
            _fail(exc)

    return wrapper


@click.group()
@click.option("-v", "--verbose", is_flag=True)
def main(verbose):
    """Covariance-aware feature alignment for test-time adaptation."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")


def _parse_mix(values):
    out = []
    for item in values:
        kind, _, mag = item.partition(":")
        out.append((kind, float(mag or 0.0)))
    return tuple(out)


@main.command("make-data")
@click.option("--classes", default=10, show_default=True)
@click.option("--dim", default=16, show_default=True)
@click.option("--n", "n", default=10000, show_default=True)
@click.option("--seed", default=0, show_default=True, help="dataset geometry seed")
@click.option("--sample-seed", default=None, type=int, help="draw fresh samples of the same distribution")
@click.option("--shift", "kind", default="none", type=click.Choice(bench_mod.SHIFT_KINDS), show_default=True)
@click.option("--magnitude", default=0.0, show_default=True)
@click.option("--mix", multiple=True, help="mixed-shift component as kind:magnitude (repeatable)")
@click.option("--shift-seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@_guarded
def make_data(classes, dim, n, seed, sample_seed, kind, magnitude, mix, shift_seed, out):
    """Generate a synthetic labeled dataset, optionally shifted."""
    if sample_seed is None:
        data = bench_mod.generate_source_dataset(classes, dim, n, seed)
    else:
        data = bench_mod.sample_from_source(classes, dim, n, seed, sample_seed)
    spec = bench_mod.ShiftSpec(kind, magnitude, shift_seed, _parse_mix(mix))
    save_dataset(bench_mod.apply_shift(data, spec), out)
    click.echo(f"wrote {n} samples ({spec.label}) to {out}")


@main.command()
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--hidden", default="64", show_default=True, help="comma-separated hidden widths")
@click.option("--feature-dim", default=32, show_default=True)
@click.option("--epochs", default=20, show_default=True)
@click.option("--lr", default=0.05, show_default=True)
@click.option("--momentum", default=0.9, show_default=True)
@click.option("--seed", default=0, show_default=True)
@_guarded
def pretrain(data, out, hidden, feature_dim, epochs, lr, momentum, seed):
    """Train a toy source model with cross-entropy."""
    ds = load_dataset(data)
    widths = tuple(int(w) for w in hidden.split(",") if w)
    model = ToyModel.init(ds.inputs.shape[1], widths, feature_dim, ds.classes, seed)
    model = pretrain_source(model, ds.inputs, ds.labels, epochs, lr, momentum, seed)
    save_model(model, out)
    click.echo(f"source accuracy {accuracy(model, ds.inputs, ds.labels):.4f}; wrote {out}")


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--k", default=128, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@_guarded
def precompute(model_path, data, k, seed, out):
    """Compute grouped source statistics (the file carried to the target side)."""
    model = load_model(model_path)
    ds = load_dataset(data)
    stats = precompute_source_stats(model, ds.inputs, min(k, model.feature_dim), seed)
    save_stats(stats, out)
    click.echo(f"k={stats.k} groups, sizes {sorted(stats.partition.sizes, reverse=True)}; wrote {out}")


def _histogram(sizes):
    values, counts = np.unique(sizes, return_counts=True)
    return {int(v): int(c) for v, c in zip(values, counts)}


@main.command()
@click.option("--stats", "stats_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--k", required=True, type=int)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", default=None, type=click.Path(dir_okay=False), help="write the partition as JSON")
@_guarded
def group(stats_path, k, seed, out):
    """Re-run spectral clustering on a stats file and report group sizes.

    Only within-group covariance survives in the file, so clustering runs on
    the block-diagonal covariance it describes.
    """
    stats = load_stats(stats_path)
    full = FeatureStats(stats.full_mean(), stats.block_covariance(), 1)
    partition = spectral_cluster(correlation_adjacency(full), k, seed)
    hist = _histogram(partition.sizes)
    click.echo(f"d={partition.dim} k={partition.k} max group size {max(partition.sizes)}")
    for size, count in hist.items():
        click.echo(f"  size {size:4d}: {count} group(s)")
    if out:
        with open(out, "w") as fh:
            json.dump({"k": partition.k, "groups": [list(g) for g in partition.canonical()]}, fh)


def _dimwise(stats):
    full = FeatureStats(stats.full_mean(), stats.block_covariance(), 1)
    diag = FeatureStats(full.mean, np.diag(np.diag(full.cov)), 1)
    return build_grouped_source_stats(diag, GroupPartition.singletons(stats.dim), stats.epsilon)


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--stats", "stats_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", default="offline", type=click.Choice(["offline", "online"]), show_default=True)
@click.option("--k", default=None, type=int, help="must match the stats file, or equal d for the dimwise variant")
@click.option("--eps", default=DEFAULT_EPSILON, show_default=True)
@click.option("--lr", default=1e-3, show_default=True)
@click.option("--momentum", default=0.8, show_default=True)
@click.option("--batch-size", default=256, show_default=True)
@click.option("--epochs", default=1, show_default=True)
@click.option("--no-infomax", is_flag=True)
@click.option("--no-align", is_flag=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--report", "report_path", default=None, type=click.Path(dir_okay=False))
@click.option("--dump-group-kl", default=None, type=click.Path(dir_okay=False), help="per-step per-group KL as CSV")
@click.option("--source-data", default=None, type=click.Path(exists=True, dir_okay=False),
              help="source set for full-covariance Fréchet evaluation (default: block stats from the file)")
@click.option("--out-model", default=None, type=click.Path(dir_okay=False))
@_guarded
def adapt(model_path, stats_path, data, mode, k, eps, lr, momentum, batch_size, epochs, no_infomax, no_align,
          seed, report_path, dump_group_kl, source_data, out_model):
    """Adapt a model to an unlabeled target set."""
    model = load_model(model_path)
    stats = load_stats(stats_path, eps)
    if k is not None and k != stats.k:
        if k != stats.dim:
            raise click.BadParameter(f"stats file has k={stats.k}; only k={stats.dim} (dimwise) may override it", param_hint="--k")
        stats = _dimwise(stats)
    ds = load_dataset(data)
    config = TTAConfig(
        lr=lr, momentum=momentum, batch_size=batch_size, k=stats.k, epsilon=eps, use_align=not no_align,
        use_infomax=not no_infomax, mode=mode, seed=seed, epochs=epochs, record_group_kl=dump_group_kl is not None,
    )
    if source_data:
        reference = source_reference(model, load_dataset(source_data).inputs)
    else:
        reference = FeatureStats(stats.full_mean(), stats.block_covariance(), 1)
    report = None
    status = 0
    try:
        if mode == "online":
            stream = iter_batches(ds.inputs, batch_size, ds.labels)
            adapted, report = adapt_online(model, stream, stats, config, reference=reference)
        else:
            adapted, report = adapt_offline(model, ds.inputs, stats, config, labels=ds.labels, reference=reference)
    except (DegenerateBatch, NumericalError) as exc:
        report = getattr(exc, "report", None) or TTAReport(config=vars(config).copy())
        if not report.degeneracy_events:
            report.degeneracy_events.append({"step": 0, "group": getattr(exc, "group", None),
                                             "error": type(exc).__name__, "message": str(exc)})
        click.echo(f"error [{exc.code}]: {exc}", err=True)
        adapted, status = None, 3
    if report_path:
        with open(report_path, "w") as fh:
            json.dump(report.to_json(), fh, indent=1)
    if dump_group_kl and report is not None:
        with open(dump_group_kl, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "group", "kl_target_source", "kl_source_target"])
            writer.writerows(report.group_kl)
    if status:
        sys.exit(status)
    if out_model:
        save_model(adapted, out_model)
    click.echo(
        f"{mode}: {report.steps} steps, accuracy {report.accuracy:.4f}, "
        f"Fréchet {report.frechet_before:.4f} -> {report.frechet_after:.4f}"
    )


@main.command("bench")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out-dir", required=True, type=click.Path(file_okay=False))
@_guarded
def bench_cmd(config_path, out_dir):
    """Run a benchmark matrix from a JSON or TOML config."""
    setup, methods, shifts, seeds = bench_mod.load_bench_config(config_path)
    result = bench_mod.run_benchmark(methods, shifts, seeds, setup, out_dir=out_dir)
    click.echo(result.table(), nl=False)


if __name__ == "__main__":
    main()
