"""Synthetic distribution-shift benchmark.

A labeled Gaussian-blob source task, input-space shifts applied either
uniformly (one kind) or mixed (each sample gets one randomly chosen kind),
and a driver that adapts every method on every shift for several seeds.
"""

import csv
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .alignment import build_grouped_source_stats
from .errors import DegenerateBatch, InvalidInput, NumericalError
from .formats import Dataset
from .grouping import GroupPartition
from .model import ToyModel, pretrain_source
from .tta import TTAConfig, adapt_offline, adapt_online, iter_batches, precompute_source_stats, source_reference

log = logging.getLogger(__name__)

SHIFT_KINDS = ("none", "mean_shift", "scale", "rotate", "noise", "mixed")


@dataclass(frozen=True)
class ShiftSpec:
    kind: str = "none"
    magnitude: float = 0.0
    seed: int = 0
    mix_components: tuple = ()
    name: str = ""

    def __post_init__(self):
        if self.kind not in SHIFT_KINDS:
            raise InvalidInput(f"unknown shift kind {self.kind!r}")
        if self.magnitude < 0:
            raise InvalidInput("shift magnitude must be >= 0")
        if self.kind == "mixed" and len(self.mix_components) < 2:
            raise InvalidInput("a mixed shift needs at least two components")
        object.__setattr__(self, "mix_components", tuple((str(k), float(m)) for k, m in self.mix_components))

    @property
    def label(self):
        if self.name:
            return self.name
        if self.kind == "mixed":
            return "mixed(" + "+".join(k for k, _ in self.mix_components) + ")"
        return f"{self.kind}({self.magnitude:g})"


def generate_source_dataset(classes, dim, n, seed, separation=3.0, correlation=0.6):
    """Class-conditional Gaussian blobs with a shared, correlated covariance.

    Class means are drawn on a sphere of radius ``separation``; the shared
    covariance mixes an identity with a random low-rank factor so that input
    coordinates are correlated.
    """
    if classes < 2:
        raise InvalidInput("need at least 2 classes")
    if n < 1:
        raise InvalidInput("dataset must contain at least one sample")
    geometry = np.random.default_rng(seed)
    return _sample(classes, dim, n, geometry, np.random.default_rng([seed, 1]), separation, correlation)


def sample_from_source(classes, dim, n, seed, sample_seed, **kwargs):
    """Fresh samples from the same distribution as ``generate_source_dataset(..., seed)``."""
    if n < 1:
        raise InvalidInput("dataset must contain at least one sample")
    geometry = np.random.default_rng(seed)
    return _sample(classes, dim, n, geometry, np.random.default_rng([seed, 2, sample_seed]), **kwargs)


def _sample(classes, dim, n, geometry_rng, sample_rng, separation=3.0, correlation=0.6):
    # geometry (class centers, shared factor) depends only on the dataset seed
    centers = geometry_rng.normal(size=(classes, dim))
    centers *= separation / np.linalg.norm(centers, axis=1, keepdims=True)
    factor = geometry_rng.normal(size=(dim, max(1, dim // 4)))
    factor *= math.sqrt(correlation) / math.sqrt(factor.shape[1])
    labels = sample_rng.integers(classes, size=n)
    noise = math.sqrt(1.0 - correlation) * sample_rng.normal(size=(n, dim))
    noise += sample_rng.normal(size=(n, factor.shape[1])) @ factor.T
    return Dataset(centers[labels] + noise, labels.astype(np.int64), classes)


def _plane(dim, rng):
    q, _ = np.linalg.qr(rng.normal(size=(dim, 2)))
    return q[:, 0], q[:, 1]


def _transform(x, kind, magnitude, rng):
    dim = x.shape[1]
    if kind == "none" or magnitude == 0.0:
        return x.copy()
    if kind == "mean_shift":
        u = rng.normal(size=dim)
        return x + magnitude * u / np.linalg.norm(u)
    if kind == "scale":
        return x * (1.0 + magnitude)
    if kind == "rotate":
        u, v = _plane(dim, rng)
        a, b = x @ u, x @ v
        c, s = math.cos(magnitude), math.sin(magnitude)
        return x + np.outer(a * (c - 1) - b * s, u) + np.outer(a * s + b * (c - 1), v)
    if kind == "noise":
        return x + magnitude * rng.normal(size=x.shape)
    raise InvalidInput(f"cannot apply {kind!r} as a single transform")


def apply_shift(dataset, spec):
    """Shift the inputs of ``dataset``; labels are carried along for evaluation only."""
    x = np.asarray(dataset.inputs, dtype=np.float64)
    if spec.kind != "mixed":
        out = _transform(x, spec.kind, spec.magnitude, np.random.default_rng(spec.seed))
        return Dataset(out, dataset.labels.copy(), dataset.classes)
    rng = np.random.default_rng(spec.seed)
    which = rng.integers(len(spec.mix_components), size=x.shape[0])
    out = np.empty_like(x)
    for c, (kind, magnitude) in enumerate(spec.mix_components):
        sel = which == c
        # each component draws its parameters from its own stream, independent of the others
        comp_rng = np.random.default_rng([spec.seed, c + 1])
        out[sel] = _transform(x, kind, magnitude, comp_rng)[sel]
    return Dataset(out, dataset.labels.copy(), dataset.classes)


METHOD_PRESETS = {
    "source": dict(use_align=False, use_infomax=False),
    "infomax": dict(use_align=False, use_infomax=True),
    "cafe-no-infomax": dict(use_align=True, use_infomax=False),
    "cafe-dimwise": dict(use_align=True, use_infomax=True, k="d"),
    "cafe": dict(use_align=True, use_infomax=True),
}


@dataclass
class BenchSetup:
    """Everything needed to build the source side and the target sets."""

    classes: int = 10
    in_dim: int = 16
    hidden: tuple = (64,)
    feature_dim: int = 32
    n_source: int = 10000
    n_target: int = 10000
    data_seed: int = 0
    model_seed: int = 0
    pretrain_epochs: int = 20
    pretrain_lr: float = 0.05
    pretrain_momentum: float = 0.9
    separation: float = 3.0
    correlation: float = 0.6
    k: int = 4
    group_seed: int = 0
    online: bool = False
    tta: dict = field(default_factory=lambda: dict(lr=1e-2, momentum=0.8, batch_size=256))


@dataclass
class SourceBundle:
    model: ToyModel
    source: Dataset
    reference: object
    stats_by_k: dict


def build_source(setup):
    """Pretrain the source model and compute its statistics (cached per k)."""
    kw = dict(separation=setup.separation, correlation=setup.correlation)
    src = generate_source_dataset(setup.classes, setup.in_dim, setup.n_source, setup.data_seed, **kw)
    model = ToyModel.init(setup.in_dim, tuple(setup.hidden), setup.feature_dim, setup.classes, setup.model_seed)
    model = pretrain_source(
        model, src.inputs, src.labels, setup.pretrain_epochs, setup.pretrain_lr, setup.pretrain_momentum, setup.model_seed
    )
    return SourceBundle(model, src, source_reference(model, src.inputs), {})


def stats_for(bundle, setup, k):
    d = bundle.model.feature_dim
    k = d if k == "d" else int(k)
    if k not in bundle.stats_by_k:
        if k == d:
            bundle.stats_by_k[k] = build_grouped_source_stats(bundle.reference, GroupPartition.singletons(d))
        else:
            bundle.stats_by_k[k] = precompute_source_stats(bundle.model, bundle.source.inputs, k, setup.group_seed)
    return bundle.stats_by_k[k]


def target_for(setup, spec):
    kw = dict(separation=setup.separation, correlation=setup.correlation)
    clean = sample_from_source(setup.classes, setup.in_dim, setup.n_target, setup.data_seed, spec.seed, **kw)
    return apply_shift(clean, spec)


@dataclass
class BenchResult:
    cells: list
    methods: list
    shifts: list

    def summary(self):
        """``{(method, shift): dict(mean, std, frechet_before, frechet_after, n, na)}``."""
        out = {}
        for m in self.methods:
            for s in self.shifts:
                rows = [c for c in self.cells if c["method"] == m and c["shift"] == s]
                ok = [c for c in rows if not c["degenerate"]]
                acc = np.array([c["accuracy"] for c in ok], dtype=float)
                fa = np.array([c["frechet_after"] for c in ok], dtype=float)
                out[(m, s)] = dict(
                    mean=float(acc.mean()) if ok else None,
                    std=float(acc.std()) if ok else None,
                    frechet_before=float(np.mean([c["frechet_before"] for c in ok])) if ok else None,
                    frechet_after=float(fa.mean()) if ok else None,
                    n=len(ok),
                    na=len(ok) < len(rows),
                )
        return out

    def table(self):
        summ = self.summary()
        width = max(len(m) for m in self.methods) + 2
        cols = [max(len(s), 30) for s in self.shifts]
        lines = ["method".ljust(width) + "".join(s.ljust(c + 2) for s, c in zip(self.shifts, cols))]
        for m in self.methods:
            row = m.ljust(width)
            for s, c in zip(self.shifts, cols):
                cell = summ[(m, s)]
                if cell["na"]:
                    txt = "N/A"
                else:
                    txt = f"{100 * cell['mean']:.2f} ± {100 * cell['std']:.2f} (FD {cell['frechet_after']:.3f})"
                row += txt.ljust(c + 2)
            lines.append(row.rstrip())
        return "\n".join(lines) + "\n"


CSV_FIELDS = ("method", "shift", "seed", "accuracy", "frechet_before", "frechet_after", "degenerate")


def run_cell(bundle, setup, method, spec, seed, target=None):
    """Adapt one (method, shift, seed) cell; failures come back as a degenerate row."""
    preset = dict(METHOD_PRESETS.get(method, {}))
    overrides = dict(setup.tta)
    overrides.update(preset)
    k = overrides.pop("k", setup.k)
    stats = stats_for(bundle, setup, k)
    overrides["k"] = stats.k
    overrides["seed"] = seed
    config = TTAConfig(**{key: overrides[key] for key in overrides if key in TTAConfig.__dataclass_fields__})
    if target is None:
        target = target_for(setup, spec)
    row = dict(method=method, shift=spec.label, seed=seed)
    try:
        if setup.online or config.mode == "online":
            stream = iter_batches(target.inputs, config.batch_size, target.labels)
            _, report = adapt_online(bundle.model, stream, stats, config, reference=bundle.reference)
        else:
            _, report = adapt_offline(
                bundle.model, target.inputs, stats, config, labels=target.labels, reference=bundle.reference
            )
    except (DegenerateBatch, NumericalError) as exc:
        log.info("cell %s/%s/%s is N/A: %s", method, spec.label, seed, exc)
        row.update(accuracy=None, frechet_before=None, frechet_after=None, degenerate=True, error=str(exc))
        return row, getattr(exc, "report", None)
    row.update(
        accuracy=report.accuracy,
        frechet_before=report.frechet_before,
        frechet_after=report.frechet_after,
        degenerate=False,
    )
    return row, report


def run_benchmark(methods, shifts, seeds, setup=None, bundle=None, out_dir=None):
    """Run every (method, shift, seed) cell and optionally write result files.

    Writes ``results.csv``, ``results.txt`` and one report JSON per cell
    into ``out_dir`` when given.
    """
    setup = setup or BenchSetup()
    bundle = bundle or build_source(setup)
    cells = []
    if out_dir:
        os.makedirs(os.path.join(out_dir, "cells"), exist_ok=True)
    for spec in shifts:
        target = target_for(setup, spec)
        for method in methods:
            for seed in seeds:
                row, report = run_cell(bundle, setup, method, spec, seed, target)
                cells.append(row)
                if out_dir and report is not None:
                    name = f"{method}__{_slug(spec.label)}__seed{seed}.json"
                    with open(os.path.join(out_dir, "cells", name), "w") as fh:
                        json.dump(report.to_json(), fh, indent=1)
    result = BenchResult(cells, list(methods), [s.label for s in shifts])
    if out_dir:
        write_results(result, out_dir)
    return result


def _slug(text):
    return "".join(ch if ch.isalnum() else "_" for ch in text).strip("_")


def write_results(result, out_dir):
    with open(os.path.join(out_dir, "results.csv"), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS, extrasaction="ignore")
        writer.writeheader()
        for row in result.cells:
            writer.writerow({k: ("N/A" if row.get(k) is None else row[k]) for k in CSV_FIELDS})
    with open(os.path.join(out_dir, "results.txt"), "w") as fh:
        fh.write(result.table())


def shift_from_dict(obj):
    obj = dict(obj)
    obj["mix_components"] = tuple(tuple(c) for c in obj.get("mix_components", ()))
    return ShiftSpec(**obj)


def setup_from_dict(obj):
    obj = dict(obj)
    if "hidden" in obj:
        obj["hidden"] = tuple(obj["hidden"])
    return replace(BenchSetup(), **obj)


def load_bench_config(path):
    """Read a JSON or TOML benchmark config into ``(setup, methods, shifts, seeds)``."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if path.endswith(".toml"):
        try:
            import tomllib
        except ImportError:  # Python < 3.11
            import tomli as tomllib
        cfg = tomllib.loads(raw.decode())
    else:
        cfg = json.loads(raw)
    setup = setup_from_dict(cfg.get("setup", {}))
    methods = cfg.get("methods", ["source", "infomax", "cafe-dimwise", "cafe"])
    shifts = [shift_from_dict(s) for s in cfg.get("shifts", [])] or [ShiftSpec()]
    seeds = cfg.get("seeds", [0, 1, 2])
    return setup, methods, shifts, seeds


def setup_to_dict(setup):
    return asdict(setup)
