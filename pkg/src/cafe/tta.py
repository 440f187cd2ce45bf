"""Source-statistics precomputation and offline / online adaptation loops."""

import logging
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .alignment import DEFAULT_EPSILON, build_grouped_source_stats, feature_alignment_loss
from .errors import DegenerateBatch, InvalidInput, NumericalError
from .grouping import correlation_adjacency, max_group_size, spectral_cluster
from .infomax import infomax_loss
from .metrics import frechet_distance
from .model import backward, extract_features, forward, predict_labels
from .optim import MomentumState, sgd_momentum_step
from .stats import FeatureStats, compute_feature_stats

log = logging.getLogger(__name__)


@dataclass
class TTAConfig:
    lr: float = 1e-3
    momentum: float = 0.8
    batch_size: int = 256
    k: int = 128
    epsilon: float = DEFAULT_EPSILON
    use_align: bool = True
    use_infomax: bool = True
    mode: str = "offline"
    seed: int = 0
    epochs: int = 1
    record_group_kl: bool = False

    def __post_init__(self):
        if self.batch_size < 2:
            raise InvalidInput("batch_size must be >= 2")
        if self.k < 1:
            raise InvalidInput("k must be >= 1")
        if self.epsilon < 0:
            raise InvalidInput("epsilon must be >= 0")
        if self.mode not in ("offline", "online"):
            raise InvalidInput(f"mode must be 'offline' or 'online', got {self.mode!r}")


@dataclass
class TTAReport:
    config: dict
    loss_align: list = field(default_factory=list)
    loss_infomax: list = field(default_factory=list)
    loss_total: list = field(default_factory=list)
    accuracy: float = None
    frechet_before: float = None
    frechet_after: float = None
    degeneracy_events: list = field(default_factory=list)
    wall_time: float = 0.0
    batches_consumed: int = 0
    group_kl: list = field(default_factory=list)
    predictions: np.ndarray = None

    @property
    def steps(self):
        return len(self.loss_total)

    def to_json(self):
        out = {k: v for k, v in asdict(self).items() if k not in ("group_kl", "predictions")}
        out["steps"] = self.steps
        return out


def precompute_source_stats(model, source_inputs, k, seed=0, epsilon=DEFAULT_EPSILON):
    """Features -> full stats -> correlation graph -> groups -> per-group eigenbasis."""
    feats = extract_features(model, source_inputs)
    n, d = feats.shape
    if n < d:
        warnings.warn(f"only {n} source samples for {d} feature dims; source covariance is singular", stacklevel=2)
    stats = compute_feature_stats(feats)
    partition = spectral_cluster(correlation_adjacency(stats), min(k, d), seed)
    return build_grouped_source_stats(stats, partition, epsilon)


def _check(model, stats, config):
    if stats.dim != model.feature_dim:
        raise InvalidInput(f"stats are {stats.dim}-dimensional but the model emits {model.feature_dim} features")
    if config.use_align and max_group_size(stats.partition) >= config.batch_size:
        raise DegenerateBatch(
            f"largest group has {max_group_size(stats.partition)} dims but batch size is {config.batch_size}",
            hint=f"need groups smaller than the batch: choose k > d / B = {stats.dim / config.batch_size:.2f}",
        )


def tta_step(model, batch, stats, config, state, report, step):
    """One optimization step on ``batch``; appends losses to ``report``."""
    feats, logits = forward(model, batch)
    la = lim = 0.0
    g_feat = g_logit = None
    if config.use_align:
        res = feature_alignment_loss(feats, stats)
        la, g_feat = res.loss, res.grad_features
        if config.record_group_kl:
            for g, (a, b) in enumerate(zip(res.per_group_kl_ts, res.per_group_kl_st)):
                report.group_kl.append((step, g, float(a), float(b)))
    if config.use_infomax:
        lim, g_logit = infomax_loss(logits)
    total = la + lim
    if not np.isfinite(total):
        raise NumericalError(f"loss diverged at step {step}")
    grads = backward(model, batch, g_feat, g_logit)
    sgd_momentum_step(model.extractor_params(), grads.tensors(), state)
    report.loss_align.append(float(la))
    report.loss_infomax.append(float(lim))
    report.loss_total.append(float(total))


def _run_guarded(report, fn):
    # failures re-raise with the partial trace attached as ``exc.report``
    t0 = time.perf_counter()
    try:
        fn()
    except (DegenerateBatch, NumericalError) as exc:
        report.degeneracy_events.append(
            {"step": report.steps, "group": getattr(exc, "group", None), "error": type(exc).__name__, "message": str(exc)}
        )
        report.wall_time = time.perf_counter() - t0
        log.warning("adaptation aborted: %s", exc)
        exc.report = report
        raise
    report.wall_time = time.perf_counter() - t0


def _frechet(model, inputs, reference):
    if reference is None:
        return None
    return frechet_distance(compute_feature_stats(extract_features(model, inputs)), reference)


def adapt_offline(model, target_inputs, stats, config, labels=None, reference=None):
    """Adapt a copy of ``model`` for ``config.epochs`` passes, then predict the whole target set.

    ``stats`` must already carry the desired epsilon. ``labels`` (hidden from
    the optimization) and ``reference`` (full source FeatureStats) only feed
    the evaluation fields of the report.
    """
    stats = stats.with_epsilon(config.epsilon)
    _check(model, stats, config)
    x = np.asarray(target_inputs, dtype=np.float64)
    adapted = model.copy()
    report = TTAReport(config=asdict(config))
    report.frechet_before = _frechet(model, x, reference)
    min_batch = max_group_size(stats.partition) + 1 if config.use_align else 1
    state = MomentumState(lr=config.lr, momentum=config.momentum)
    rng = np.random.default_rng(config.seed)

    def loop():
        step = 0
        for _ in range(config.epochs):
            order = rng.permutation(x.shape[0])
            for start in range(0, x.shape[0], config.batch_size):
                idx = order[start:start + config.batch_size]
                if idx.size < max(min_batch, 2):
                    continue
                tta_step(adapted, x[idx], stats, config, state, report, step)
                report.batches_consumed += 1
                step += 1

    _run_guarded(report, loop)
    _, logits = forward(adapted, x)
    report.predictions = predict_labels(logits)
    if labels is not None:
        report.accuracy = float(np.mean(report.predictions == np.asarray(labels)))
    report.frechet_after = _frechet(adapted, x, reference)
    return adapted, report


def iter_batches(inputs, batch_size, labels=None):
    """Consecutive mini-batches of ``inputs`` (and ``labels``) in stream order."""
    for start in range(0, len(inputs), batch_size):
        if labels is None:
            yield inputs[start:start + batch_size]
        else:
            yield inputs[start:start + batch_size], labels[start:start + batch_size]


def adapt_online(model, target_stream, stats, config, reference=None):
    """Mini-batched online adaptation: step on each batch, then predict that batch.

    ``target_stream`` yields input batches or ``(inputs, labels)`` pairs; each
    is consumed exactly once. Batches too small for the alignment loss are
    predicted without an update.
    """
    stats = stats.with_epsilon(config.epsilon)
    _check(model, stats, config)
    adapted = model.copy()
    report = TTAReport(config=asdict(config))
    min_batch = max_group_size(stats.partition) + 1 if config.use_align else 1
    state = MomentumState(lr=config.lr, momentum=config.momentum)
    preds, correct, seen = [], 0, 0
    feats_before, feats_after = [], []

    def loop():
        nonlocal correct, seen
        for item in target_stream:
            xb, yb = item if isinstance(item, tuple) else (item, None)
            xb = np.asarray(xb, dtype=np.float64)
            report.batches_consumed += 1
            if reference is not None:
                feats_before.append(extract_features(model, xb))
            if xb.shape[0] >= max(min_batch, 2):
                tta_step(adapted, xb, stats, config, state, report, report.steps)
            feats, logits = forward(adapted, xb)
            p = predict_labels(logits)
            preds.append(p)
            if reference is not None:
                feats_after.append(feats)
            if yb is not None:
                correct += int(np.sum(p == np.asarray(yb)))
                seen += len(yb)

    _run_guarded(report, loop)
    report.predictions = np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)
    if seen:
        report.accuracy = correct / seen
    if reference is not None and feats_before:
        report.frechet_before = frechet_distance(compute_feature_stats(np.vstack(feats_before)), reference)
        report.frechet_after = frechet_distance(compute_feature_stats(np.vstack(feats_after)), reference)
    return adapted, report


def source_reference(model, source_inputs):
    """Full source FeatureStats used for Fréchet evaluation."""
    return compute_feature_stats(extract_features(model, source_inputs))


__all__ = [
    "TTAConfig",
    "TTAReport",
    "FeatureStats",
    "precompute_source_stats",
    "adapt_offline",
    "adapt_online",
    "iter_batches",
    "source_reference",
    "tta_step",
]
