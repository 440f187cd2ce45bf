"""Toy classifier: MLP feature extractor followed by a linear classifier.

Weights are stored ``(out, in)`` and applied as ``x @ W.T + b``. Gradients
are hand-derived reverse-mode passes over the cached activations.
"""

import copy
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput
from .infomax import softmax
from .optim import MomentumState, sgd_momentum_step

ACTIVATIONS = ("relu", "identity")


@dataclass
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise InvalidInput(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise InvalidInput("layer weight/bias shapes are inconsistent")


@dataclass
class GradientSet:
    """Per-layer extractor gradients mirroring ``ToyModel.layers``."""

    weights: list
    biases: list

    def tensors(self):
        out = []
        for gw, gb in zip(self.weights, self.biases):
            out.extend([gw, gb])
        return out


class ToyModel:
    def __init__(self, layers, classifier_weight, classifier_bias):
        self.layers = list(layers)
        self.classifier_weight = np.asarray(classifier_weight, dtype=np.float64)
        self.classifier_bias = np.asarray(classifier_bias, dtype=np.float64)
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.weight.shape[1] != prev.weight.shape[0]:
                raise InvalidInput("extractor layer shapes do not chain")
        if self.classifier_weight.shape[1] != self.feature_dim:
            raise InvalidInput("classifier input width does not match feature dim")
        if self.classifier_bias.shape != (self.class_count,):
            raise InvalidInput("classifier bias shape mismatch")

    @classmethod
    def init(cls, in_dim=16, hidden=(64,), feature_dim=32, classes=10, seed=0, final_activation="identity"):
        """He-initialized MLP ``in_dim -> hidden... -> feature_dim`` plus classifier."""
        rng = np.random.default_rng(seed)
        widths = [in_dim, *hidden, feature_dim]
        layers = []
        for i, (a, b) in enumerate(zip(widths, widths[1:])):
            act = final_activation if i == len(widths) - 2 else "relu"
            layers.append(Layer(rng.normal(0.0, np.sqrt(2.0 / a), size=(b, a)), np.zeros(b), act))
        wc = rng.normal(0.0, np.sqrt(1.0 / feature_dim), size=(classes, feature_dim))
        return cls(layers, wc, np.zeros(classes))

    @property
    def in_dim(self):
        return self.layers[0].weight.shape[1]

    @property
    def feature_dim(self):
        return self.layers[-1].weight.shape[0]

    @property
    def class_count(self):
        return self.classifier_weight.shape[0]

    def extractor_params(self):
        out = []
        for layer in self.layers:
            out.extend([layer.weight, layer.bias])
        return out

    def copy(self):
        return copy.deepcopy(self)


def _forward_cache(model, inputs):
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.in_dim:
        raise InvalidInput(f"inputs must be (n, {model.in_dim}), got {x.shape}")
    acts = [x]
    pre = []
    h = x
    for layer in model.layers:
        a = h @ layer.weight.T + layer.bias
        pre.append(a)
        h = np.maximum(a, 0.0) if layer.activation == "relu" else a
        acts.append(h)
    return acts, pre


def extract_features(model, inputs):
    return _forward_cache(model, inputs)[0][-1]


def classify(model, features):
    return features @ model.classifier_weight.T + model.classifier_bias


def forward(model, inputs):
    """Return ``(features, logits)`` for an ``(n, in_dim)`` input batch."""
    feats = extract_features(model, inputs)
    return feats, classify(model, feats)


def backward(model, inputs, grad_features=None, grad_logits=None):
    """Extractor parameter gradients given upstream ``dL/dfeatures`` and ``dL/dlogits``.

    The classifier only routes ``grad_logits`` back into the features; it
    receives no gradient of its own.
    """
    acts, pre = _forward_cache(model, inputs)
    n = acts[0].shape[0]
    g = np.zeros((n, model.feature_dim))
    if grad_features is not None:
        grad_features = np.asarray(grad_features, dtype=np.float64)
        if grad_features.shape != g.shape:
            raise InvalidInput(f"grad_features must be {g.shape}, got {grad_features.shape}")
        g = g + grad_features
    if grad_logits is not None:
        grad_logits = np.asarray(grad_logits, dtype=np.float64)
        if grad_logits.shape != (n, model.class_count):
            raise InvalidInput(f"grad_logits must be {(n, model.class_count)}, got {grad_logits.shape}")
        g = g + grad_logits @ model.classifier_weight
    gws, gbs = [], []
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        if layer.activation == "relu":
            g = g * (pre[i] > 0)
        gws.append(g.T @ acts[i])
        gbs.append(g.sum(axis=0))
        if i > 0:
            g = g @ layer.weight
    return GradientSet(gws[::-1], gbs[::-1])


def predict_labels(logits):
    """Row-wise argmax; ties go to the lowest class index."""
    return np.argmax(np.asarray(logits), axis=1)


def accuracy(model, inputs, labels):
    _, logits = forward(model, inputs)
    return float(np.mean(predict_labels(logits) == np.asarray(labels)))


def cross_entropy_grads(model, inputs, labels):
    """Mean cross-entropy and gradients for all parameters (extractor + classifier)."""
    feats, logits = forward(model, inputs)
    labels = np.asarray(labels)
    p = softmax(logits)
    n = p.shape[0]
    loss = float(-np.mean(np.log(np.maximum(p[np.arange(n), labels], 1e-300))))
    g_logits = p.copy()
    g_logits[np.arange(n), labels] -= 1.0
    g_logits /= n
    ext = backward(model, inputs, grad_logits=g_logits)
    return loss, ext, g_logits.T @ feats, g_logits.sum(axis=0)


def pretrain_source(model, inputs, labels, epochs=50, lr=0.05, momentum=0.9, seed=0, batch_size=128):
    """Supervised cross-entropy training with momentum SGD on a copy of ``model``."""
    trained = model.copy()
    if epochs <= 0:
        return trained
    x = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(labels)
    rng = np.random.default_rng(seed)
    state = MomentumState(lr=lr, momentum=momentum)
    params = trained.extractor_params() + [trained.classifier_weight, trained.classifier_bias]
    for _ in range(epochs):
        order = rng.permutation(x.shape[0])
        for start in range(0, x.shape[0], batch_size):
            idx = order[start:start + batch_size]
            _, ext, gwc, gbc = cross_entropy_grads(trained, x[idx], y[idx])
            sgd_momentum_step(params, ext.tensors() + [gwc, gbc], state)
    return trained
