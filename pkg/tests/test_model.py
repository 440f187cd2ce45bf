import numpy as np
import pytest
from scipy.optimize import linprog

import oracles
from cafe import InvalidInput, ToyModel, backward, forward, predict_labels, pretrain_source
from cafe.bench import generate_source_dataset, sample_from_source
from cafe.model import Layer, accuracy


def hand_model():
    layers = [
        Layer(np.array([[1.0, -1.0], [2.0, 0.0]]), np.array([0.0, -1.0]), "relu"),
        Layer(np.array([[1.0, 1.0], [0.0, 1.0]]), np.zeros(2), "identity"),
    ]
    return ToyModel(layers, np.eye(2), np.array([0.5, 0.0]))


def test_hand_computed_two_by_two():
    # x = (1, 2): pre-activation (-1, 1) -> relu (0, 1) -> features (1, 1)
    feats, logits = forward(hand_model(), [[1.0, 2.0]])
    np.testing.assert_array_equal(feats, [[1.0, 1.0]])
    np.testing.assert_array_equal(logits, [[1.5, 1.0]])


def test_seeded_mlp_golden_output():
    model = ToyModel.init(in_dim=3, hidden=(4,), feature_dim=2, classes=2, seed=0)
    feats, logits = forward(model, [[1.0, -2.0, 0.5]])
    np.testing.assert_allclose(feats, [[-1.12545365, -0.46988834]], atol=1e-8)
    np.testing.assert_allclose(logits, [[-0.3517329, 0.41257933]], atol=1e-8)


def test_identity_extractor_and_classifier_pass_inputs_through(rng):
    model = ToyModel([Layer(np.eye(3), np.zeros(3), "identity")], np.eye(3), np.zeros(3))
    x = rng.normal(size=(4, 3))
    np.testing.assert_array_equal(forward(model, x)[1], x)


def test_zero_weights_give_bias_rows(rng):
    model = ToyModel.init(in_dim=3, hidden=(5,), feature_dim=2, classes=4, seed=1)
    for p in model.extractor_params():
        p[...] = 0.0
    model.classifier_weight[...] = 0.0
    model.classifier_bias[...] = [1.0, 2.0, 3.0, 4.0]
    np.testing.assert_array_equal(forward(model, rng.normal(size=(3, 3)))[1], np.tile([1.0, 2.0, 3.0, 4.0], (3, 1)))


def test_forward_rejects_bad_width():
    with pytest.raises(InvalidInput):
        forward(ToyModel.init(in_dim=3, hidden=(), feature_dim=2, classes=2), np.zeros((2, 4)))


def test_zero_upstream_gives_zero_gradients(rng):
    model = ToyModel.init(in_dim=4, hidden=(6,), feature_dim=3, classes=2, seed=2)
    x = rng.normal(size=(5, 4))
    grads = backward(model, x, np.zeros((5, 3)), np.zeros((5, 2)))
    assert all(np.all(g == 0) for g in grads.tensors())
    assert [g.shape for g in grads.tensors()] == [p.shape for p in model.extractor_params()]


def test_linear_layer_weight_gradient_is_outer_product():
    model = ToyModel([Layer(np.ones((2, 3)), np.zeros(2), "identity")], np.eye(2), np.zeros(2))
    x = np.array([[1.0, 2.0, -3.0]])
    grads = backward(model, x, grad_features=np.ones((1, 2)))
    np.testing.assert_array_equal(grads.weights[0], np.outer(np.ones(2), x[0]))


def test_backward_rejects_bad_upstream_shape():
    model = ToyModel.init(in_dim=2, hidden=(), feature_dim=2, classes=3)
    with pytest.raises(InvalidInput):
        backward(model, np.zeros((4, 2)), grad_logits=np.zeros((4, 2)))


@pytest.mark.parametrize("seed", range(4))
def test_backward_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    model = ToyModel.init(in_dim=5, hidden=(7, 6), feature_dim=4, classes=3, seed=seed)
    x = rng.normal(size=(9, 5))
    a = rng.normal(size=(9, 4))
    b = rng.normal(size=(9, 3))

    def objective():
        feats, logits = forward(model, x)
        return float(np.sum(a * feats) + np.sum(b * logits) + 0.5 * np.sum(feats**2))

    feats, _ = forward(model, x)
    grads = backward(model, x, grad_features=a + feats, grad_logits=b).tensors()
    for param, grad in zip(model.extractor_params(), grads):
        numeric = oracles.central_difference(objective, param, 1e-6)
        assert oracles.max_rel_error(grad, numeric, floor=1e-6) < 1e-4


def test_predict_labels_ties_go_low():
    assert predict_labels([[0.1, 0.9]])[0] == 1
    assert predict_labels([[2.0, 2.0, 2.0]])[0] == 0
    assert predict_labels([[3.0, -1.0, 3.0]])[0] == 0


def linearly_separable_fraction(x, y):
    """Soft-margin LP: fraction of points a single hyperplane classifies correctly."""
    n, d = x.shape
    s = np.where(y == 1, 1.0, -1.0)
    # variables: w (d), b, slack (n); minimize total slack
    cost = np.concatenate([np.zeros(d + 1), np.ones(n)])
    a_ub = np.hstack([-s[:, None] * x, -s[:, None], -np.eye(n)])
    bounds = [(None, None)] * (d + 1) + [(0, None)] * n
    res = linprog(cost, A_ub=a_ub, b_ub=-np.ones(n), bounds=bounds, method="highs")
    w, b = res.x[:d], res.x[d]
    return float(np.mean(np.sign(x @ w + b) == s))


def test_pretraining_on_separable_blobs():
    # seed 4 puts the two centers nearly antipodal (distance ~8)
    train = generate_source_dataset(2, 2, 400, seed=4, separation=4.0)
    test = sample_from_source(2, 2, 800, seed=4, sample_seed=1, separation=4.0)
    assert linearly_separable_fraction(train.inputs, train.labels) > 0.97
    model = ToyModel.init(in_dim=2, hidden=(8,), feature_dim=4, classes=2, seed=0)
    trained = pretrain_source(model, train.inputs, train.labels, epochs=50, seed=0)
    assert accuracy(trained, test.inputs, test.labels) > 0.95


def test_zero_epochs_and_determinism():
    data = generate_source_dataset(3, 4, 200, seed=1)
    model = ToyModel.init(in_dim=4, hidden=(6,), feature_dim=3, classes=3, seed=0)
    untouched = pretrain_source(model, data.inputs, data.labels, epochs=0)
    for p, q in zip(untouched.extractor_params(), model.extractor_params()):
        np.testing.assert_array_equal(p, q)
    a = pretrain_source(model, data.inputs, data.labels, epochs=3, seed=9)
    b = pretrain_source(model, data.inputs, data.labels, epochs=3, seed=9)
    for p, q in zip(a.extractor_params() + [a.classifier_weight], b.extractor_params() + [b.classifier_weight]):
        np.testing.assert_array_equal(p, q)
