import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from cafe import InvalidInput, infomax_loss
from cafe.infomax import infomax_from_probs, softmax

logit_batches = st.tuples(st.integers(1, 6), st.integers(2, 5)).flatmap(
    lambda shape: arrays(np.float64, shape, elements=st.floats(-8, 8, allow_nan=False))
)


def test_uniform_predictions_give_zero():
    loss, _ = infomax_loss(np.zeros((5, 4)))
    assert abs(loss) < 1e-9


def test_diverse_one_hot_reaches_minus_log_c():
    c = 6
    assert infomax_from_probs(np.eye(c)) == pytest.approx(-np.log(c), abs=1e-9)


def test_collapsed_one_hot_gives_zero():
    probs = np.zeros((5, 3))
    probs[:, 1] = 1.0
    assert abs(infomax_from_probs(probs)) < 1e-9


def test_softmax_rows_sum_to_one():
    p = softmax(np.array([[1000.0, -1000.0, 0.0], [1.0, 2.0, 3.0]]))
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


def test_rejects_single_class():
    with pytest.raises(InvalidInput):
        infomax_loss(np.zeros((3, 1)))


@settings(max_examples=50, deadline=None)
@given(logit_batches)
def test_loss_is_bounded(logits):
    c = logits.shape[1]
    loss, _ = infomax_loss(logits)
    assert -np.log(c) - 1e-9 <= loss <= np.log(c) + 1e-9


@settings(max_examples=30, deadline=None)
@given(logit_batches, st.randoms(use_true_random=False))
def test_permutations_leave_loss_unchanged(logits, rnd):
    rows = list(range(logits.shape[0]))
    cols = list(range(logits.shape[1]))
    rnd.shuffle(rows)
    rnd.shuffle(cols)
    assert infomax_loss(logits[rows][:, cols])[0] == pytest.approx(infomax_loss(logits)[0], abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(seed):
    logits = np.random.default_rng(seed).normal(scale=2.0, size=(7, 4))
    _, grad = infomax_loss(logits)
    numeric = oracles.central_difference(lambda: infomax_loss(logits)[0], logits, 1e-6)
    assert oracles.max_rel_error(grad, numeric) < 1e-5


def test_descent_reaches_minimum():
    logits = np.random.default_rng(0).normal(scale=0.1, size=(4, 4))
    for _ in range(500):
        _, grad = infomax_loss(logits)
        logits -= 50.0 * grad
    assert infomax_loss(logits)[0] == pytest.approx(-np.log(4), abs=1e-3)
