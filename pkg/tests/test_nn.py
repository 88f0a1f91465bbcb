"""Network primitives: forward pass, losses, gradients, SGD, sharpening."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from asyco.nn import (
    DivergedError,
    LossKind,
    MlpModel,
    SgdMomentum,
    ShapeError,
    loss_and_grad,
    one_hot,
    per_sample_losses,
    sharpen,
    sigmoid,
    softmax,
)

from _oracles import finite_diff_grads, forward_oracle, grads_close


# ---------------------------------------------------------------- forward

def test_forward_zero_params_gives_zero_logits():
    model = MlpModel.init([3, 5, 2], seed=0)
    for w in model.weights:
        w[:] = 0.0
    x = np.random.default_rng(0).normal(size=(7, 3))
    assert np.array_equal(model.forward(x), np.zeros((7, 2)))


def test_forward_identity_single_layer():
    model = MlpModel([3, 3], [np.eye(3)], [np.zeros(3)])
    out = model.forward(np.array([[1.0, 2.0, 3.0]]))
    np.testing.assert_allclose(out, [[1.0, 2.0, 3.0]])


def test_forward_matches_straight_line_oracle():
    model = MlpModel.init([4, 6, 5, 3], seed=42)
    x = np.random.default_rng(7).normal(size=(11, 4))
    np.testing.assert_allclose(model.forward(x), forward_oracle(model, x), rtol=1e-12)


def test_forward_rejects_wrong_input_dim():
    model = MlpModel.init([4, 3], seed=0)
    with pytest.raises(ShapeError):
        model.forward(np.zeros((2, 5)))
    with pytest.raises(ShapeError):
        model.forward(np.zeros(4))  # 1-D


def test_forward_deterministic():
    model = MlpModel.init([4, 8, 3], seed=1)
    x = np.random.default_rng(3).normal(size=(5, 4))
    assert np.array_equal(model.forward(x), model.forward(x))


def test_init_glorot_bound_and_determinism():
    dims = [10, 20, 4]
    a = MlpModel.init(dims, seed=9)
    b = MlpModel.init(dims, seed=9)
    assert a.params_equal(b)
    for w, (fi, fo) in zip(a.weights, zip(dims[:-1], dims[1:])):
        bound = np.sqrt(6.0 / (fi + fo))
        assert np.all(np.abs(w) <= bound)
    assert all(np.all(bias == 0) for bias in a.biases)


# ---------------------------------------------------------------- softmax

def test_softmax_symmetry():
    np.testing.assert_allclose(softmax([0.0, 0.0]), [0.5, 0.5])


def test_softmax_large_logits_no_overflow():
    out = softmax([1000.0, 1000.0, 1000.0])
    np.testing.assert_allclose(out, [1 / 3] * 3)
    assert np.all(np.isfinite(out))


def test_softmax_known_values():
    # independent direct evaluation: exp(z)/sum(exp(z))
    np.testing.assert_allclose(
        softmax([1.0, 2.0, 3.0]), [0.09003, 0.24473, 0.66524], atol=1e-5
    )


@given(hnp.arrays(np.float64, st.integers(2, 8),
                  elements=st.floats(-50, 50)))
def test_softmax_valid_distribution(z):
    p = softmax(z)
    assert np.all(p > 0)
    assert abs(p.sum() - 1.0) < 1e-9


@given(hnp.arrays(np.float64, st.integers(2, 8), elements=st.floats(-50, 50)),
       st.floats(-30, 30))
def test_softmax_shift_invariant(z, c):
    np.testing.assert_allclose(softmax(z + c), softmax(z), atol=1e-12)


# ---------------------------------------------------------------- sigmoid

def test_sigmoid_at_zero():
    assert sigmoid(np.array([0.0]))[0] == 0.5


def test_sigmoid_known_value():
    assert abs(sigmoid(np.array([2.0]))[0] - 0.880797) < 1e-6


@given(st.floats(-36, 36))
def test_sigmoid_symmetry_and_range(x):
    a = sigmoid(np.array([x]))[0]
    b = sigmoid(np.array([-x]))[0]
    assert 0.0 < a < 1.0
    assert abs(a + b - 1.0) < 1e-12


# ---------------------------------------------------------------- sharpen

def test_sharpen_t1_identity():
    p = np.array([0.1, 0.2, 0.7])
    np.testing.assert_allclose(sharpen(p, 1.0), p, atol=1e-12)


def test_sharpen_symmetric_fixed_point():
    np.testing.assert_allclose(sharpen(np.array([0.5, 0.5]), 0.3), [0.5, 0.5])


def test_sharpen_known_value():
    np.testing.assert_allclose(
        sharpen(np.array([0.8, 0.2]), 0.5), [0.941176, 0.058824], atol=1e-5
    )


def test_sharpen_rejects_bad_input():
    with pytest.raises(ValueError):
        sharpen(np.array([0.5, 0.5]), 0.0)
    with pytest.raises(ValueError):
        sharpen(np.array([-0.1, 1.1]), 0.5)
    with pytest.raises(ValueError):
        sharpen(np.array([0.0, 0.0]), 0.5)


@given(hnp.arrays(np.float64, st.integers(2, 6),
                  elements=st.floats(1e-6, 1.0)),
       st.floats(0.05, 5.0))
def test_sharpen_preserves_argmax_and_normalises(p, t):
    p = p / p.sum()
    q = sharpen(p, t)
    assert abs(q.sum() - 1.0) < 1e-9
    assert np.argmax(q) == np.argmax(p)


# ---------------------------------------------------------------- losses

def test_ce_confident_correct_prediction_tiny_loss():
    model = MlpModel([2, 3], [np.zeros((2, 3))], [np.array([20.0, 0.0, 0.0])])
    x = np.zeros((1, 2))
    t = np.array([[1.0, 0.0, 0.0]])
    losses = per_sample_losses(model, x, t, LossKind.CE)
    assert losses[0] < 1e-3


def test_bce_zero_logits_is_ln2():
    model = MlpModel([2, 4], [np.zeros((2, 4))], [np.zeros(4)])
    x = np.ones((3, 2))
    t = np.array([[1, 0, 0, 1], [0, 0, 0, 0], [1, 1, 1, 1]], dtype=float)
    losses = per_sample_losses(model, x, t, LossKind.BCE)
    np.testing.assert_allclose(losses, np.log(2.0), rtol=1e-12)


def test_loss_rejects_target_shape_mismatch():
    model = MlpModel.init([2, 3], seed=0)
    with pytest.raises(ShapeError):
        loss_and_grad(model, np.zeros((2, 2)), np.zeros((2, 4)), LossKind.CE)


def test_weighted_loss_matches_manual_weighted_mean():
    rng = np.random.default_rng(5)
    model = MlpModel.init([3, 6, 4], seed=5)
    x = rng.normal(size=(8, 3))
    t = one_hot(rng.integers(0, 4, size=8), 4)
    u = rng.uniform(0.0, 2.0, size=8)
    losses = per_sample_losses(model, x, t, LossKind.CE)
    loss, _ = loss_and_grad(model, x, t, LossKind.CE, sample_weights=u)
    assert abs(loss - (u * losses).sum() / u.sum()) < 1e-12


def test_all_zero_weights_give_zero_loss_and_grads():
    model = MlpModel.init([3, 4, 2], seed=1)
    x = np.random.default_rng(1).normal(size=(5, 3))
    t = one_hot([0, 1, 0, 1, 1], 2)
    loss, (gw, gb) = loss_and_grad(model, x, t, LossKind.CE,
                                   sample_weights=np.zeros(5))
    assert loss == 0.0
    assert all(np.all(g == 0) for g in gw)
    assert all(np.all(g == 0) for g in gb)


def test_negative_weights_rejected():
    model = MlpModel.init([2, 2], seed=0)
    with pytest.raises(ValueError):
        loss_and_grad(model, np.zeros((2, 2)), one_hot([0, 1], 2), LossKind.CE,
                      sample_weights=np.array([1.0, -1.0]))


def test_nonfinite_loss_raises_diverged():
    model = MlpModel([2, 2], [np.zeros((2, 2))], [np.zeros(2)])
    model.weights[0][:] = np.nan
    with pytest.raises(DivergedError):
        loss_and_grad(model, np.ones((2, 2)), one_hot([0, 1], 2), LossKind.CE)


# ------------------------------------------------------------ grad checks

def _random_case(rng, kind):
    dims = [int(rng.integers(2, 5)), int(rng.integers(2, 7)), int(rng.integers(2, 5))]
    model = MlpModel.init(dims, seed=int(rng.integers(0, 2**31)))
    b = int(rng.integers(1, 6))
    x = rng.normal(size=(b, dims[0]))
    c = dims[-1]
    if kind is LossKind.CE:
        t = one_hot(rng.integers(0, c, size=b), c)
    elif kind is LossKind.BCE:
        t = (rng.random((b, c)) < 0.5).astype(float)
    else:
        t = softmax(rng.normal(size=(b, c)))
    return model, x, t


@pytest.mark.parametrize("kind", list(LossKind))
def test_gradients_match_finite_differences(kind):
    rng = np.random.default_rng(hash(kind.value) % 2**31)
    for _ in range(5):
        model, x, t = _random_case(rng, kind)
        _, grads = loss_and_grad(model, x, t, kind)
        numeric = finite_diff_grads(model, x, t, kind)
        assert grads_close(grads, numeric)


def test_weighted_gradients_match_finite_differences():
    rng = np.random.default_rng(77)
    model, x, t = _random_case(rng, LossKind.CE)
    u = rng.uniform(0.0, 2.0, size=x.shape[0])
    _, grads = loss_and_grad(model, x, t, LossKind.CE, sample_weights=u)
    numeric = finite_diff_grads(model, x, t, LossKind.CE, sample_weights=u)
    assert grads_close(grads, numeric)


# ---------------------------------------------------------------- sgd

def _scalar_model(value=0.0):
    return MlpModel([1, 1], [np.array([[value]])], [np.zeros(1)])


def _grads(g, gb=0.0):
    return ([np.array([[g]])], [np.array([gb])])


def test_sgd_plain_step():
    model = _scalar_model(0.0)
    opt = SgdMomentum(lr=0.1)
    opt.step(model, _grads(1.0))
    assert abs(model.weights[0][0, 0] - (-0.1)) < 1e-15


def test_sgd_momentum_two_steps():
    # v1 = 1, p = -1; v2 = 0.9 + 1 = 1.9, p = -2.9
    model = _scalar_model(0.0)
    opt = SgdMomentum(lr=1.0, momentum=0.9)
    opt.step(model, _grads(1.0))
    assert abs(model.weights[0][0, 0] - (-1.0)) < 1e-15
    opt.step(model, _grads(1.0))
    assert abs(model.weights[0][0, 0] - (-2.9)) < 1e-12


def test_sgd_lr_zero_is_identity():
    model = MlpModel.init([3, 4, 2], seed=3)
    before = model.copy()
    opt = SgdMomentum(lr=0.0, momentum=0.9, weight_decay=5e-4)
    grads = ([np.ones_like(w) for w in model.weights],
             [np.ones_like(b) for b in model.biases])
    opt.step(model, grads)
    assert model.params_equal(before)


def test_sgd_weight_decay_coupled():
    # v = g + wd*p = 1 + 0.1*2 = 1.2; p = 2 - 0.5*1.2 = 1.4
    model = _scalar_model(2.0)
    opt = SgdMomentum(lr=0.5, weight_decay=0.1)
    opt.step(model, _grads(1.0))
    assert abs(model.weights[0][0, 0] - 1.4) < 1e-12


def test_sgd_rejects_bad_settings():
    with pytest.raises(ValueError):
        SgdMomentum(lr=-0.1)
    with pytest.raises(ValueError):
        SgdMomentum(lr=0.1, momentum=1.0)
    with pytest.raises(ValueError):
        SgdMomentum(lr=0.1, weight_decay=-1.0)
