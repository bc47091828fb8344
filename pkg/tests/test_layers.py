import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from _gradcheck import check_layer, numeric_grad, rel_error
from genreforge.errors import ShapeError
from genreforge.layers import (
    BatchNorm,
    Conv1d,
    Dense,
    Dropout,
    GlobalMaxPool1d,
    MaxPool1d,
    ReLU,
    add,
    concat_channels,
    softmax,
    softmax_cross_entropy,
    split_channels,
)

F64 = np.float64
CASES = range(20)


def naive_conv(x, w, b):
    """Direct quadruple loop over the same-padding cross-correlation definition."""
    bsz, c_in, t = x.shape
    c_out, _, k = w.shape
    left = (k - 1) // 2
    y = np.zeros((bsz, c_out, t))
    for n in range(bsz):
        for o in range(c_out):
            for tt in range(t):
                acc = b[o]
                for c in range(c_in):
                    for j in range(k):
                        src = tt + j - left
                        if 0 <= src < t:
                            acc += w[o, c, j] * x[n, c, src]
                y[n, o, tt] = acc
    return y


def test_conv_identity_kernel():
    conv = Conv1d(3, 3, 1, dtype=F64)
    conv.weight.value[:, :, 0] = np.eye(3)
    x = np.random.default_rng(0).standard_normal((2, 3, 6))
    np.testing.assert_array_equal(conv.forward(x), x)


def test_conv_hand_example():
    conv = Conv1d(1, 1, 2, dtype=F64)
    conv.weight.value[0, 0] = [1.0, -1.0]
    y = conv.forward(np.array([[[1.0, 2.0, 3.0, 4.0]]]))
    np.testing.assert_array_equal(y[0, 0], [-1.0, -1.0, -1.0, 4.0])


@pytest.mark.parametrize("k", [1, 2, 3, 4, 5])
def test_conv_matches_naive(k):
    rng = np.random.default_rng(k)
    conv = Conv1d(3, 4, k, rng, dtype=F64)
    conv.bias.value[:] = rng.standard_normal(4)
    x = rng.standard_normal((2, 3, 7))
    np.testing.assert_allclose(conv.forward(x), naive_conv(x, conv.weight.value, conv.bias.value),
                               atol=1e-12)


@pytest.mark.parametrize("k", [1, 3, 4])
def test_conv_preserves_length(k):
    conv = Conv1d(5, 2, k, np.random.default_rng(0))
    for t in (1, 4, 9, 128):
        assert conv.forward(np.zeros((1, 5, t), np.float32)).shape == (1, 2, t)


def test_conv_channel_mismatch():
    with pytest.raises(ShapeError):
        Conv1d(3, 2, 3).forward(np.zeros((1, 4, 5)))


@pytest.mark.parametrize("case", CASES)
def test_conv_gradcheck(case):
    rng = np.random.default_rng(100 + case)
    k = [1, 2, 3, 4][case % 4]
    conv = Conv1d(3, 2, k, rng, dtype=F64)
    conv.bias.value[:] = rng.standard_normal(2)
    errs = check_layer(conv, rng.standard_normal((2, 3, 5)), rng)
    assert max(errs.values()) < 1e-5, errs


def test_relu_examples():
    relu = ReLU()
    np.testing.assert_array_equal(relu.forward(np.array([-1.0, 0.0, 2.0])), [0, 0, 2])
    np.testing.assert_array_equal(relu.backward(np.ones(3)), [0, 0, 1])
    assert not relu.forward(-np.arange(1.0, 5.0)).any()


@pytest.mark.parametrize("case", CASES)
def test_relu_gradcheck(case):
    rng = np.random.default_rng(200 + case)
    x = rng.standard_normal((3, 4, 5))
    x[np.abs(x) < 1e-3] = 0.5  # keep clear of the kink
    assert check_layer(ReLU(), x, rng)["input"] < 1e-6


def test_maxpool_examples():
    pool = MaxPool1d(4)
    x = np.array([[[1.0, 3, 2, 8, 5, 5, 0, 1]]])
    np.testing.assert_array_equal(pool.forward(x), [[[8.0, 5.0]]])
    g = pool.backward(np.array([[[1.0, 1.0]]]))
    # tie between two 5s routes to the first
    np.testing.assert_array_equal(g, [[[0, 0, 0, 1, 1, 0, 0, 0]]])

    ident = MaxPool1d(1)
    np.testing.assert_array_equal(ident.forward(x), x)

    tie = MaxPool1d(2)
    tie.forward(np.array([[[2.0, 2.0]]]))
    np.testing.assert_array_equal(tie.backward(np.array([[[1.0]]])), [[[1.0, 0.0]]])


def test_maxpool_drops_remainder_and_checks_size():
    pool = MaxPool1d(3)
    assert pool.forward(np.zeros((1, 2, 8))).shape == (1, 2, 2)
    with pytest.raises(ShapeError):
        MaxPool1d(9).forward(np.zeros((1, 1, 8)))


@pytest.mark.parametrize("case", CASES)
def test_maxpool_gradcheck(case):
    rng = np.random.default_rng(300 + case)
    pool = [1, 2, 3, 4][case % 4]
    errs = check_layer(MaxPool1d(pool), rng.standard_normal((2, 3, 9)), rng)
    assert errs["input"] < 1e-6


@pytest.mark.parametrize("case", CASES)
def test_global_maxpool_gradcheck(case):
    rng = np.random.default_rng(350 + case)
    assert check_layer(GlobalMaxPool1d(), rng.standard_normal((2, 3, 6)), rng)["input"] < 1e-6


def test_batchnorm_examples():
    bn = BatchNorm(2, dtype=F64)
    x = np.ones((4, 2, 3)) * np.array([3.0, -1.0])[None, :, None]
    assert np.allclose(bn.forward(x, training=True), 0.0)
    bn.gamma.value[:] = 0.0
    bn.beta.value[:] = [0.25, -2.0]
    y = bn.forward(np.random.default_rng(0).standard_normal((4, 2, 3)), training=True)
    np.testing.assert_array_equal(y[:, 0], 0.25)
    np.testing.assert_array_equal(y[:, 1], -2.0)


def test_batchnorm_running_stats_and_inference():
    rng = np.random.default_rng(1)
    bn = BatchNorm(3, dtype=F64)
    x = rng.standard_normal((8, 3, 5)) * 2 + 1
    bn.forward(x, training=True)
    np.testing.assert_allclose(bn.running_mean, 0.1 * x.mean(axis=(0, 2)))
    np.testing.assert_allclose(bn.running_var, 0.9 + 0.1 * x.var(axis=(0, 2)))
    assert np.all(bn.running_var >= 0)
    y = bn.forward(x, training=False)
    expect = (x - bn.running_mean[None, :, None]) / np.sqrt(bn.running_var[None, :, None] + 1e-5)
    np.testing.assert_allclose(y, expect)


def test_batchnorm_singleton_set_rejected():
    with pytest.raises(ShapeError):
        BatchNorm(2).forward(np.zeros((1, 2, 1)), training=True)
    with pytest.raises(ShapeError):
        BatchNorm(2).forward(np.zeros((1, 2)), training=True)


@pytest.mark.parametrize("case", CASES)
@pytest.mark.parametrize("training", [True, False])
def test_batchnorm_gradcheck(case, training):
    rng = np.random.default_rng(400 + case)
    bn = BatchNorm(2, dtype=F64)
    bn.gamma.value[:] = rng.uniform(0.5, 2.0, 2)
    bn.beta.value[:] = rng.standard_normal(2)
    bn.running_mean[:] = rng.standard_normal(2)
    bn.running_var[:] = rng.uniform(0.5, 2, 2)
    shape = (4, 2, 3) if case % 2 == 0 else (5, 2)
    errs = check_layer(bn, rng.standard_normal(shape), rng, training=training)
    assert max(errs.values()) < 1e-5, errs


def test_dense_examples():
    d = Dense(2, 2, dtype=F64)
    d.weight.value[:] = np.eye(2)
    x = np.array([[0.3, -0.7]])
    np.testing.assert_array_equal(d.forward(x), x)
    d.weight.value[:] = [[1, 1], [0, 1]]
    d.bias.value[:] = [0, 1]
    np.testing.assert_array_equal(d.forward(np.array([[1.0, 2.0]])), [[3.0, 3.0]])
    with pytest.raises(ShapeError):
        d.forward(np.zeros((1, 3)))


@pytest.mark.parametrize("case", CASES)
def test_dense_gradcheck(case):
    rng = np.random.default_rng(500 + case)
    d = Dense(4, 3, rng, dtype=F64)
    d.bias.value[:] = rng.standard_normal(3)
    errs = check_layer(d, rng.standard_normal((5, 4)), rng)
    assert max(errs.values()) < 1e-5, errs


def test_dropout():
    x = np.ones((10, 10))
    np.testing.assert_array_equal(Dropout(0.0).forward(x, training=True), x)
    np.testing.assert_array_equal(Dropout(0.7).forward(x, training=False), x)
    d = Dropout(0.5, np.random.default_rng(42))
    y = d.forward(np.ones(100_000), training=True)
    survivors = np.mean(y > 0)
    assert 0.495 <= survivors <= 0.505
    assert set(np.unique(y)) == {0.0, 2.0}
    g = d.backward(np.ones(100_000))
    np.testing.assert_array_equal(g, y)
    with pytest.raises(ValueError):
        Dropout(1.0)


def test_softmax_cross_entropy_examples():
    loss, grad = softmax_cross_entropy(np.zeros((3, 8)), [0, 3, 7])
    assert loss == pytest.approx(np.log(8), abs=1e-12)
    assert loss == pytest.approx(2.0794415416798357, abs=1e-12)
    np.testing.assert_allclose(grad.sum(axis=1), 0.0, atol=1e-15)

    logits = np.zeros((1, 4))
    logits[0, 2] = 1000.0
    loss, _ = softmax_cross_entropy(logits, [2])
    assert loss == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(IndexError):
        softmax_cross_entropy(np.zeros((1, 4)), [4])


@given(arrays(np.float64, (4, 6), elements=st.floats(-50, 50)), st.floats(-1e3, 1e3))
def test_softmax_normalized_and_shift_invariant(logits, shift):
    p = softmax(logits)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)
    np.testing.assert_allclose(softmax(logits + shift), p, atol=1e-9)


@pytest.mark.parametrize("case", CASES)
def test_softmax_cross_entropy_gradcheck(case):
    rng = np.random.default_rng(600 + case)
    logits = rng.standard_normal((4, 5)) * 3
    labels = rng.integers(0, 5, 4)
    _, grad = softmax_cross_entropy(logits, labels)
    numeric = numeric_grad(lambda: softmax_cross_entropy(logits, labels)[0], logits)
    assert rel_error(grad, numeric) < 1e-6


def test_concat_and_split():
    rng = np.random.default_rng(0)
    a, b = rng.standard_normal((2, 3, 5)), rng.standard_normal((2, 4, 5))
    assert concat_channels(a, b).shape == (2, 7, 5)
    np.testing.assert_array_equal(concat_channels(a, np.zeros((2, 0, 5))), a)
    ga, gb = split_channels(concat_channels(a, b), [3, 4])
    np.testing.assert_array_equal(ga, a)
    np.testing.assert_array_equal(gb, b)
    with pytest.raises(ShapeError):
        concat_channels(a, np.zeros((2, 1, 4)))


@pytest.mark.parametrize("case", CASES)
def test_concat_gradcheck(case):
    rng = np.random.default_rng(700 + case)
    a, b = rng.standard_normal((2, 2, 3)), rng.standard_normal((2, 3, 3))
    r = rng.standard_normal((2, 5, 3))
    ga, gb = split_channels(r, [2, 3])
    f = lambda: float(np.sum(concat_channels(a, b) * r))  # noqa: E731
    assert rel_error(ga, numeric_grad(f, a)) < 1e-7
    assert rel_error(gb, numeric_grad(f, b)) < 1e-7


def test_add():
    a = np.array([1.0, 2.0])
    np.testing.assert_array_equal(add(a, np.zeros(2)), a)
    np.testing.assert_array_equal(add(a, np.array([3.0, 4.0])), [4.0, 6.0])
    with pytest.raises(ShapeError):
        add(a, np.zeros(3))


@pytest.mark.parametrize("case", CASES)
def test_add_gradcheck(case):
    # backward of add hands the upstream gradient to both operands
    rng = np.random.default_rng(800 + case)
    a, b, r = (rng.standard_normal((2, 3, 4)) for _ in range(3))
    f = lambda: float(np.sum(add(a, b) * r))  # noqa: E731
    assert rel_error(r, numeric_grad(f, a)) < 1e-7
    assert rel_error(r, numeric_grad(f, b)) < 1e-7


@settings(max_examples=20)
@given(arrays(np.float64, (2, 3, 6), elements=st.floats(-1e3, 1e3)))
def test_forward_outputs_finite(x):
    rng = np.random.default_rng(0)
    for layer in (Conv1d(3, 2, 4, rng, F64), ReLU(), MaxPool1d(2), BatchNorm(3, dtype=F64)):
        assert np.all(np.isfinite(layer.forward(x, training=True)))
