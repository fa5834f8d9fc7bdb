import math

import numpy as np
import pytest

import oracles
from crimecast.nncore import (
    LSTM, Adam, BatchNorm, Conv2D, Dense, Dropout, Pool2D, ShapeError, StateError,
    bce_loss, conv2d_forward, dropout, lstm_forward, lstm_step, mcce_loss, mse_loss,
    optimizer_step, pool2d_forward,
)
from crimecast.nncore.errors import NonFiniteError
from crimecast.nncore.gradcheck import numeric_grad, rel_error

TOL = 1e-3


def check_layer_grads(layer, x, rng, training=True):
    """Loss = sum(out * r) for random r; compare all param and input grads to FD."""
    out = layer.forward(x, training=training)
    r = rng.normal(size=out.shape)

    def loss():
        return float((layer.forward(x, training=training) * r).sum())

    layer.zero_grad()
    layer.forward(x, training=training)
    gx = layer.backward(r)
    worst = float(rel_error(gx, numeric_grad(loss, x)).max())
    for name, p, g in layer.named_parameters():
        g = g.copy()
        worst = max(worst, float(rel_error(g, numeric_grad(loss, p)).max()))
    return worst


# --- convolution ---------------------------------------------------------

def test_conv_scalar_kernel():
    x = np.array([[1.0, 2.0], [3.0, 4.0]])[..., None]
    k = np.full((1, 1, 1, 1), 2.0)
    out = conv2d_forward(x, k, np.array([1.0]), "same")
    assert out[..., 0].tolist() == [[3.0, 5.0], [7.0, 9.0]]


def test_conv_valid_sum_of_ones():
    out = conv2d_forward(np.ones((3, 3, 1)), np.ones((3, 3, 1, 1)), np.zeros(1), "valid")
    assert out.shape == (1, 1, 1)
    assert out[0, 0, 0] == 9.0


@pytest.mark.parametrize("padding", ["same", "valid"])
def test_conv_matches_loop_oracle(padding):
    rng = np.random.default_rng(3)
    x = rng.normal(size=(5, 5, 2))
    k = rng.normal(size=(3, 3, 2, 3))
    b = rng.normal(size=3)
    got = conv2d_forward(x, k, b, padding)
    want = np.array(oracles.conv2d_loops(x, k, b, padding))
    np.testing.assert_allclose(got, want, atol=1e-6)


def test_conv_valid_equals_same_interior():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(2, 7, 6, 3))
    k = rng.normal(size=(3, 3, 3, 2))
    b = rng.normal(size=2)
    same = conv2d_forward(x, k, b, "same")
    valid = conv2d_forward(x, k, b, "valid")
    np.testing.assert_allclose(same[:, 1:-1, 1:-1], valid, atol=1e-12)


def test_conv_channel_mismatch_rejected():
    with pytest.raises(ShapeError, match="channels"):
        conv2d_forward(np.ones((4, 4, 2)), np.ones((3, 3, 3, 1)), np.zeros(1))


def test_conv_backward_before_forward():
    with pytest.raises(StateError):
        Conv2D(1, 1).backward(np.ones((1, 2, 2, 1)))


def test_conv_bias_grad_is_channel_sum():
    layer = Conv2D(2, 3, rng=np.random.default_rng(0))
    x = np.random.default_rng(1).normal(size=(2, 4, 4, 2))
    g = np.random.default_rng(2).normal(size=(2, 4, 4, 3))
    layer.forward(x, training=True)
    layer.backward(g)
    np.testing.assert_allclose(layer.grads["bias"], g.sum(axis=(0, 1, 2)))


def test_conv_1x1_kernel_grad_product_rule():
    layer = Conv2D(1, 1, kernel_size=1)
    x = np.array([[[[2.5]]]])
    layer.forward(x)
    layer.backward(np.array([[[[-1.5]]]]))
    assert layer.grads["kernels"][0, 0, 0, 0] == pytest.approx(2.5 * -1.5)


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("padding", ["same", "valid"])
def test_conv_gradcheck(seed, padding):
    rng = np.random.default_rng(seed)
    layer = Conv2D(2, 3, 3, padding=padding, rng=rng)
    layer.params["bias"][:] = rng.normal(size=3)
    assert check_layer_grads(layer, rng.normal(size=(2, 5, 4, 2)), rng) <= TOL


# --- pooling --------------------------------------------------------------

def test_pool_trivial():
    x = np.array([[1.0, 2.0], [3.0, 4.0]])[..., None]
    assert pool2d_forward(x, "max")[0, 0, 0] == 4.0
    assert pool2d_forward(x, "avg")[0, 0, 0] == 2.5


@pytest.mark.parametrize("kind", ["max", "avg"])
@pytest.mark.parametrize("shape", [(6, 6, 3), (7, 5, 2)])
def test_pool_matches_oracle(kind, shape):
    x = np.random.default_rng(5).normal(size=shape)
    np.testing.assert_allclose(pool2d_forward(x, kind), np.array(oracles.pool_loops(x.tolist(), kind)))


def test_pool_odd_extents_drop_trailing():
    assert pool2d_forward(np.ones((2, 5, 7, 1))).shape == (2, 2, 3, 1)


def test_pool_window_too_large():
    with pytest.raises(ShapeError):
        pool2d_forward(np.ones((1, 3, 1)))


def test_max_pool_routes_to_argmax():
    layer = Pool2D("max")
    x = np.array([[[[1.0], [5.0]], [[3.0], [2.0]]]])
    layer.forward(x)
    g = layer.backward(np.array([[[[7.0]]]]))
    assert g[0, :, :, 0].tolist() == [[0.0, 7.0], [0.0, 0.0]]


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("kind", ["max", "avg"])
def test_pool_gradcheck(seed, kind):
    rng = np.random.default_rng(seed)
    assert check_layer_grads(Pool2D(kind), rng.normal(size=(2, 5, 6, 2)), rng) <= TOL


# --- batch norm -----------------------------------------------------------

def test_batchnorm_standardises():
    rng = np.random.default_rng(0)
    bn = BatchNorm(3)
    x = rng.normal(loc=4.0, scale=3.0, size=(64, 3))
    y = bn.forward(x, training=True)
    np.testing.assert_allclose(y.mean(axis=0), 0.0, atol=1e-5)
    np.testing.assert_allclose(y.var(axis=0), 1.0, atol=1e-5)


def test_batchnorm_scale_shift():
    rng = np.random.default_rng(1)
    bn = BatchNorm(2)
    bn.params["scale"][:] = [2.0, 0.5]
    bn.params["shift"][:] = [-1.0, 3.0]
    y = bn.forward(rng.normal(scale=5.0, size=(10, 4, 4, 2)), training=True)
    np.testing.assert_allclose(y.mean(axis=(0, 1, 2)), [-1.0, 3.0], atol=1e-5)
    np.testing.assert_allclose(y.var(axis=(0, 1, 2)), [4.0, 0.25], atol=1e-5)


def test_batchnorm_identical_inputs_give_shift():
    bn = BatchNorm(2)
    bn.params["shift"][:] = [0.25, -2.0]
    y = bn.forward(np.full((5, 2), 3.0), training=True)
    assert (y == np.array([0.25, -2.0])).all()


def test_batchnorm_running_stats_and_inference():
    bn = BatchNorm(1, momentum=0.9)
    bn.forward(np.array([[1.0], [3.0]]), training=True)
    assert bn.running_mean[0] == pytest.approx(0.2)
    assert bn.running_var[0] == pytest.approx(0.9 + 0.1 * 1.0)
    x = np.array([[0.5], [7.0]])
    a = bn.forward(x, training=False)
    b = bn.forward(x, training=False)
    assert (a == b).all()
    np.testing.assert_allclose(a, (x - 0.2) / np.sqrt(1.0 + 1e-5))


def test_batchnorm_rejects_empty_batch():
    with pytest.raises(ShapeError):
        BatchNorm(2).forward(np.zeros((0, 2)), training=True)


@pytest.mark.parametrize("seed", range(10))
def test_batchnorm_gradcheck(seed):
    rng = np.random.default_rng(seed)
    bn = BatchNorm(3)
    bn.params["scale"][:] = rng.normal(size=3)
    bn.params["shift"][:] = rng.normal(size=3)
    assert check_layer_grads(bn, rng.normal(size=(4, 3, 3, 3)), rng) <= TOL


# --- dropout --------------------------------------------------------------

def test_dropout_identity_cases():
    x = np.arange(12.0).reshape(3, 4)
    assert (dropout(x, 0.0, seed=1) == x).all()
    assert (dropout(x, 0.7, seed=1, training=False) == x).all()


def test_dropout_same_seed_same_mask():
    x = np.ones(1000)
    assert (dropout(x, 0.3, seed=9) == dropout(x, 0.3, seed=9)).all()


def test_dropout_statistics():
    y = dropout(np.ones(10**6), 0.5, seed=11)
    survive = (y != 0).mean()
    assert abs(survive - 0.5) <= 0.01
    assert abs(y.mean() - 1.0) <= 0.01


def test_dropout_rate_one_rejected():
    with pytest.raises(ValueError):
        dropout(np.ones(3), 1.0, seed=0)
    with pytest.raises(ValueError):
        Dropout(1.2)


def test_dropout_layer_backward_uses_mask():
    layer = Dropout(0.5, rng=np.random.default_rng(0))
    y = layer.forward(np.ones((50,)), training=True)
    g = layer.backward(np.ones(50))
    assert (g == y).all()


# --- dense ----------------------------------------------------------------

def test_dense_identity():
    layer = Dense.from_arrays(np.eye(3), np.zeros(3))
    x = np.array([1.0, -2.0, 0.5])
    assert (layer.forward(x) == x).all()


def test_dense_zero_weights_sigmoid_bias():
    layer = Dense.from_arrays(np.zeros((4, 2)), np.full(4, 0.3), activation="sigmoid")
    np.testing.assert_allclose(layer.forward(np.array([5.0, -5.0])), 1 / (1 + math.exp(-0.3)))


def test_dense_width_mismatch():
    with pytest.raises(ShapeError):
        Dense(3, 2).forward(np.ones(4))


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("act", ["relu", "sigmoid", "tanh", "linear", "softplus"])
def test_dense_gradcheck(seed, act):
    rng = np.random.default_rng(seed)
    layer = Dense(5, 4, activation=act, rng=rng)
    layer.params["bias"][:] = rng.normal(size=4)
    assert check_layer_grads(layer, rng.normal(size=(3, 5)), rng) <= TOL


# --- LSTM -----------------------------------------------------------------

def test_lstm_zero_weights_zero_state():
    layer = LSTM(3, 2, forget_bias=0.0)
    for k in layer.params:
        layer.params[k][...] = 0.0
    h, c = lstm_step(np.array([1.0, -2.0, 4.0]), np.zeros(2), np.zeros(2), layer)
    assert (h == 0).all() and (c == 0).all()


def test_lstm_saturated_gates_scalar():
    layer = LSTM(1, 1)
    for k in layer.params:
        layer.params[k][...] = 0.0
    for g in ("i", "f", "o"):
        layer.gate("b", g)[:] = 50.0
    h, c = lstm_step(np.array([0.3]), np.zeros(1), np.ones(1), layer)
    assert c[0] == pytest.approx(1.0, abs=1e-12)
    assert h[0] == pytest.approx(math.tanh(1.0), abs=1e-12)
    assert h[0] == pytest.approx(0.7616, abs=1e-4)


def test_lstm_length_one_equals_step():
    rng = np.random.default_rng(0)
    layer = LSTM(3, 4, rng=rng)
    x = rng.normal(size=3)
    h, _ = lstm_step(x, np.zeros(4), np.zeros(4), layer)
    np.testing.assert_array_equal(lstm_forward([x], layer), h)


def test_lstm_forget_gate_closed_decouples_time():
    layer = LSTM(2, 3, rng=np.random.default_rng(1))
    layer.gate("b", "f")[:] = -1e3
    layer.gate("h", "i")[:] = 0.0
    layer.gate("h", "c")[:] = 0.0
    layer.gate("h", "o")[:] = 0.0
    layer.gate("h", "f")[:] = 0.0
    hs = lstm_forward(np.tile([0.4, -0.9], (6, 1)), layer, return_mode="all")
    np.testing.assert_allclose(hs, np.tile(hs[0], (6, 1)), atol=1e-12)


def test_lstm_matches_scalar_oracle():
    rng = np.random.default_rng(2)
    layer = LSTM(3, 4, rng=rng)
    layer.params["bias"][:] = rng.normal(size=16)
    seq = rng.normal(size=(5, 3))
    got = lstm_forward(seq, layer, return_mode="all")
    wx = {g: layer.gate("x", g).tolist() for g in "ifco"}
    wh = {g: layer.gate("h", g).tolist() for g in "ifco"}
    b = {g: layer.gate("b", g).tolist() for g in "ifco"}
    h, c = [0.0] * 4, [0.0] * 4
    for t in range(5):
        h, c = oracles.lstm_step_scalar(seq[t].tolist(), h, c, wx, wh, b)
        np.testing.assert_allclose(got[t], h, atol=1e-12)


def test_lstm_all_last_consistent():
    rng = np.random.default_rng(3)
    layer = LSTM(2, 3, rng=rng)
    seq = rng.normal(size=(7, 2))
    np.testing.assert_array_equal(lstm_forward(seq, layer, "all")[-1], lstm_forward(seq, layer, "last"))


def test_lstm_gates_in_unit_interval():
    rng = np.random.default_rng(4)
    layer = LSTM(3, 5, rng=rng)
    _, _, (i, f, g, o, _) = layer.step(rng.normal(size=(4, 3)) * 10, rng.normal(size=(4, 5)), np.zeros((4, 5)))
    for gate in (i, f, o):
        assert ((gate >= 0) & (gate <= 1)).all()


def test_lstm_rejects_empty_and_mismatch():
    layer = LSTM(2, 2)
    with pytest.raises(ShapeError):
        lstm_forward(np.zeros((0, 2)), layer)
    with pytest.raises(ShapeError):
        lstm_step(np.zeros(3), np.zeros(2), np.zeros(2), layer)


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("return_sequences", [False, True])
def test_lstm_gradcheck(seed, return_sequences):
    rng = np.random.default_rng(seed)
    layer = LSTM(3, 4, return_sequences=return_sequences, rng=rng)
    layer.params["bias"][:] = rng.normal(size=16)
    assert check_layer_grads(layer, rng.normal(size=(2, 10, 3)), rng) <= TOL


def test_lstm_gradcheck_per_gate_matrix():
    rng = np.random.default_rng(21)
    layer = LSTM(3, 4, rng=rng)
    x = rng.normal(size=(2, 6, 3))
    r = rng.normal(size=(2, 4))
    layer.forward(x)
    layer.backward(r)

    def loss():
        return float((layer.forward(x) * r).sum())

    m = layer.hidden_size
    for kind, key in (("x", "w_x"), ("h", "w_h")):
        for k, g in enumerate("ifco"):
            view = layer.gate(kind, g)
            num = numeric_grad(loss, view)
            ana = layer.grads[key][k * m:(k + 1) * m]
            assert rel_error(ana, num).max() <= TOL, f"W_{kind}{g}"


# --- losses ---------------------------------------------------------------

def test_bce_trivial():
    loss, _ = bce_loss(np.array([1.0, 0.0, 1.0]), np.array([1.0, 0.0, 1.0]))
    assert 0.0 <= loss <= 1e-6
    loss, _ = bce_loss(np.array([0.5]), np.array([1.0]))
    assert loss == pytest.approx(math.log(2), abs=1e-6)


def test_losses_match_loop_oracles():
    rng = np.random.default_rng(7)
    p = rng.uniform(size=50)
    y = (rng.uniform(size=50) > 0.6).astype(float)
    mask = rng.uniform(size=50) > 0.2
    assert bce_loss(p, y, mask)[0] == pytest.approx(oracles.bce_loops(p, y, mask), abs=1e-9)
    c_pred, c_true = rng.normal(size=50), rng.poisson(2.0, size=50).astype(float)
    assert mse_loss(c_pred, c_true, mask)[0] == pytest.approx(oracles.mse_loops(c_pred, c_true, mask), abs=1e-9)
    pk = rng.uniform(size=(50, 11))
    yk = (rng.uniform(size=(50, 11)) > 0.5).astype(float)
    assert mcce_loss(pk, yk, mask)[0] == pytest.approx(
        oracles.mcce_loops(pk.tolist(), yk.tolist(), mask), abs=1e-9)


def test_mse_trivial():
    assert mse_loss(np.array([1.0, 2.0]), np.array([1.0, 2.0]))[0] == 0.0
    assert mse_loss(np.array([1.0, 3.0]), np.array([2.0, 2.0]))[0] == 1.0


def test_mcce_trivial():
    eps = 1e-7
    assert mcce_loss(np.array([[1 - eps, 0.3]]), np.array([[1.0, 0.0]]))[0] <= 1e-6
    assert mcce_loss(np.array([[0.5, 0.9]]), np.array([[1.0, 0.0]]))[0] == pytest.approx(math.log(2))
    with pytest.raises(ShapeError):
        mcce_loss(np.ones((2, 3)) * 0.5, np.ones((2, 4)))


@pytest.mark.parametrize("fn", [bce_loss, mse_loss])
def test_losses_reject_fully_masked(fn):
    with pytest.raises(ValueError, match="masked"):
        fn(np.array([0.5, 0.5]), np.array([1.0, 0.0]), np.array([False, False]))


@pytest.mark.parametrize("seed", range(5))
def test_loss_gradients(seed):
    rng = np.random.default_rng(seed)
    mask = rng.uniform(size=12) > 0.3
    mask[0] = True
    y = (rng.uniform(size=12) > 0.5).astype(float)
    for fn, p in ((bce_loss, rng.uniform(0.05, 0.95, 12)), (mse_loss, rng.normal(size=12))):
        _, g = fn(p, y, mask)
        num = numeric_grad(lambda: fn(p, y, mask)[0], p)
        assert rel_error(g, num).max() <= TOL
    pk = rng.uniform(0.05, 0.95, (12, 3))
    yk = (rng.uniform(size=(12, 3)) > 0.5).astype(float)
    _, g = mcce_loss(pk, yk, mask)
    assert rel_error(g, numeric_grad(lambda: mcce_loss(pk, yk, mask)[0], pk)).max() <= TOL
    assert (g[~mask] == 0).all()


def test_losses_nonnegative():
    rng = np.random.default_rng(8)
    for _ in range(20):
        p = rng.uniform(size=10)
        y = (rng.uniform(size=10) > 0.5).astype(float)
        assert bce_loss(p, y)[0] >= 0
        assert mse_loss(p, y)[0] >= 0
        assert mcce_loss(p[:, None], y[:, None])[0] >= 0


# --- optimiser --------------------------------------------------------------

def test_adam_zero_gradient_leaves_params():
    params = {"w": np.array([1.0, -2.0])}
    optimizer_step(params, {"w": np.zeros(2)}, Adam())
    assert params["w"].tolist() == [1.0, -2.0]


def test_adam_first_step_moves_by_lr():
    params = {"w": np.array([0.0])}
    optimizer_step(params, {"w": np.array([3.7])}, Adam(lr=0.01))
    assert params["w"][0] == pytest.approx(-0.01, rel=1e-6)


def test_adam_minimises_square():
    x = np.array([5.0])
    opt = Adam(lr=0.1)
    for _ in range(100):
        opt.step([("x", x, 2 * x)])
    assert abs(x[0]) < 0.5


def test_adam_rejects_non_finite_with_layer_name():
    with pytest.raises(NonFiniteError, match="head.weights"):
        Adam().step([("head.weights", np.zeros(2), np.array([1.0, np.nan]))])


def test_adam_step_counter_increases():
    opt = Adam()
    w = np.zeros(1)
    for t in range(1, 4):
        opt.step([("w", w, np.ones(1))])
        assert opt.t == t


def test_determinism_bitwise():
    def run():
        rng = np.random.default_rng(42)
        layer = Conv2D(2, 3, rng=rng)
        return layer.forward(rng.normal(size=(2, 6, 6, 2)))
    assert (run() == run()).all()
