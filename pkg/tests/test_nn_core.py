import numpy as np
import pytest

from socnav.nn_core import (
    Adam, CheckpointError, Conv1d, Dense, Linear, NumericFault, Param, ReLU,
    ShapeError, l2_loss, load_checkpoint, load_state, maxpool_rows,
    maxpool_rows_backward, save_checkpoint, softmax, softmax_backward, state_dict,
)


def fd_grad(f, x, h=1e-5):
    """Central finite differences of scalar f() w.r.t. array x (in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        fp = f()
        x[idx] = orig - h
        fm = f()
        x[idx] = orig
        g[idx] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b):
    return np.max(np.abs(a - b) / np.maximum(1.0, np.maximum(np.abs(a), np.abs(b))))


# --- dense -------------------------------------------------------------------

def test_dense_identity():
    rng = np.random.default_rng(0)
    d = Dense(3, 3, rng, "d")
    d.W.data = np.eye(3)
    d.b.data = np.zeros(3)
    x = np.array([[1.0, -2.0, 0.5]])
    assert np.array_equal(d.forward(x), x)


def test_dense_scalar_chain_rule():
    rng = np.random.default_rng(0)
    d = Dense(1, 1, rng, "d")
    d.W.data = np.array([[2.0]])
    d.b.data = np.array([3.0])
    y = d.forward(np.array([[4.0]]))
    assert y[0, 0] == 11.0
    d.backward(np.array([[1.0]]))
    assert d.W.grad[0, 0] == 4.0
    assert d.b.grad[0] == 1.0


def test_dense_gradients_match_fd():
    rng = np.random.default_rng(1)
    d = Dense(8, 5, rng, "d")
    x = rng.normal(size=(4, 8))
    R = rng.normal(size=(4, 5))     # linear probe: L = sum(y * R)

    def loss():
        return float((d.forward(x.copy()) * R).sum())

    loss()
    gx = d.backward(R)
    assert rel_err(d.W.grad, fd_grad(loss, d.W.data)) < 1e-6
    assert rel_err(d.b.grad, fd_grad(loss, d.b.data)) < 1e-6
    assert rel_err(gx, fd_grad(loss, x)) < 1e-6


def test_dense_shape_error_names_shapes():
    d = Dense(4, 2, np.random.default_rng(0), "d")
    with pytest.raises(ShapeError, match=r"4"):
        d.forward(np.zeros((1, 3)))


# --- conv ---------------------------------------------------------------------

def test_conv_identity_kernel():
    rng = np.random.default_rng(2)
    c = Conv1d(1, 1, 1, 1, rng, "c")
    c.W.data = np.ones((1, 1, 1))
    c.b.data = np.zeros(1)
    x = rng.normal(size=(2, 9, 1))
    assert np.array_equal(c.forward(x), x)


def test_conv_hand_example():
    c = Conv1d(1, 1, 2, 2, np.random.default_rng(0), "c")
    c.W.data = np.ones((2, 1, 1))
    c.b.data = np.zeros(1)
    y = c.forward(np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 4, 1))
    assert y.shape == (1, 2, 1)
    assert list(y[0, :, 0]) == [3.0, 7.0]


def test_conv_kernel_larger_than_input():
    c = Conv1d(1, 1, 5, 1, np.random.default_rng(0), "c")
    with pytest.raises(ShapeError):
        c.forward(np.zeros((1, 3, 1)))


@pytest.mark.parametrize("stride", [1, 2, 3])
def test_conv_gradients_match_fd(stride):
    rng = np.random.default_rng(3)
    c = Conv1d(2, 3, 3, stride, rng, "c")
    x = rng.normal(size=(2, 11, 2))
    Lp = c.out_len(11)
    R = rng.normal(size=(2, Lp, 3))

    def loss():
        return float((c.forward(x.copy()) * R).sum())

    loss()
    gx = c.backward(R)
    assert rel_err(c.W.grad, fd_grad(loss, c.W.data)) < 1e-6
    assert rel_err(c.b.grad, fd_grad(loss, c.b.data)) < 1e-6
    assert rel_err(gx, fd_grad(loss, x)) < 1e-6


# --- softmax -------------------------------------------------------------------

def test_softmax_uniform():
    assert np.allclose(softmax(np.zeros(4)), 0.25, atol=0)


def test_softmax_stability():
    y = softmax(np.array([1000.0, 0.0]))
    assert np.all(np.isfinite(y))
    assert y[0] == pytest.approx(1.0, abs=1e-12)


def test_softmax_sums_to_one():
    rng = np.random.default_rng(4)
    for _ in range(200):
        y = softmax(rng.normal(scale=50, size=rng.integers(2, 9)))
        assert abs(y.sum() - 1.0) < 1e-12
    # entries strictly inside (0, 1) at attention-logit scales
    for _ in range(200):
        y = softmax(rng.normal(scale=3, size=rng.integers(2, 9)))
        assert np.all(y > 0) and np.all(y < 1)


def test_softmax_jacobian_matches_fd():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(6,))
    R = rng.normal(size=(6,))

    def loss():
        return float((softmax(x) * R).sum())

    g = softmax_backward(softmax(x), R)
    assert rel_err(g, fd_grad(loss, x)) < 1e-6


# --- maxpool -------------------------------------------------------------------

def test_maxpool_single_row():
    row = np.array([[1.0, -2.0, 3.0]])
    out, arg = maxpool_rows(row)
    assert np.array_equal(out, row[0])
    assert np.array_equal(arg, [0, 0, 0])


def test_maxpool_empty_set_is_zeros():
    out, arg = maxpool_rows(np.zeros((0, 7)), width=7)
    assert np.array_equal(out, np.zeros(7))


def test_maxpool_permutation_invariant():
    rng = np.random.default_rng(6)
    for _ in range(50):
        rows = rng.normal(size=(rng.integers(1, 6), 4))
        out, _ = maxpool_rows(rows)
        perm = rng.permutation(len(rows))
        out2, _ = maxpool_rows(rows[perm])
        assert np.array_equal(out, out2)


def test_maxpool_gradient_routes_to_argmax():
    rows = np.array([[1.0, 5.0], [3.0, 2.0]])
    out, arg = maxpool_rows(rows)
    g = maxpool_rows_backward(np.array([10.0, 20.0]), arg, 2)
    assert np.array_equal(g, [[0.0, 20.0], [10.0, 0.0]])


def test_maxpool_first_row_tie_break():
    rows = np.array([[2.0], [2.0]])
    _, arg = maxpool_rows(rows)
    assert arg[0] == 0


# --- l2 loss --------------------------------------------------------------------

def test_l2_zero_when_equal():
    loss, g = l2_loss(np.array([1.0, 2.0]), np.array([1.0, 2.0]))
    assert loss == 0.0
    assert np.array_equal(g, np.zeros(2))


def test_l2_hand_value():
    loss, _ = l2_loss(np.array([1.0, 1.0]), np.array([0.0, 0.0]))
    assert loss == 1.0


def test_l2_shape_mismatch():
    with pytest.raises(ShapeError):
        l2_loss(np.zeros(3), np.zeros(4))


def test_l2_gradient_matches_fd():
    rng = np.random.default_rng(7)
    pred = rng.normal(size=(3, 4))
    target = rng.normal(size=(3, 4))

    def loss():
        return l2_loss(pred, target)[0]

    _, g = l2_loss(pred, target)
    assert rel_err(g, fd_grad(loss, pred)) < 1e-8


# --- adam -----------------------------------------------------------------------

def reference_adam(x0, grad_fn, lr, n, beta1=0.9, beta2=0.999, eps=1e-8):
    """Independent scripted Adam (textbook form with explicit hats)."""
    x, m, v = x0, 0.0, 0.0
    for t in range(1, n + 1):
        g = grad_fn(x)
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mh = m / (1 - beta1 ** t)
        vh = v / (1 - beta2 ** t)
        x = x - lr * mh / (np.sqrt(vh) + eps)
    return x


def test_adam_zero_gradient_no_update():
    p = Param("p", np.array([1.0, -2.0]))
    opt = Adam([p], lr=0.1)
    opt.step()
    assert np.array_equal(p.data, [1.0, -2.0])


def test_adam_first_step_magnitude():
    p = Param("p", np.array([0.0]))
    p.grad[:] = 0.5
    opt = Adam([p], lr=1e-3)
    opt.step()
    assert abs(p.data[0]) == pytest.approx(1e-3 * 0.5 / (0.5 + 1e-8), rel=1e-9)


def test_adam_quadratic_descent_matches_reference():
    p = Param("x", np.array([1.0]))
    opt = Adam([p], lr=0.1)
    for _ in range(50):
        p.zero_grad()
        p.grad[:] = 2.0 * p.data      # d/dx x^2
        opt.step()
    ref = reference_adam(1.0, lambda x: 2.0 * x, lr=0.1, n=50)
    assert p.data[0] == pytest.approx(ref, abs=1e-12)
    assert abs(p.data[0]) < 0.5


def test_adam_nan_gradient_faults():
    p = Param("p", np.array([1.0]))
    p.grad[:] = np.nan
    opt = Adam([p], lr=0.1)
    with pytest.raises(NumericFault, match="p"):
        opt.step()


# --- checkpoints ------------------------------------------------------------------

def test_checkpoint_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(8)
    params = {"a/W": rng.normal(size=(3, 4)), "a/b": rng.normal(size=4),
              "c": rng.normal(size=(2, 2, 5))}
    path = tmp_path / "w.ckpt"
    save_checkpoint(path, params, meta={"stage": 1})
    loaded, meta = load_checkpoint(path)
    assert meta == {"stage": 1}
    assert set(loaded) == set(params)
    for k in params:
        assert np.array_equal(loaded[k], params[k])
        assert loaded[k].dtype == np.float64


def test_checkpoint_checksum_detects_corruption(tmp_path):
    path = tmp_path / "w.ckpt"
    save_checkpoint(path, {"x": np.arange(4.0)})
    blob = bytearray(path.read_bytes())
    blob[-1] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError, match="checksum"):
        load_checkpoint(path)


def test_checkpoint_not_a_checkpoint(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"garbage")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_load_state_shape_mismatch():
    d = Dense(3, 2, np.random.default_rng(0), "d")
    with pytest.raises(CheckpointError, match="shape mismatch"):
        load_state(d.params(), {"d/W": np.zeros((2, 2)), "d/b": np.zeros(2)})
    with pytest.raises(CheckpointError, match="missing"):
        load_state(d.params(), {"d/W": np.zeros((3, 2))})


def test_state_dict_roundtrip_through_file(tmp_path):
    rng = np.random.default_rng(9)
    d = Dense(6, 3, rng, "enc")
    path = tmp_path / "enc.ckpt"
    save_checkpoint(path, state_dict(d.params()))
    loaded, _ = load_checkpoint(path)
    d2 = Dense(6, 3, np.random.default_rng(1), "enc")
    load_state(d2.params(), loaded)
    assert np.array_equal(d2.W.data, d.W.data)
    assert np.array_equal(d2.b.data, d.b.data)


# --- relu ------------------------------------------------------------------------

def test_relu_gradient():
    r = ReLU()
    x = np.array([[-1.0, 0.0, 2.0]])
    y = r.forward(x)
    assert np.array_equal(y, [[0.0, 0.0, 2.0]])
    g = r.backward(np.ones((1, 3)))
    assert np.array_equal(g, [[0.0, 0.0, 1.0]])


def test_linear_no_bias_gradient():
    rng = np.random.default_rng(10)
    lin = Linear(5, 3, rng, "att")
    x = rng.normal(size=(2, 5))
    R = rng.normal(size=(2, 3))

    def loss():
        return float((lin.forward(x.copy()) * R).sum())

    loss()
    gx = lin.backward(R)
    assert rel_err(lin.W.grad, fd_grad(loss, lin.W.data)) < 1e-6
    assert rel_err(gx, fd_grad(loss, x)) < 1e-6
