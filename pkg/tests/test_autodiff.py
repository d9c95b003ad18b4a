import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import seld6dof.autodiff as ad
from seld6dof.autodiff import Tensor
from seld6dof.errors import ContractError, DimensionError
from conftest import central_diff, rel_err


def test_matmul_identity():
    a = Tensor(np.eye(2))
    b = Tensor([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal(ad.matmul(a, b).data, [[1, 2], [3, 4]])


def test_matmul_projector():
    p = Tensor([[1.0, 0.0], [0.0, 0.0]])
    m = Tensor([[5.0, 6.0], [7.0, 8.0]])
    np.testing.assert_array_equal(ad.matmul(p, m).data, [[5, 6], [0, 0]])


def test_matmul_shape_error_names_shapes():
    with pytest.raises(DimensionError) as e:
        ad.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 2))))
    assert "(2, 3)" in str(e.value) and "(4, 2)" in str(e.value)


def test_matmul_gradient_vs_finite_difference(rng):
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(4, 2))

    ta, tb = Tensor(a, requires_grad=True), Tensor(b, requires_grad=True)
    ad.backward(ad.matmul(ta, tb).sum())

    def loss():
        return float((a @ b).sum())

    assert rel_err(ta.grad, central_diff(loss, a)) < 1e-6
    assert rel_err(tb.grad, central_diff(loss, b)) < 1e-6


def test_sigmoid_zero_exact():
    assert ad.sigmoid(Tensor(0.0)).data == 0.5


def test_tanh_zero_grad_ones():
    x = Tensor(np.zeros((3, 2)), requires_grad=True)
    y = ad.tanh(x)
    np.testing.assert_array_equal(y.data, np.zeros((3, 2)))
    ad.backward(y.sum())
    np.testing.assert_array_equal(x.grad, np.ones((3, 2)))


def test_mul_gradient_vs_finite_difference(rng):
    a = rng.normal(size=(2, 3))
    b = rng.normal(size=(2, 3))
    ta, tb = Tensor(a, requires_grad=True), Tensor(b, requires_grad=True)
    ad.backward(ad.mul(ta, tb).sum())

    def loss():
        return float((a * b).sum())

    assert rel_err(ta.grad, central_diff(loss, a)) < 1e-6
    assert rel_err(tb.grad, central_diff(loss, b)) < 1e-6


def test_broadcast_mul_and_add(rng):
    a = rng.normal(size=(4, 3, 5))
    b = rng.normal(size=(3, 1))  # trailing-dim broadcast with a size-1 axis
    ta, tb = Tensor(a, requires_grad=True), Tensor(b, requires_grad=True)
    ad.backward((ta * tb + tb).sum())

    def loss():
        return float((a * b + b).sum())

    assert rel_err(tb.grad, central_diff(loss, b)) < 1e-6
    assert rel_err(ta.grad, central_diff(loss, a)) < 1e-6


def test_non_broadcastable_raises():
    with pytest.raises(DimensionError):
        ad.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 4))))


def test_backward_sum_gives_ones(rng):
    x = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
    ad.backward(x.sum())
    np.testing.assert_array_equal(x.grad, np.ones((2, 3, 4)))


def test_backward_half_square_gives_x(rng):
    xv = rng.normal(size=(5, 2))
    x = Tensor(xv, requires_grad=True)
    ad.backward(ad.scale((x * x).sum(), 0.5))
    np.testing.assert_allclose(x.grad, xv, rtol=1e-12)


def test_backward_requires_scalar():
    x = Tensor(np.zeros((2, 2)), requires_grad=True)
    with pytest.raises(ContractError):
        ad.backward(x * x)


def test_backward_accumulates_without_reset(rng):
    x = Tensor(rng.normal(size=(3,)), requires_grad=True)
    loss = x.sum()
    ad.backward(loss)
    g1 = x.grad.copy()
    ad.backward(loss)
    np.testing.assert_allclose(x.grad, 2 * g1)


def test_diamond_graph_visits_once(rng):
    # y = a*a used twice downstream: gradient must be summed, not doubled by revisits
    xv = rng.normal(size=(3,))
    x = Tensor(xv, requires_grad=True)
    y = x * x
    z = (y + y).sum()
    ad.backward(z)
    np.testing.assert_allclose(x.grad, 4 * xv, rtol=1e-12)


def test_slice_concat_reshape_transpose_grads(rng):
    a = rng.normal(size=(4, 6))

    def build(t):
        left, right = t[:, :3], t[:, 3:]
        stacked = ad.concat([left, ad.tanh(right)], axis=1)
        return ad.transpose(ad.reshape(stacked, (2, 12)), (1, 0)).sum()

    ta = Tensor(a, requires_grad=True)
    ad.backward(build(ta))

    def loss():
        return float(build(Tensor(a)).data)

    assert rel_err(ta.grad, central_diff(loss, a)) < 1e-6


def test_maxpool_grads(rng):
    x = rng.normal(size=(8, 3, 8))
    w = rng.normal(size=(2, 3, 8))

    def build(t):
        return (ad.maxpool2d(t, 4, 2) * Tensor(w[:, :, :4])).sum()

    tx = Tensor(x, requires_grad=True)
    ad.backward(build(tx))

    def loss():
        return float(build(Tensor(x)).data)

    assert rel_err(tx.grad, central_diff(loss, x)) < 1e-6


def test_batchnorm_train_grads(rng):
    x = rng.normal(size=(6, 3, 4))
    gamma = rng.normal(size=3) + 1.5
    beta = rng.normal(size=3)
    proj = rng.normal(size=(6, 3, 4))

    def build(tx, tg, tb):
        y, _, _ = ad.batchnorm_train(tx, tg, tb)
        return (y * Tensor(proj)).sum()

    tx = Tensor(x, requires_grad=True)
    tg = Tensor(gamma, requires_grad=True)
    tb = Tensor(beta, requires_grad=True)
    ad.backward(build(tx, tg, tb))

    def loss():
        return float(build(Tensor(x), Tensor(gamma), Tensor(beta)).data)

    assert rel_err(tx.grad, central_diff(loss, x)) < 1e-5
    assert rel_err(tg.grad, central_diff(loss, gamma)) < 1e-6
    assert rel_err(tb.grad, central_diff(loss, beta)) < 1e-6


def test_batchnorm_eval_grads(rng):
    x = rng.normal(size=(5, 2))
    gamma = rng.normal(size=2) + 1.0
    beta = rng.normal(size=2)
    mean = rng.normal(size=2)
    var = rng.uniform(0.5, 2.0, size=2)
    proj = rng.normal(size=(5, 2))

    def build(tx):
        y = ad.batchnorm_eval(tx, Tensor(gamma), Tensor(beta), mean, var)
        return (y * Tensor(proj)).sum()

    tx = Tensor(x, requires_grad=True)
    ad.backward(build(tx))

    def loss():
        return float(build(Tensor(x)).data)

    assert rel_err(tx.grad, central_diff(loss, x)) < 1e-6


def test_conv_ops_through_graph(rng):
    x = rng.normal(size=(6, 2, 8))
    w = rng.normal(size=(3, 2, 3, 3))
    b = rng.normal(size=3)

    def build(tx, tw, tb):
        return ad.relu(ad.conv2d(tx, tw, tb, 2, 1)).sum()

    tx = Tensor(x, requires_grad=True)
    tw = Tensor(w, requires_grad=True)
    tb = Tensor(b, requires_grad=True)
    ad.backward(build(tx, tw, tb))

    def loss():
        return float(build(Tensor(x), Tensor(w), Tensor(b)).data)

    assert rel_err(tx.grad, central_diff(loss, x)) < 1e-4
    assert rel_err(tw.grad, central_diff(loss, w)) < 1e-4
    assert rel_err(tb.grad, central_diff(loss, b)) < 1e-4


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), rows=st.integers(1, 6), inner=st.integers(1, 6),
       cols=st.integers(1, 6))
def test_gradient_check_property_random_composition(seed, rows, inner, cols):
    # composition of supported ops on small tensors: analytic grad vs central FD
    r = np.random.default_rng(seed)
    a = r.normal(size=(rows, inner))
    b = r.normal(size=(inner, cols))
    c = r.normal(size=(rows, cols))

    def build(ta, tb, tc):
        h = ad.tanh(ad.matmul(ta, tb))
        g = ad.sigmoid(h * tc + tc)
        return (ad.relu(g - 0.3) * g).mean()

    ta = Tensor(a, requires_grad=True)
    tb = Tensor(b, requires_grad=True)
    tc = Tensor(c, requires_grad=True)
    ad.backward(build(ta, tb, tc))

    def loss():
        return float(build(Tensor(a), Tensor(b), Tensor(c)).data)

    assert rel_err(ta.grad, central_diff(loss, a)) < 1e-4
    assert rel_err(tb.grad, central_diff(loss, b)) < 1e-4
    assert rel_err(tc.grad, central_diff(loss, c)) < 1e-4


def test_determinism_same_seed_bit_identical():
    def run():
        r = np.random.default_rng(77)
        x = Tensor(r.normal(size=(4, 4)), requires_grad=True)
        w = Tensor(r.normal(size=(4, 4)), requires_grad=True)
        loss = ad.tanh(ad.matmul(x, w)).sum()
        ad.backward(loss)
        return loss.data.copy(), x.grad.copy(), w.grad.copy()

    l1, g1, h1 = run()
    l2, g2, h2 = run()
    assert np.array_equal(l1, l2) and np.array_equal(g1, g2) and np.array_equal(h1, h2)


def test_adam_first_step_size_is_lr(rng):
    p = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    before = p.data.copy()
    opt = ad.Adam([p], lr=0.01)
    p.grad = np.array([0.3, -5.0, 1e-4])
    opt.step()
    # bias-corrected first step is ~lr * sign(grad) irrespective of magnitude
    np.testing.assert_allclose(before - p.data, 0.01 * np.sign(p.grad), rtol=1e-3)


def test_adam_descends_quadratic(rng):
    p = Tensor(rng.normal(size=(8,)) * 3, requires_grad=True)
    opt = ad.Adam([p], lr=0.05)
    losses = []
    for _ in range(400):
        opt.zero_grad()
        loss = ad.scale((p * p).sum(), 0.5)
        ad.backward(loss)
        opt.step()
        losses.append(float(loss.data))
    assert losses[-1] < 1e-3 * losses[0]


def test_checkpoint_roundtrip(tmp_path, rng):
    params = {
        "audio.block0.conv.w": rng.normal(size=(4, 3, 3, 3)),
        "gru.l0.w_ih": rng.normal(size=(16, 48)),
        "head.bias": rng.normal(size=(9,)),
        "scalarish": np.array(3.25),
    }
    path = tmp_path / "model.s6df"
    ad.save_checkpoint(path, params)
    loaded = ad.load_checkpoint(path)
    assert set(loaded) == set(params)
    for k in params:
        np.testing.assert_array_equal(loaded[k], params[k])
    # header is the documented magic
    assert path.read_bytes()[:4] == b"S6DF"


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ContractError):
        ad.load_checkpoint(path)
