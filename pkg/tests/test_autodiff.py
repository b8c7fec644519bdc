import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dlarch import autodiff as ad
from dlarch import kernels
from dlarch.errors import GraphError, ShapeError, ValidationError
from oracles import central_diff, naive_conv2d, rel_error

F64 = np.float64


def leaf(a, dtype=F64):
    return ad.Tensor(np.asarray(a, dtype=dtype), requires_grad=True)


def grad_check(build, arrays, h=1e-4):
    """Analytic vs central-difference gradients of scalar ``build(*tensors)``; returns max rel error."""
    ts = [leaf(a) for a in arrays]
    ad.backward(build(*ts), params=ts)
    analytic = [t.grad for t in ts]

    def f():
        with ad.no_grad():
            return build(*[ad.Tensor(a, dtype=F64) for a in arrays]).data

    numeric = central_diff(f, arrays, h)
    return max(rel_error(a, n) for a, n in zip(analytic, numeric))


def weighted_sum(y, rng_seed=0):
    """Scalar readout sum(y * r) with fixed random r so every output entry matters."""
    r = np.random.default_rng(rng_seed).standard_normal(y.shape)
    return ad.tensor_sum(ad.mul(y, ad.Tensor(r, dtype=y.dtype)))


# -- elementwise ---------------------------------------------------------------


def test_add_and_mul_values():
    a = ad.Tensor([1.0, 2.0])
    b = ad.Tensor([3.0, 4.0])
    np.testing.assert_array_equal(ad.add(a, b).data, [4.0, 6.0])
    np.testing.assert_array_equal(ad.mul(a, b).data, [3.0, 8.0])
    np.testing.assert_array_equal(ad.relu(ad.Tensor([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2,\).*\(3,\)"):
        ad.add(ad.Tensor([1.0, 2.0]), ad.Tensor([1.0, 2.0, 3.0]))


def test_mixed_dtypes_rejected():
    with pytest.raises(ValidationError):
        ad.add(ad.Tensor([1.0], dtype=np.float32), ad.Tensor([1.0], dtype=F64))


def test_mul_by_zero_gives_zero_grad():
    x = leaf([1.0, -2.0, 3.0])
    ad.backward(ad.tensor_sum(ad.mul(x, ad.Tensor(np.zeros(3)))))
    np.testing.assert_array_equal(x.grad, np.zeros(3))


def test_relu_grad_at_zero_is_zero():
    x = leaf([-1.0, 0.0, 1.0])
    ad.backward(ad.tensor_sum(ad.relu(x)))
    np.testing.assert_array_equal(x.grad, [0.0, 0.0, 1.0])


def test_elementwise_dispatch():
    a, b = ad.Tensor([2.0]), ad.Tensor([5.0])
    assert ad.elementwise("add", a, b).data[0] == 7.0
    assert ad.elementwise("mul", a, b).data[0] == 10.0
    with pytest.raises(ValidationError):
        ad.elementwise("pow", a, b)


def test_sum_of_squares_grad():
    w = leaf([1.0, 2.0])
    ad.backward(ad.tensor_sum(ad.mul(w, w)))
    np.testing.assert_array_equal(w.grad, [2.0, 4.0])


# -- matmul ------------------------------------------------------------------


def test_matmul_values():
    a = ad.Tensor([[1.0, 2.0], [3.0, 4.0]])
    b = ad.Tensor([[5.0, 6.0], [7.0, 8.0]])
    np.testing.assert_array_equal(ad.matmul(a, b).data, [[19.0, 22.0], [43.0, 50.0]])


def test_matmul_inner_mismatch():
    with pytest.raises(ShapeError):
        ad.matmul(ad.Tensor(np.ones((2, 3))), ad.Tensor(np.ones((2, 3))))


def test_matmul_grad_float32_matches_fd_loosely(rng):
    a = rng.standard_normal((3, 4)).astype(np.float32)
    b = rng.standard_normal((4, 2)).astype(np.float32)
    ta, tb = leaf(a, np.float32), leaf(b, np.float32)
    ad.backward(ad.tensor_sum(ad.matmul(ta, tb)))
    a64, b64 = a.astype(F64), b.astype(F64)
    num = central_diff(lambda: (a64 @ b64).sum(), [a64, b64], h=1e-3)
    assert rel_error(ta.grad, num[0]) <= 1e-3
    assert rel_error(tb.grad, num[1]) <= 1e-3


# -- conv2d ------------------------------------------------------------------


def test_conv_identity_kernel():
    x = np.arange(9.0).reshape(1, 3, 3)
    w = np.zeros((1, 1, 3, 3))
    w[0, 0, 1, 1] = 1.0
    y = ad.conv2d(ad.Tensor(x), ad.Tensor(w), padding=1)
    np.testing.assert_array_equal(y.data, x)


def test_conv_ones_kernel_sums_window():
    x = np.arange(16.0).reshape(1, 4, 4)
    y = ad.conv2d(ad.Tensor(x), ad.Tensor(np.ones((1, 1, 2, 2))), stride=2)
    np.testing.assert_array_equal(y.data, [[[10.0, 18.0], [42.0, 50.0]]])


def test_conv_kernel_too_large():
    with pytest.raises(ShapeError, match="larger"):
        ad.conv2d(ad.Tensor(np.ones((1, 2, 2))), ad.Tensor(np.ones((1, 1, 3, 3))))


def test_conv_channel_mismatch():
    with pytest.raises(ShapeError, match="channels"):
        ad.conv2d(ad.Tensor(np.ones((2, 4, 4))), ad.Tensor(np.ones((1, 3, 3, 3))))


@pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1), (2, 0), (3, 2)])
def test_conv_matches_naive_loop_exactly_float32(rng, stride, padding):
    x = rng.standard_normal((3, 7, 6)).astype(np.float32)
    w = rng.standard_normal((4, 3, 3, 3)).astype(np.float32)
    b = rng.standard_normal(4).astype(np.float32)
    y = ad.conv2d(ad.Tensor(x), ad.Tensor(w), ad.Tensor(b), stride=stride, padding=padding)
    np.testing.assert_array_equal(y.data, naive_conv2d(x, w, b, stride, padding))


def test_conv_batched_equals_per_sample(rng):
    x = rng.standard_normal((3, 2, 5, 5)).astype(np.float32)
    w = rng.standard_normal((3, 2, 3, 3)).astype(np.float32)
    yb = ad.conv2d(ad.Tensor(x), ad.Tensor(w), padding=1).data
    for i in range(3):
        np.testing.assert_array_equal(yb[i], ad.conv2d(ad.Tensor(x[i]), ad.Tensor(w), padding=1).data)


# -- pooling, softmax ----------------------------------------------------------


def test_global_avg_pool_values():
    x = np.arange(8.0).reshape(2, 2, 2)
    np.testing.assert_array_equal(ad.global_avg_pool(ad.Tensor(x)).data, [1.5, 5.5])


def test_softmax_ce_uniform_is_log_d():
    loss = ad.softmax_cross_entropy(ad.Tensor(np.zeros(5), dtype=F64), 2)
    assert loss.data == pytest.approx(np.log(5), abs=1e-12)


def test_softmax_ce_large_logits_no_overflow():
    loss = ad.softmax_cross_entropy(ad.Tensor([1000.0, 0.0]), 0)
    assert np.isfinite(loss.data) and float(loss.data) == pytest.approx(0.0, abs=1e-12)
    loss = ad.softmax_cross_entropy(ad.Tensor([1000.0, 0.0]), 1)
    assert float(loss.data) == pytest.approx(1000.0)


def test_softmax_ce_bad_label():
    with pytest.raises(ValidationError):
        ad.softmax_cross_entropy(ad.Tensor([1.0, 2.0]), 2)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=8))
def test_softmax_sums_to_one(values):
    p = ad.softmax(np.array(values))
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    assert (p >= 0).all()


# -- finite-difference gradient checks (64-bit, step 1e-4) ----------------------

TOL = 1e-5


def test_fd_add_mul_relu(rng):
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((3, 4))
    a[np.abs(a) < 0.05] = 0.3  # keep relu away from its kink
    assert grad_check(lambda x, y: weighted_sum(ad.add(x, y)), [a, b]) <= TOL
    assert grad_check(lambda x, y: weighted_sum(ad.mul(x, y)), [a, b]) <= TOL
    assert grad_check(lambda x: weighted_sum(ad.relu(x)), [a]) <= TOL


def test_fd_matmul_add_bias(rng):
    a, b, c = rng.standard_normal((3, 4)), rng.standard_normal((4, 2)), rng.standard_normal(2)
    assert grad_check(lambda x, y, z: weighted_sum(ad.add_bias(ad.matmul(x, y), z)), [a, b, c]) <= TOL


@pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1)])
def test_fd_conv2d(rng, stride, padding):
    x = rng.standard_normal((2, 2, 5, 5))
    w = rng.standard_normal((3, 2, 3, 3))
    b = rng.standard_normal(3)
    err = grad_check(
        lambda xx, ww, bb: weighted_sum(ad.conv2d(xx, ww, bb, stride=stride, padding=padding)), [x, w, b]
    )
    assert err <= TOL


def test_fd_global_avg_pool(rng):
    assert grad_check(lambda x: weighted_sum(ad.global_avg_pool(x)), [rng.standard_normal((2, 3, 4, 4))]) <= TOL


def test_fd_softmax_cross_entropy(rng):
    z = rng.standard_normal((4, 5))
    assert grad_check(lambda t: ad.softmax_cross_entropy(t, [0, 3, 1, 4]), [z]) <= TOL
    assert grad_check(lambda t: ad.softmax_cross_entropy(t, 2), [z[0].copy()]) <= TOL


def test_fd_pick(rng):
    z = rng.standard_normal((2, 3))
    assert grad_check(lambda t: ad.pick(t, (1, 2)), [z]) <= TOL


@settings(max_examples=15, deadline=None)
@given(
    st.integers(1, 3), st.integers(1, 3), st.integers(3, 6), st.integers(1, 2),
    st.integers(0, 1), st.integers(0, 2**32 - 1),
)
def test_fd_conv2d_random_shapes(c_in, c_out, size, stride, padding, seed):
    r = np.random.default_rng(seed)
    x = r.standard_normal((1, c_in, size, size))
    w = r.standard_normal((c_out, c_in, 3, 3))
    assert grad_check(lambda xx, ww: weighted_sum(ad.conv2d(xx, ww, stride=stride, padding=padding)), [x, w]) <= TOL


# -- backward mechanics ----------------------------------------------------------


def test_unreachable_param_gets_zero_grad():
    w = leaf([1.0, 2.0])
    u = leaf([5.0])
    ad.backward(ad.tensor_sum(ad.mul(w, w)), params=[w, u])
    np.testing.assert_array_equal(u.grad, [0.0])


def test_backward_rejects_non_scalar():
    with pytest.raises(GraphError, match="scalar"):
        ad.backward(ad.mul(leaf([1.0, 2.0]), 2.0))


def test_backward_twice_rejected():
    w = leaf([1.0])
    loss = ad.tensor_sum(ad.mul(w, w))
    ad.backward(loss)
    w.grad = None
    with pytest.raises(GraphError):
        ad.backward(loss)


def test_backward_requires_cleared_grads():
    w = leaf([1.0])
    ad.backward(ad.tensor_sum(ad.mul(w, w)))
    with pytest.raises(GraphError):
        ad.backward(ad.tensor_sum(ad.mul(w, w)))
    w.zero_grad()
    ad.backward(ad.tensor_sum(ad.mul(w, w)))
    np.testing.assert_array_equal(w.grad, [2.0])


def test_no_grad_builds_no_graph():
    w = leaf([1.0])
    with ad.no_grad():
        y = ad.tensor_sum(ad.mul(w, w))
    with pytest.raises(GraphError):
        ad.backward(y)


def test_backward_deterministic(rng):
    x = rng.standard_normal((2, 2, 6, 6)).astype(np.float32)
    w = rng.standard_normal((3, 2, 3, 3)).astype(np.float32)
    grads = []
    for _ in range(2):
        tw = leaf(w, np.float32)
        ad.backward(weighted_sum(ad.relu(ad.conv2d(ad.Tensor(x), tw, padding=1))))
        grads.append(tw.grad)
    np.testing.assert_array_equal(grads[0], grads[1])


def test_conv_grads_independent_of_thread_count(rng):
    from dlarch._accel import set_num_threads

    x = rng.standard_normal((7, 2, 6, 6)).astype(np.float32)
    w = rng.standard_normal((3, 2, 3, 3)).astype(np.float32)
    out = []
    for threads in (1, 4):
        set_num_threads(threads)
        try:
            tx, tw = leaf(x, np.float32), leaf(w, np.float32)
            ad.backward(weighted_sum(ad.conv2d(tx, tw, stride=2, padding=1)))
            out.append((tx.grad, tw.grad))
        finally:
            set_num_threads(1)
    np.testing.assert_array_equal(out[0][0], out[1][0])
    np.testing.assert_array_equal(out[0][1], out[1][1])


# -- SGD -------------------------------------------------------------------------


def test_sgd_single_step():
    p = leaf([1.0])
    p.grad = np.array([0.5])
    ad.SGD([p], lr=0.1, momentum=0.0).step()
    assert p.data[0] == pytest.approx(0.95)


def test_sgd_zero_grad_leaves_param():
    p = leaf([1.0])
    p.grad = np.array([0.0])
    ad.SGD([p], lr=0.1, momentum=0.9).step()
    assert p.data[0] == 1.0


def test_sgd_momentum_recurrence():
    p = leaf([1.0])
    opt = ad.SGD([p], lr=0.1, momentum=0.9)
    for _ in range(2):
        p.grad = np.array([0.5])
        opt.step()
    # v1 = 0.5, p1 = 0.95; v2 = 0.9*0.5 + 0.5 = 0.95, p2 = 0.95 - 0.095
    assert p.data[0] == pytest.approx(0.855, abs=1e-15)


def test_sgd_missing_grad():
    p = leaf([1.0])
    with pytest.raises(GraphError, match="missing"):
        ad.SGD([p], lr=0.1).step()


def test_kernels_backend_flag_is_known():
    assert kernels.BACKEND in ("numba", "numpy")
