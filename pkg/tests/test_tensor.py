import numpy as np
import pytest

from fdris.nn.tensor import Tensor

FD_STEP = 1e-4
FD_TOL = 1e-4


def numeric_grad(fn, x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central finite differences of a scalar-valued fn with respect to x."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + step
        plus = fn()
        x[idx] = orig - step
        minus = fn()
        x[idx] = orig
        grad[idx] = (plus - minus) / (2.0 * step)
    return grad


def assert_grad_close(analytic: np.ndarray, numeric: np.ndarray, tol: float = FD_TOL):
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    check = scale > 1e-6
    rel = np.abs(analytic - numeric)[check] / scale[check]
    assert check.any(), "degenerate all-tiny gradient comparison"
    assert rel.max() < tol, f"max relative error {rel.max():.3e}"


def check_op(build, *arrays):
    """FD-check the scalar build(*tensors) against backward for every input."""
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    out = build(*tensors)
    out.backward()
    for t, a in zip(tensors, arrays):
        assert t.grad is not None and t.grad.shape == a.shape
        numeric = numeric_grad(lambda: build(*[Tensor(x.data) for x in tensors]).data.item(), a)
        assert_grad_close(t.grad, numeric)


def test_add_mul_sub_div_gradients():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((3, 4))
    b = rng.standard_normal((3, 4)) + 3.0  # keep divisors away from zero
    check_op(lambda x, y: (x + y).sum(), a, b)
    check_op(lambda x, y: (x * y).sum(), a, b)
    check_op(lambda x, y: (x - y).square().sum(), a, b)
    check_op(lambda x, y: (x / y).sum(), a, b)


def test_broadcast_gradients_reduce_correctly():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((5, 3))
    bias = rng.standard_normal(3)
    row = rng.standard_normal((5, 1))
    check_op(lambda a, b: ((a + b) * (a + b)).sum(), x, bias)
    check_op(lambda a, b: (a * b).sum(), x, row)
    check_op(lambda a, b: (a / (b * b + 1.0)).sum(), x, bias)


def test_matmul_gradients_2d_and_batched():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((4, 3))
    w = rng.standard_normal((3, 5))
    check_op(lambda x, y: (x @ y).sum(), a, w)
    batched = rng.standard_normal((6, 4, 3))
    check_op(lambda x, y: (x @ y).square().sum(), batched, w)
    pair = rng.standard_normal((6, 5, 4))
    check_op(lambda x, y: (x @ y).sum(), pair, batched)


def test_matmul_requires_2d():
    with pytest.raises(ValueError):
        Tensor(np.ones(3)) @ Tensor(np.ones((3, 2)))


def test_nonlinearity_gradients():
    rng = np.random.default_rng(3)
    # keep points away from the relu kink so central differences are valid
    x = rng.standard_normal((4, 4)) + np.sign(rng.standard_normal((4, 4))) * 0.05
    check_op(lambda t: t.relu().sum(), x)
    check_op(lambda t: t.sigmoid().sum(), x)
    check_op(lambda t: (t * 0.1).exp().sum(), x)


def test_sigmoid_is_overflow_safe():
    t = Tensor(np.array([-1e4, -50.0, 0.0, 50.0, 1e4]))
    out = t.sigmoid().data
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out[[0, 2, 4]], [0.0, 0.5, 1.0], atol=1e-12)


def test_reduction_and_shape_op_gradients():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((3, 4, 2))
    check_op(lambda t: t.sum(axis=1).square().sum(), x)
    check_op(lambda t: t.sum(axis=-1, keepdims=True).square().sum(), x)
    check_op(lambda t: t.mean().square(), x)
    check_op(lambda t: t.reshape((3, 8)).square().sum(), x)
    check_op(lambda t: t.swapaxes(-1, -2).square().sum(), x)
    check_op(lambda t: t[1:, :2].square().sum(), x)


def test_getitem_gradient_scatters_into_source_shape():
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    (x[0] * np.array([1.0, 2.0, 3.0])).sum().backward()
    np.testing.assert_array_equal(x.grad, [[1.0, 2.0, 3.0], [0.0, 0.0, 0.0]])


def test_value_reused_twice_accumulates_gradient():
    x = Tensor(np.array([[2.0, 3.0]]), requires_grad=True)
    y = (x * x).sum() + (x * 5.0).sum()
    y.backward()
    np.testing.assert_allclose(x.grad, [[2 * 2.0 + 5.0, 2 * 3.0 + 5.0]])


def test_constant_loss_has_zero_gradient():
    x = Tensor(np.ones((2, 3)), requires_grad=True)
    (x * np.zeros((2, 3))).sum().backward()
    np.testing.assert_array_equal(x.grad, np.zeros((2, 3)))


def test_dense_mse_matches_closed_form():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((7, 3))
    w = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    label = rng.standard_normal((7, 4))
    pred = Tensor(x) @ w
    ((pred - Tensor(label)).square().mean()).backward()
    residual = x @ w.data - label
    closed = 2.0 / residual.size * x.T @ residual
    np.testing.assert_allclose(w.grad, closed, rtol=1e-12)


def test_backward_requires_scalar_and_forward_record():
    with pytest.raises(RuntimeError):
        Tensor(np.ones(3), requires_grad=True).backward()
    with pytest.raises(RuntimeError):
        (Tensor(np.ones(3), requires_grad=True) * 2.0).backward()  # non-scalar


def test_gradient_shape_always_matches_tensor():
    rng = np.random.default_rng(6)
    shapes = [(2, 3), (3, 1), (1, 3), (4, 2, 3)]
    tensors = [Tensor(rng.standard_normal(s), requires_grad=True) for s in shapes]
    out = None
    for t in tensors:
        term = t.square().sum()
        out = term if out is None else out + term
    out.backward()
    for t in tensors:
        assert t.grad.shape == t.data.shape


def test_requires_grad_propagates_only_when_needed():
    a = Tensor(np.ones(2))
    b = Tensor(np.ones(2), requires_grad=True)
    assert not (a + a).requires_grad
    assert (a + b).requires_grad
    out = (a * b).sum()
    out.backward()
    assert a.grad is None and b.grad is not None
