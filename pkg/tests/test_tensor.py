import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frnn import tensor as T
from frnn.nn_ops import conv2d
from frnn.tensor import ShapeError, Tensor, grad_check, make_rng, no_grad


def t64(a, grad=False):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=grad)


def test_add_elementwise():
    assert np.array_equal(T.add(t64([1, 2]), t64([3, 4])).data, [4, 6])


def test_mul_by_zeros_is_zero():
    x = t64(make_rng(0).standard_normal(5))
    assert np.array_equal(T.mul(x, T.zeros_like(x)).data, np.zeros(5))


def test_sub_self_is_zero():
    x = t64(make_rng(1).standard_normal((2, 3)))
    assert np.array_equal((x - x).data, np.zeros((2, 3)))


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\[2\] vs \[3\]"):
        T.add(t64([1, 2]), t64([1, 2, 3]))


def test_unknown_op():
    with pytest.raises(ValueError):
        T.ew_binary(t64([1]), t64([1]), "div")


@pytest.mark.parametrize("kind,x,expected", [
    ("sigmoid", 0.0, 0.5),
    ("tanh", 0.0, 0.0),
    ("sigmoid", np.log(3.0), 0.75),
])
def test_activation_values(kind, x, expected):
    out = T.activation(t64([x]), kind)
    assert out.data[0] == pytest.approx(expected, abs=1e-15)


def test_sigmoid_extremes_finite():
    out = T.sigmoid(t64([-1000.0, 1000.0]))
    assert out.is_finite()
    assert out.data[0] == 0.0 and out.data[1] == 1.0


def test_backward_sum_is_ones():
    x = t64([1.0, -2.0, 3.0], grad=True)
    T.sum(x).backward()
    assert np.array_equal(x.grad, [1, 1, 1])


def test_backward_square():
    x = t64([2.0], grad=True)
    T.sum(x * x).backward()
    assert np.array_equal(x.grad, [4.0])


def test_multiply_used_tensor_accumulates():
    x = t64([3.0], grad=True)
    y = x * x + x  # d/dx = 2x + 1
    T.sum(y).backward()
    assert x.grad[0] == 7.0


def test_backward_needs_scalar_root():
    x = t64([1.0, 2.0], grad=True)
    with pytest.raises(ShapeError):
        (x * x).backward()


def test_no_grad_records_nothing():
    x = t64([1.0], grad=True)
    with no_grad():
        y = T.tanh(x)
    assert not y.requires_grad and y._backward is None


def test_tape_reverse_recording_order():
    x = t64([0.3, -0.2], grad=True)
    a = T.tanh(x)
    b = T.sigmoid(a)
    c = a * b
    root = T.sum(c)
    order = [n._index for n in T._tape_for(root)]
    assert order == sorted(order, reverse=True)
    assert [id(n) for n in T._tape_for(root)] == [id(root), id(c), id(b), id(a)]


def test_backward_replay_is_bit_identical():
    rng = make_rng(3)
    x = t64(rng.standard_normal((3, 4)), grad=True)
    root = T.sum(T.tanh(x) * T.sigmoid(x * x))
    root.backward()
    first = x.grad.copy()
    x.grad = None
    root.backward()
    assert np.array_equal(first, x.grad)


def test_grad_check_sigmoid():
    x = t64(make_rng(4).standard_normal((3, 4)))
    assert grad_check(lambda v: T.sum(T.sigmoid(v)), x) <= 1e-6


def test_grad_check_linear_exact():
    x = t64(make_rng(5).standard_normal(6))
    assert grad_check(lambda v: T.sum(v), x) <= 1e-9


def test_grad_check_conv_composition():
    rng = make_rng(6)
    x = t64(rng.standard_normal((1, 2, 5, 5)))
    k = t64(rng.standard_normal((3, 2, 3, 3)))
    assert grad_check(lambda v: T.sum(T.tanh(conv2d(v, k))), x) <= 1e-5


def test_grad_check_rejects_non_scalar():
    with pytest.raises(ShapeError):
        grad_check(lambda v: v * v, t64([1.0, 2.0]))


@pytest.mark.parametrize("op", [
    lambda a, b: T.sum(T.tanh(a - b) * a),
    lambda a, b: T.mean(T.absolute(a * b + a)),
    lambda a, b: T.sum(T.square(T.concat([a, b], axis=0))),
    lambda a, b: T.sum(T.split(T.concat([a, b], axis=1), (2, 3, 3), axis=1)[1]
                       * T.tanh(T.split(T.concat([b, a], axis=1), (2, 3, 3), axis=1)[1])),
    lambda a, b: T.sum(T.stack([a, b], axis=1) * T.stack([b, a], axis=1)),
    lambda a, b: T.sum(T.reshape(a, (4, 3)) * T.reshape(T.scale(b, -1.5), (4, 3))),
])
def test_grad_check_elementwise_family(op):
    rng = make_rng(7)
    a = t64(rng.standard_normal((3, 4)) + 0.1)
    b = t64(rng.standard_normal((3, 4)))
    assert grad_check(lambda: op(a, b), [a, b]) <= 1e-5


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(-1000, 1000), min_size=1, max_size=8), st.integers(0, 2 ** 32))
def test_add_mul_commute_sub_antisymmetric(vals, seed):
    a = t64(vals)
    b = t64(make_rng(seed).integers(-1000, 1000, len(vals)))
    assert np.array_equal((a + b).data, (b + a).data)
    assert np.array_equal((a * b).data, (b * a).data)
    assert np.array_equal((a - b).data, -(b - a).data)


def test_rng_determinism():
    assert np.array_equal(make_rng(9).standard_normal(4), make_rng(9).standard_normal(4))
    assert not np.array_equal(make_rng(9).standard_normal(4), make_rng(10).standard_normal(4))


def test_float32_default_and_finite_check():
    x = Tensor([1.0, np.inf])
    assert x.dtype == np.float32
    assert not x.is_finite()
