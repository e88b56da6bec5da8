"""Tensor core: op semantics, reverse-mode gradients, serialization."""

import io as stdio
import math
import random

import numpy as np
import pytest

from svlab import tensor as T
from svlab.errors import NumericError, ShapeError
from svlab.tensor import Tensor, grad_check, read_tensor, write_tensor


def _rand(shape, seed, scale=1.0, requires_grad=True):
    rng = random.Random(seed)
    n = 1
    for s in shape:
        n *= s
    return Tensor(shape, [rng.uniform(-scale, scale) for _ in range(n)], requires_grad=requires_grad)


def test_matmul_forward_oracle():
    a = _rand((3, 4), 0)
    b = _rand((4, 2), 1)
    got = np.array(T.matmul(a, b).data).reshape(3, 2)
    want = np.array(a.data).reshape(3, 4) @ np.array(b.data).reshape(4, 2)
    np.testing.assert_allclose(got, want, rtol=1e-13)


def test_matmul_shape_error():
    with pytest.raises(ShapeError):
        T.matmul(_rand((3, 4), 0), _rand((3, 2), 1))


def test_backward_accumulates_through_shared_node():
    x = _rand((2, 2), 2)
    y = T.add(T.mul(x, x), T.scale(x, 3.0))  # x^2 + 3x -> d/dx = 2x + 3
    T.sum_all(y).backward()
    for i in range(4):
        assert math.isclose(x.grad[i], 2 * x.data[i] + 3, rel_tol=1e-12)


@pytest.mark.parametrize(
    "op",
    [
        lambda x: T.tanh(x),
        lambda x: T.exp(T.scale(x, 0.5)),
        lambda x: T.log(T.clamp_min(T.exp(x), 0.5)),
        lambda x: T.sqrt(T.clamp_min(T.exp(x), 0.5)),
        lambda x: T.softmax(x, axis=1),
        lambda x: T.softmax(x, axis=0),
        lambda x: T.log_softmax_rows(x),
        lambda x: T.layer_norm_rows(x),
        lambda x: T.l2_normalize_rows(x),
        lambda x: T.transpose(x),
        lambda x: T.reshape(x, (2, 6)),
    ],
)
def test_unary_op_gradients(op):
    x = _rand((3, 4), 5)
    w = _rand(op(x).shape, 7, requires_grad=False)

    def f():
        return T.sum_all(T.mul(op(x), w))

    assert grad_check(f, [x]) < 1e-6


def test_binary_and_stack_gradients():
    a = _rand((3, 3), 8)
    b = _rand((3, 3), 9)
    w = _rand((3,), 10)
    probe = _rand((3, 3), 11, requires_grad=False)

    def f():
        s = T.weighted_sum([a, b, T.mul(a, b)], w)
        return T.sum_all(T.mul(T.add(T.sub(s, b), T.matmul(a, b)), probe))

    assert grad_check(f, [a, b, w]) < 1e-6


def test_concat_rows_gradient():
    a = _rand((2, 3), 12)
    b = _rand((1, 3), 13)
    probe = _rand((3, 3), 14, requires_grad=False)

    def f():
        return T.sum_all(T.mul(T.concat_rows([a, b]), probe))

    assert grad_check(f, [a, b]) < 1e-7


def test_no_grad_blocks_graph():
    x = _rand((2, 2), 15)
    with T.no_grad():
        y = T.mul(x, x)
    assert y._parents == () and not y.requires_grad


def test_l2_normalize_zero_row_raises():
    z = Tensor((2, 3))
    with pytest.raises(NumericError):
        T.l2_normalize_rows(z)


def test_l2_normalize_unit_norm():
    x = _rand((4, 6), 16)
    y = T.l2_normalize_rows(x)
    for r in range(4):
        nrm = math.sqrt(sum(y.data[r * 6 + j] ** 2 for j in range(6)))
        assert abs(nrm - 1.0) < 1e-12


def test_softmax_axis0_columns_sum_to_one():
    x = _rand((5, 3), 17)
    y = T.softmax(x, axis=0)
    for j in range(3):
        assert abs(sum(y.data[i * 3 + j] for i in range(5)) - 1.0) < 1e-12


def test_grad_check_detects_corruption():
    x = _rand((2, 2), 18)

    calls = {"n": 0}

    def f():
        # corrupt the loss surface between the analytic and FD passes
        calls["n"] += 1
        s = T.sum_all(T.mul(x, x))
        return T.scale(s, 1.0 if calls["n"] == 1 else 2.0)

    assert grad_check(f, [x]) > 0.1


def test_grad_check_eps_validated():
    x = _rand((2, 2), 19)
    with pytest.raises(ValueError):
        grad_check(lambda: T.sum_all(x), [x], eps=1.0)


def test_serialization_roundtrip():
    x = _rand((3, 5), 20)
    buf = stdio.BytesIO()
    write_tensor(buf, x)
    buf.seek(0)
    y = read_tensor(buf)
    assert y.shape == x.shape and y.data == x.data


def test_serialization_is_little_endian_f64():
    x = Tensor((1, 2), [1.0, -2.5])
    buf = stdio.BytesIO()
    write_tensor(buf, x)
    raw = buf.getvalue()
    import struct

    rank, d0, d1 = struct.unpack_from("<QQQ", raw, 0)
    assert (rank, d0, d1) == (2, 1, 2)
    assert struct.unpack_from("<2d", raw, 24) == (1.0, -2.5)
