"""Kernel parity (compiled vs pure) and correctness against numpy oracles."""

import math
import random
from array import array

import numpy as np
import pytest

from svlab.kernels import BACKEND, pure

try:
    from svlab.kernels import _core as compiled
except ImportError:
    compiled = None

MODS = [pure] + ([compiled] if compiled is not None else [])


def _rand(rng, n):
    return array("d", [rng.uniform(-2.0, 2.0) for _ in range(n)])


def _zeros(n):
    return array("d", bytes(8 * n))


def test_backend_selected():
    assert BACKEND in ("cython", "pure")


@pytest.mark.parametrize("mod", MODS)
def test_mm_nn_oracle(mod):
    rng = random.Random(0)
    m, k, n = 5, 7, 4
    a, b = _rand(rng, m * k), _rand(rng, k * n)
    out = _rand(rng, m * n)  # accumulating: starts non-zero
    base = np.array(out).copy()
    mod.mm_nn(a, b, m, k, n, out)
    want = base + (np.array(a).reshape(m, k) @ np.array(b).reshape(k, n)).ravel()
    np.testing.assert_allclose(np.array(out), want, rtol=1e-13)


@pytest.mark.parametrize("mod", MODS)
def test_mm_nt_mm_tn_oracle(mod):
    rng = random.Random(1)
    m, k, n = 4, 6, 3
    a, bt = _rand(rng, m * k), _rand(rng, n * k)
    out = _zeros(m * n)
    mod.mm_nt(a, bt, m, k, n, out)
    want = np.array(a).reshape(m, k) @ np.array(bt).reshape(n, k).T
    np.testing.assert_allclose(np.array(out).reshape(m, n), want, rtol=1e-13)

    at = _rand(rng, k * m)
    b = _rand(rng, k * n)
    out = _zeros(m * n)
    mod.mm_tn(at, b, m, k, n, out)
    want = np.array(at).reshape(k, m).T @ np.array(b).reshape(k, n)
    np.testing.assert_allclose(np.array(out).reshape(m, n), want, rtol=1e-13)


@pytest.mark.parametrize("mod", MODS)
def test_softmax_rows_oracle(mod):
    rng = random.Random(2)
    r, c = 6, 5
    x = _rand(rng, r * c)
    out = _zeros(r * c)
    mod.softmax_rows(x, r, c, out)
    xs = np.array(x).reshape(r, c)
    e = np.exp(xs - xs.max(axis=1, keepdims=True))
    want = e / e.sum(axis=1, keepdims=True)
    np.testing.assert_allclose(np.array(out).reshape(r, c), want, rtol=1e-13)
    assert np.allclose(np.array(out).reshape(r, c).sum(axis=1), 1.0, atol=1e-12)


@pytest.mark.parametrize("mod", MODS)
def test_logsoftmax_rows_oracle(mod):
    rng = random.Random(3)
    r, c = 4, 7
    x = _rand(rng, r * c)
    out = _zeros(r * c)
    mod.logsoftmax_rows(x, r, c, out)
    xs = np.array(x).reshape(r, c)
    want = xs - xs.max(axis=1, keepdims=True)
    want = want - np.log(np.exp(want).sum(axis=1, keepdims=True))
    np.testing.assert_allclose(np.array(out).reshape(r, c), want, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("mod", MODS)
def test_layernorm_rows_oracle(mod):
    rng = random.Random(4)
    r, c = 5, 8
    eps = 1e-5
    x = _rand(rng, r * c)
    out, stats = _zeros(r * c), _zeros(2 * r)
    mod.layernorm_rows(x, r, c, eps, out, stats)
    xs = np.array(x).reshape(r, c)
    mu = xs.mean(axis=1, keepdims=True)
    var = xs.var(axis=1, keepdims=True)
    want = (xs - mu) / np.sqrt(var + eps)
    np.testing.assert_allclose(np.array(out).reshape(r, c), want, rtol=1e-12, atol=1e-13)


@pytest.mark.parametrize("mod", MODS)
def test_adam_update_oracle(mod):
    rng = random.Random(5)
    n = 9
    p, g = _rand(rng, n), _rand(rng, n)
    m, v = _zeros(n), _zeros(n)
    p0 = np.array(p).copy()
    lr, b1, b2, eps = 1e-2, 0.9, 0.999, 1e-8
    bc1, bc2 = 1 - b1, 1 - b2
    mod.adam_update(p, g, m, v, lr, b1, b2, eps, bc1, bc2)
    gn = np.array(g)
    m_hat = (1 - b1) * gn / bc1
    v_hat = (1 - b2) * gn * gn / bc2
    want = p0 - lr * m_hat / (np.sqrt(v_hat) + eps)
    np.testing.assert_allclose(np.array(p), want, rtol=1e-12)


@pytest.mark.skipif(compiled is None, reason="compiled extension unavailable")
def test_parity_pure_vs_compiled():
    rng = random.Random(6)
    m, k, n = 6, 5, 4
    a, b = _rand(rng, m * k), _rand(rng, k * n)
    o1, o2 = _zeros(m * n), _zeros(m * n)
    pure.mm_nn(a, b, m, k, n, o1)
    compiled.mm_nn(a, b, m, k, n, o2)
    assert o1 == o2  # bit-exact

    r, c = 7, 6
    x = _rand(rng, r * c)
    s1, s2 = _zeros(r * c), _zeros(r * c)
    pure.softmax_rows(x, r, c, s1)
    compiled.softmax_rows(x, r, c, s2)
    assert s1 == s2

    l1, l2 = _zeros(r * c), _zeros(r * c)
    st1, st2 = _zeros(2 * r), _zeros(2 * r)
    pure.layernorm_rows(x, r, c, 1e-5, l1, st1)
    compiled.layernorm_rows(x, r, c, 1e-5, l2, st2)
    assert l1 == l2 and st1 == st2


@pytest.mark.parametrize("mod", MODS)
def test_dot_and_ksum(mod):
    rng = random.Random(7)
    a, b = _rand(rng, 11), _rand(rng, 11)
    assert math.isclose(mod.dot(a, b), float(np.dot(a, b)), rel_tol=1e-13)
    assert math.isclose(mod.ksum(a), float(np.sum(a)), rel_tol=1e-12)
