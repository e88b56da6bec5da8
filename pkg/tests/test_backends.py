"""Pooling back-ends: numpy oracle, invariances, constraints, param counts."""

import random

import numpy as np
import pytest

from svlab import backends
from svlab import tensor as T
from svlab.backends import (
    CONSTRAINT_MODES,
    MhfaParams,
    TopAttnParams,
    WavgParams,
    apply_constraint,
    layer_weight_report,
    make_backend,
    param_count,
)
from svlab.errors import ConfigError, ShapeError
from svlab.tensor import Tensor

L, F, D, H, E = 3, 8, 4, 2, 6
N_FRAMES = 5


def _stack(seed=0, n_frames=N_FRAMES):
    rng = random.Random(seed)
    return [
        Tensor((n_frames, F), [rng.uniform(-1, 1) for _ in range(n_frames * F)])
        for _ in range(L + 1)
    ]


def _np(t):
    return np.array(t.data).reshape(t.shape)


def _mhfa_oracle(p, stack):
    """Independent numpy reimplementation of the MHFA forward pass."""
    zs = np.stack([_np(z) for z in stack])                     # (L+1, T, F)
    k = np.tensordot(_np(p.w_k), zs, axes=(0, 0)) @ _np(p.s_k)  # T x D
    v = np.tensordot(_np(p.w_v), zs, axes=(0, 0)) @ _np(p.s_v)  # T x D
    scores = k @ _np(p.q)                                       # T x H
    e = np.exp(scores - scores.max(axis=0, keepdims=True))
    a = e / e.sum(axis=0, keepdims=True)                        # T x H
    heads = a.T @ v                                             # H x D
    pooled = heads.reshape(1, -1) @ _np(p.w_emb)
    return pooled / np.linalg.norm(pooled)


def test_mhfa_matches_numpy_oracle():
    p = MhfaParams(L, F, head_dim=D, n_heads=H, emb_dim=E, seed=3)
    stack = _stack(1)
    got = _np(backends.forward(p, stack))
    np.testing.assert_allclose(got, _mhfa_oracle(p, stack), rtol=1e-12, atol=1e-14)


def test_wavg_matches_numpy_oracle():
    p = WavgParams(L, F, emb_dim=E, seed=4)
    stack = _stack(2)
    zs = np.stack([_np(z) for z in stack])
    merged = np.tensordot(_np(p.w), zs, axes=(0, 0))
    pooled = merged.mean(axis=0, keepdims=True) @ _np(p.w_emb)
    want = pooled / np.linalg.norm(pooled)
    np.testing.assert_allclose(_np(backends.forward(p, stack)), want, rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("variant", ["mhfa", "wavg"])
def test_frame_permutation_invariance(variant):
    p = make_backend(variant, L, F, head_dim=D, n_heads=H, emb_dim=E, seed=5)
    stack = _stack(3)
    emb1 = backends.forward(p, stack)
    perm = list(range(N_FRAMES))
    random.Random(9).shuffle(perm)
    permuted = []
    for z in stack:
        data = []
        for t in perm:
            data.extend(z.data[t * F : (t + 1) * F])
        permuted.append(Tensor((N_FRAMES, F), data))
    emb2 = backends.forward(p, permuted)
    assert max(abs(a - b) for a, b in zip(emb1.data, emb2.data)) < 1e-12


@pytest.mark.parametrize("variant", ["mhfa", "wavg", "topattn"])
def test_embedding_unit_norm(variant):
    p = make_backend(variant, L, F, head_dim=D, n_heads=H, emb_dim=E, seed=6)
    emb = backends.forward(p, _stack(4))
    assert abs(sum(x * x for x in emb.data) ** 0.5 - 1.0) < 1e-9


def test_attention_columns_sum_to_one():
    p = MhfaParams(L, F, head_dim=D, n_heads=H, emb_dim=E, seed=7)
    stack = _stack(5)
    keys = T.matmul(T.weighted_sum(stack, p.w_k), p.s_k)
    attn = T.softmax(T.matmul(keys, p.q), axis=0)
    for h in range(H):
        col = sum(attn.data[t * H + h] for t in range(N_FRAMES))
        assert abs(col - 1.0) < 1e-12


def test_param_count_formula():
    for l, f, d, h, e in [(3, 8, 4, 2, 6), (4, 32, 16, 8, 32), (12, 24, 16, 1, 32)]:
        p = MhfaParams(l, f, head_dim=d, n_heads=h, emb_dim=e)
        assert param_count(p) == 2 * (l + 1) + 2 * f * d + d * h + h * d * e
        shared_w = MhfaParams(l, f, head_dim=d, n_heads=h, emb_dim=e, constraint="shared_weights")
        assert param_count(shared_w) == param_count(p) - (l + 1)
        shared_l = MhfaParams(l, f, head_dim=d, n_heads=h, emb_dim=e, constraint="shared_linear")
        assert param_count(shared_l) == param_count(p) - f * d
        shared_b = MhfaParams(l, f, head_dim=d, n_heads=h, emb_dim=e, constraint="shared_both")
        assert param_count(shared_b) == param_count(p) - (l + 1) - f * d


def test_constraints_tie_objects_and_gradients():
    p = MhfaParams(L, F, head_dim=D, n_heads=H, emb_dim=E, constraint="shared_both")
    assert p.w_k is p.w_v and p.s_k is p.s_v
    emb = backends.forward(p, _stack(6))
    T.sum_all(emb).backward()
    assert p.w_k.grad is not None  # one buffer accumulates both streams


def test_unknown_constraint_rejected():
    with pytest.raises(ConfigError):
        MhfaParams(L, F, constraint="bogus")
    with pytest.raises(ConfigError):
        make_backend("wavg", L, F, constraint="shared_weights")


def test_ragged_or_mismatched_stack_rejected():
    p = MhfaParams(L, F, head_dim=D, n_heads=H, emb_dim=E)
    with pytest.raises(ShapeError):
        backends.forward(p, _stack(7)[:-1])
    bad = _stack(8)
    bad[1] = Tensor((N_FRAMES + 1, F))
    with pytest.raises(ShapeError):
        backends.forward(p, bad)


def test_layer_weight_report_uniform_at_init():
    p = MhfaParams(L, F, head_dim=D, n_heads=H, emb_dim=E)
    rep = layer_weight_report(p)
    for col in ("key", "value"):
        assert len(rep[col]) == L + 1
        assert all(abs(w - 1.0 / (L + 1)) < 1e-12 for w in rep[col])
        assert abs(sum(rep[col]) - 1.0) < 1e-12
    with pytest.raises(ConfigError):
        layer_weight_report(TopAttnParams(L, F))


def test_single_frame_stack():
    p = MhfaParams(L, F, head_dim=D, n_heads=H, emb_dim=E)
    emb = backends.forward(p, _stack(9, n_frames=1))
    assert emb.shape == (1, E)
    assert abs(sum(x * x for x in emb.data) ** 0.5 - 1.0) < 1e-9
