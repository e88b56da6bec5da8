"""Finite-difference gradient suites for every differentiable component.

Each suite builds a small, well-conditioned scalar loss out of randomly
initialized parameters and compares the reverse-mode gradients against
central differences. The suites run at desk-size dimensions so the whole
battery finishes in seconds.
"""

from __future__ import annotations

import math

from . import backends, kernels
from . import tensor as T
from .encoder import EncoderConfig, EncoderParams, PretrainedSnapshot
from .objective import AamConfig, RegConfig, aam_loss, reg_loss
from .seeding import derive_rng
from .tensor import Tensor, grad_check

COMPONENTS = ("tensor-core", "topattn", "wavg", "mhfa", "aam", "reg")

# desk-size dimensions shared by all suites
N_LAYERS = 3
N_FRAMES = 5
FEAT = 8
HEAD_DIM = 4
N_HEADS = 2
EMB = 6
BATCH = 4
N_CLASSES = 5


def _rand(rng, shape, scale=0.5):
    n = 1
    for s in shape:
        n *= s
    return Tensor(shape, [rng.uniform(-scale, scale) for _ in range(n)], requires_grad=True)


def _probe(rng, shape):
    """Fixed random read-out weights: turn a tensor into a generic scalar."""
    n = 1
    for s in shape:
        n *= s
    return Tensor(shape, [rng.uniform(-1.0, 1.0) for _ in range(n)])


def check_tensor_core(seed=0):
    """One composite loss exercising every primitive of the tensor core."""
    rng = derive_rng(seed, "gradcheck", "core")
    a = _rand(rng, (N_FRAMES, FEAT))
    b = _rand(rng, (FEAT, HEAD_DIM))
    c = _rand(rng, (N_FRAMES, HEAD_DIM))
    w = _rand(rng, (3,))
    p1 = _probe(rng, (N_FRAMES, HEAD_DIM))
    p2 = _probe(rng, (N_FRAMES, FEAT))
    p3 = _probe(rng, (HEAD_DIM, N_FRAMES))
    p4 = _probe(rng, (N_FRAMES, 2 * HEAD_DIM))

    def f():
        m = T.matmul(a, b)                                   # T x D
        s1 = T.sum_all(T.mul(T.tanh(T.add(m, c)), p1))
        s2 = T.sum_all(T.mul(T.softmax(T.sub(m, c), axis=1), p1))
        s3 = T.sum_all(T.mul(T.layer_norm_rows(a), p2))
        s4 = T.sum_all(T.mul(T.l2_normalize_rows(T.transpose(m)), p3))
        s5 = T.sum_all(T.mul(T.log_softmax_rows(m), p1))
        pos = T.clamp_min(T.exp(T.scale(a, 0.3)), 0.9)
        s6 = T.sum_all(T.mul(T.add(T.log(pos), T.sqrt(pos)), p2))
        stack = [a, T.mul(a, a), T.scale(a, -1.0)]
        s7 = T.sum_all(T.mul(T.weighted_sum(stack, w), p2))
        s8 = T.sum_all(T.mul(T.reshape(T.concat_rows([m, c]), (N_FRAMES, 2 * HEAD_DIM)), p4))
        return T.add(T.add(T.add(s1, s2), T.add(s3, s4)), T.add(T.add(s5, s6), T.add(s7, s8)))

    return grad_check(f, [a, b, c, w])


def _stack_and_params(variant, seed):
    rng = derive_rng(seed, "gradcheck", variant)
    stack = [_rand(rng, (N_FRAMES, FEAT)) for _ in range(N_LAYERS + 1)]
    p = backends.make_backend(
        variant, N_LAYERS, FEAT, head_dim=HEAD_DIM, n_heads=N_HEADS, emb_dim=EMB, seed=seed
    )
    probe = _probe(rng, (1, EMB))
    leaves = stack + [t for _, t in p.named_params()]
    return stack, p, probe, leaves


def check_backend(variant, seed=0):
    stack, p, probe, leaves = _stack_and_params(variant, seed)

    def f():
        return T.sum_all(T.mul(backends.forward(p, stack), probe))

    return grad_check(f, leaves)


def check_aam(seed=0):
    rng = derive_rng(seed, "gradcheck", "aam")
    raw = _rand(rng, (BATCH, EMB), scale=1.0)
    weights = _rand(rng, (EMB, N_CLASSES), scale=1.0)
    labels = [rng.randrange(N_CLASSES) for _ in range(BATCH)]
    cfg = AamConfig(margin=0.2, scale=4.0, n_classes=N_CLASSES)

    def f():
        return aam_loss(cfg, T.l2_normalize_rows(raw), weights, labels)

    return grad_check(f, [raw, weights])


def check_reg(seed=0):
    cfg = EncoderConfig(n_layers=2, model_dim=FEAT, n_attn_heads=N_HEADS, ffn_dim=6, input_dim=FEAT)
    params = EncoderParams(cfg)
    snapshot = PretrainedSnapshot(params)
    rng = derive_rng(seed, "gradcheck", "reg")
    for _, t in params.named_trainable():
        for i in range(t.size):
            t.data[i] += rng.uniform(-0.1, 0.1)
    rcfg = RegConfig(lam=1.0, snapshot=snapshot)
    leaves = [t for _, t in params.named_trainable()]

    def f():
        return reg_loss(rcfg, params)

    return grad_check(f, leaves)


def run_all(seed=0, inject_fault=False):
    """Max relative error per component. ``inject_fault`` deliberately breaks
    one backward rule so the suite's failure path can be exercised."""
    saved = kernels.vtanh_bwd
    if inject_fault:
        def broken(y, g, out):
            saved(y, g, out)
            for i in range(len(out)):
                out[i] *= 1.01
        kernels.vtanh_bwd = broken
    try:
        results = {
            "tensor-core": check_tensor_core(seed),
            "topattn": check_backend("topattn", seed),
            "wavg": check_backend("wavg", seed),
            "mhfa": check_backend("mhfa", seed),
            "aam": check_aam(seed),
            "reg": check_reg(seed),
        }
    finally:
        kernels.vtanh_bwd = saved
    return results
