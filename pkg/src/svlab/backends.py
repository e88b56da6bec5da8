"""Speaker-embedding back-ends over an encoder layer stack.

Three variants:

* ``topattn``  -- attentive statistics pooling on the top layer only
* ``wavg``     -- learned weighted average over layers, mean-pooled
* ``mhfa``     -- multi-head factorized attentive pooling with separate
                  key/value layer aggregation

All of them emit a unit-norm embedding of configurable dimension. The
MHFA key/value streams can be tied (shared layer weights and/or shared
compression matrices) for the constraint ablations.
"""

from __future__ import annotations

import math

from . import tensor as T
from .errors import ConfigError, ShapeError
from .seeding import derive_rng
from .tensor import Tensor

CONSTRAINT_MODES = ("none", "shared_weights", "shared_linear", "shared_both")
BACKEND_VARIANTS = ("topattn", "wavg", "mhfa")


def _check_stack(stack):
    if not stack:
        raise ShapeError("empty layer stack")
    base = stack[0].shape
    if len(base) != 2:
        raise ShapeError(f"layer stack entries must be 2-D, got {base}")
    for z in stack:
        if z.shape != base:
            raise ShapeError(f"ragged layer stack: {z.shape} differs from {base}")
    return base


def _fan_in_init(rng, shape, fan_in):
    lim = 1.0 / math.sqrt(fan_in)
    n = shape[0] * (shape[1] if len(shape) > 1 else 1)
    return Tensor(shape, [rng.uniform(-lim, lim) for _ in range(n)], requires_grad=True)


def _uniform_layer_weights(n_layers_incl_zero):
    # A constant vector: degenerate at exactly zero (the embedding would
    # collapse before normalization), so start at the uniform average.
    w = Tensor.full((n_layers_incl_zero,), 1.0 / n_layers_incl_zero)
    w.requires_grad = True
    return w


class MhfaParams:
    """Layer weights, compression maps, head queries and output projection."""

    def __init__(self, n_layers, feat_dim, head_dim=16, n_heads=8, emb_dim=32,
                 seed=0, constraint="none"):
        if n_heads < 1 or head_dim < 1 or emb_dim < 1:
            raise ConfigError("head_dim, n_heads and emb_dim must be >= 1")
        rng = derive_rng(seed, "mhfa-init")
        self.n_layers = n_layers
        self.feat_dim = feat_dim
        self.head_dim = head_dim
        self.n_heads = n_heads
        self.emb_dim = emb_dim
        L1 = n_layers + 1
        self.w_k = _uniform_layer_weights(L1)
        self.w_v = _uniform_layer_weights(L1)
        self.s_k = _fan_in_init(rng, (feat_dim, head_dim), feat_dim)
        self.s_v = _fan_in_init(rng, (feat_dim, head_dim), feat_dim)
        scale = 1.0 / math.sqrt(head_dim)
        self.q = Tensor(
            (head_dim, n_heads),
            [rng.gauss(0.0, 1.0) * scale for _ in range(head_dim * n_heads)],
            requires_grad=True,
        )
        self.w_emb = _fan_in_init(rng, (n_heads * head_dim, emb_dim), n_heads * head_dim)
        self.constraint = "none"
        apply_constraint(self, constraint)

    def named_params(self):
        """(name, tensor) pairs, tied tensors listed once."""
        items = [
            ("w_k", self.w_k), ("w_v", self.w_v),
            ("s_k", self.s_k), ("s_v", self.s_v),
            ("q", self.q), ("w_emb", self.w_emb),
        ]
        out, seen = [], set()
        for name, t in items:
            if id(t) not in seen:
                seen.add(id(t))
                out.append((name, t))
        return out


class WavgParams:
    def __init__(self, n_layers, feat_dim, emb_dim=32, seed=0):
        rng = derive_rng(seed, "wavg-init")
        self.n_layers = n_layers
        self.feat_dim = feat_dim
        self.emb_dim = emb_dim
        self.w = _uniform_layer_weights(n_layers + 1)
        self.w_emb = _fan_in_init(rng, (feat_dim, emb_dim), feat_dim)

    def named_params(self):
        return [("w", self.w), ("w_emb", self.w_emb)]


class TopAttnParams:
    """One-hidden-layer frame scorer over the top layer plus projection."""

    def __init__(self, n_layers, feat_dim, emb_dim=32, seed=0):
        rng = derive_rng(seed, "topattn-init")
        self.n_layers = n_layers
        self.feat_dim = feat_dim
        self.emb_dim = emb_dim
        hidden = (feat_dim + 1) // 2
        self.w1 = _fan_in_init(rng, (feat_dim, hidden), feat_dim)
        self.w2 = _fan_in_init(rng, (hidden, 1), hidden)
        self.w_emb = _fan_in_init(rng, (2 * feat_dim, emb_dim), 2 * feat_dim)

    def named_params(self):
        return [("w1", self.w1), ("w2", self.w2), ("w_emb", self.w_emb)]


def apply_constraint(p, mode):
    """Tie key/value tensors of fresh MHFA parameters in place.

    Tied tensors are literally the same object, so gradients from both
    forward paths accumulate in one buffer.
    """
    if mode not in CONSTRAINT_MODES:
        raise ConfigError(f"unknown constraint mode {mode!r}, expected one of {CONSTRAINT_MODES}")
    if mode in ("shared_weights", "shared_both"):
        p.w_v = p.w_k
    if mode in ("shared_linear", "shared_both"):
        p.s_v = p.s_k
    p.constraint = mode
    return p


def param_count(p):
    return sum(t.size for _, t in p.named_params())


# -- forward passes ------------------------------------------------------------


def mhfa_forward(p, stack):
    """Key/value layer aggregation, per-head attention over frames, projection.

    Attention weights are normalized over the frame axis, so each head is a
    convex combination of value frames.
    """
    n_frames, feat = _check_stack(stack)
    if len(stack) != p.n_layers + 1 or feat != p.feat_dim:
        raise ShapeError(
            f"stack ({len(stack)} layers of {stack[0].shape}) does not match "
            f"params (L={p.n_layers}, F={p.feat_dim})"
        )
    keys = T.matmul(T.weighted_sum(stack, p.w_k), p.s_k)        # T x D
    values = T.matmul(T.weighted_sum(stack, p.w_v), p.s_v)      # T x D
    attn = T.softmax(T.matmul(keys, p.q), axis=0)               # T x H
    heads = T.matmul(T.transpose(attn), values)                 # H x D
    pooled = T.reshape(heads, (1, p.n_heads * p.head_dim))
    return T.l2_normalize_rows(T.matmul(pooled, p.w_emb))


def wavg_forward(p, stack):
    """Weighted layer average, mean over frames, projection."""
    n_frames, feat = _check_stack(stack)
    if len(stack) != p.n_layers + 1 or feat != p.feat_dim:
        raise ShapeError(
            f"stack ({len(stack)} layers of {stack[0].shape}) does not match "
            f"params (L={p.n_layers}, F={p.feat_dim})"
        )
    merged = T.weighted_sum(stack, p.w)
    mean = T.matmul(Tensor.full((1, n_frames), 1.0 / n_frames), merged)
    return T.l2_normalize_rows(T.matmul(mean, p.w_emb))


def topattn_forward(p, stack):
    """Attentive mean+std pooling of the top layer."""
    n_frames, feat = _check_stack(stack)
    if feat != p.feat_dim:
        raise ShapeError(f"top layer width {feat} does not match params F={p.feat_dim}")
    z = stack[-1]
    scores = T.matmul(T.tanh(T.matmul(z, p.w1)), p.w2)          # T x 1
    alpha = T.softmax(scores, axis=0)
    alpha_row = T.transpose(alpha)                               # 1 x T
    mean = T.matmul(alpha_row, z)                                # 1 x F
    second = T.matmul(alpha_row, T.mul(z, z))
    var = T.clamp_min(T.sub(second, T.mul(mean, mean)), 1e-9)
    std = T.sqrt(var)
    pooled = T.reshape(T.concat_rows([mean, std]), (1, 2 * feat))
    return T.l2_normalize_rows(T.matmul(pooled, p.w_emb))


def forward(p, stack):
    if isinstance(p, MhfaParams):
        return mhfa_forward(p, stack)
    if isinstance(p, WavgParams):
        return wavg_forward(p, stack)
    if isinstance(p, TopAttnParams):
        return topattn_forward(p, stack)
    raise ConfigError(f"unknown back-end parameter type {type(p).__name__}")


def make_backend(variant, n_layers, feat_dim, head_dim=16, n_heads=8, emb_dim=32,
                 seed=0, constraint="none"):
    if variant == "mhfa":
        return MhfaParams(n_layers, feat_dim, head_dim, n_heads, emb_dim, seed, constraint)
    if variant == "wavg":
        if constraint != "none":
            raise ConfigError("constraint modes only apply to the mhfa back-end")
        return WavgParams(n_layers, feat_dim, emb_dim, seed)
    if variant == "topattn":
        if constraint != "none":
            raise ConfigError("constraint modes only apply to the mhfa back-end")
        return TopAttnParams(n_layers, feat_dim, emb_dim, seed)
    raise ConfigError(f"unknown back-end variant {variant!r}, expected one of {BACKEND_VARIANTS}")


def layer_weight_report(p):
    """Softmax-normalized layer weights for diagnostics; does not mutate."""
    with T.no_grad():
        if isinstance(p, MhfaParams):
            return {
                "key": list(T.softmax(p.w_k.detach()).data),
                "value": list(T.softmax(p.w_v.detach()).data),
            }
        if isinstance(p, WavgParams):
            return {"value": list(T.softmax(p.w.detach()).data)}
    raise ConfigError(f"layer weights are not defined for {type(p).__name__}")
