"""Training losses: additive-angular-margin softmax and snapshot pull-back.

The classifier operates on cosine similarities between unit-norm
embeddings and unit-norm class weight columns; the target class logit gets
an additive angular margin before scaling and cross-entropy. The
regularizer is the exact sum of squared differences between current
encoder weights and their pre-trained snapshot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import tensor as T
from .errors import ConfigError, LabelError
from .tensor import Tensor, _result, _zeros_arr


@dataclass
class AamConfig:
    margin: float = 0.2
    scale: float = 30.0
    n_classes: int = 2

    def __post_init__(self):
        if not (0 <= self.margin < math.pi / 2):
            raise ConfigError(f"margin must be in [0, pi/2), got {self.margin}")
        if self.scale <= 0:
            raise ConfigError(f"scale must be positive, got {self.scale}")
        if self.n_classes < 1:
            raise ConfigError(f"n_classes must be >= 1, got {self.n_classes}")


@dataclass
class RegConfig:
    lam: float = 1e-4
    snapshot: object = None

    def __post_init__(self):
        if self.lam < 0:
            raise ConfigError(f"lambda must be non-negative, got {self.lam}")


def cos_add_margin(x, margin):
    """Elementwise cos(min(theta + margin, pi)) for x = cos(theta).

    With margin 0 this is the identity (bit-exact), so the loss reduces to
    plain softmax cross-entropy over cosines.
    """
    if margin == 0.0:
        return x
    out = _zeros_arr(x.size)
    derivs = _zeros_arr(x.size)
    for i in range(x.size):
        c = min(1.0, max(-1.0, x.data[i]))
        th = math.acos(c)
        thm = th + margin
        if thm >= math.pi:
            out[i] = -1.0
            derivs[i] = 0.0
        else:
            out[i] = math.cos(thm)
            s = math.sin(th)
            derivs[i] = math.sin(thm) / s if s > 1e-12 else 0.0

    def bwd(g):
        if x.requires_grad:
            gb = x._gbuf()
            for i in range(x.size):
                gb[i] += g[i] * derivs[i]

    return _result(x.shape, out, (x,), bwd)


def aam_loss(cfg, embeddings, class_weights, labels):
    """Margin-penalized softmax cross-entropy over cosine logits.

    ``embeddings`` is a B x E tensor of unit-norm rows; ``class_weights``
    is E x C and is column-normalized on every call.
    """
    n_batch, emb_dim = embeddings.shape
    if class_weights.shape[0] != emb_dim or class_weights.shape[1] != cfg.n_classes:
        raise ConfigError(
            f"class weights {class_weights.shape} incompatible with embeddings "
            f"{embeddings.shape} and {cfg.n_classes} classes"
        )
    labels = list(labels)
    if len(labels) != n_batch:
        raise LabelError(f"{len(labels)} labels for batch of {n_batch}")
    for y in labels:
        if not (0 <= y < cfg.n_classes):
            raise LabelError(f"label {y} outside [0, {cfg.n_classes})")
    w_norm = T.transpose(T.l2_normalize_rows(T.transpose(class_weights)))
    cos = T.matmul(embeddings, w_norm)                # B x C
    onehot = Tensor((n_batch, cfg.n_classes))
    for i, y in enumerate(labels):
        onehot.data[i * cfg.n_classes + y] = 1.0
    inv = Tensor.full((n_batch, cfg.n_classes), 1.0)
    for i, y in enumerate(labels):
        inv.data[i * cfg.n_classes + y] = 0.0
    phi = cos_add_margin(cos, cfg.margin)
    logits = T.scale(T.add(T.mul(onehot, phi), T.mul(inv, cos)), cfg.scale)
    logp = T.log_softmax_rows(logits)
    return T.scale(T.sum_all(T.mul(logp, onehot)), -1.0 / n_batch)


def reg_loss(cfg, params):
    """Sum of squared deviations of encoder weights from the snapshot."""
    snap = cfg.snapshot
    if snap is None or snap.config != params.config:
        raise ConfigError("regularizer snapshot missing or architecture mismatch")
    total = None
    for name, t in params.named_trainable():
        ref = Tensor(t.shape, snap.value(name))
        d = T.sub(t, ref)
        term = T.sum_all(T.mul(d, d))
        total = term if total is None else T.add(total, term)
    return total


def total_loss(spk, reg, lam):
    """L = L_spk + lambda * L_p."""
    if lam == 0.0:
        return spk
    return T.add(spk, T.scale(reg, lam))
