"""Toy multi-layer transformer encoder with a frozen input projection.

The frozen projection stands in for a fixed acoustic front-end; the
transformer blocks above it are trainable. ``encode`` returns the full
per-layer stack Z_0..Z_L so pooling back-ends can aggregate across depth.
A snapshot of the initial (warmed-up) parameters is kept for drift
tracking and pull-back regularization.
"""

from __future__ import annotations

import math
from array import array
from dataclasses import dataclass
from types import MappingProxyType

from . import tensor as T
from .errors import ConfigError, ShapeError
from .optim import Adam, ParamGroup
from .seeding import derive_rng, derive_seed
from .tensor import Tensor


@dataclass(frozen=True)
class EncoderConfig:
    n_layers: int = 4
    model_dim: int = 32
    n_attn_heads: int = 2
    ffn_dim: int = 64
    input_dim: int = 24
    seed: int = 0

    def __post_init__(self):
        if self.n_layers < 1:
            raise ConfigError(f"n_layers must be >= 1, got {self.n_layers}")
        if self.model_dim % self.n_attn_heads != 0:
            raise ConfigError(
                f"model_dim {self.model_dim} not divisible by n_attn_heads {self.n_attn_heads}"
            )
        if self.ffn_dim < 1 or self.input_dim < 1:
            raise ConfigError("ffn_dim and input_dim must be positive")


def _uniform_init(rng, shape, fan_in):
    lim = 1.0 / math.sqrt(fan_in)
    t = Tensor(shape, [rng.uniform(-lim, lim) for _ in range(_n(shape))], requires_grad=True)
    return t


def _n(shape):
    p = 1
    for s in shape:
        p *= s
    return p


class EncoderParams:
    """Trainable block weights plus the frozen input projection.

    The name->tensor mapping is stable: ``layer{l}.head{h}.{wq|wk|wv|wo}``
    and ``layer{l}.{w1|w2}``, with ``l`` starting at 1. This ordering is
    what LLRD grouping, checkpoints and drift tracking rely on.
    """

    def __init__(self, config):
        self.config = config
        rng = derive_rng(config.seed, "encoder-init")
        F, F0 = config.model_dim, config.input_dim
        dh = F // config.n_attn_heads
        self.frozen_in = _uniform_init(rng, (F0, F), F0)
        self.frozen_in.requires_grad = False
        self.layers = []
        for _ in range(config.n_layers):
            layer = {}
            for h in range(config.n_attn_heads):
                layer[f"head{h}.wq"] = _uniform_init(rng, (F, dh), F)
                layer[f"head{h}.wk"] = _uniform_init(rng, (F, dh), F)
                layer[f"head{h}.wv"] = _uniform_init(rng, (F, dh), F)
                layer[f"head{h}.wo"] = _uniform_init(rng, (dh, F), dh)
            layer["w1"] = _uniform_init(rng, (F, config.ffn_dim), F)
            layer["w2"] = _uniform_init(rng, (config.ffn_dim, F), config.ffn_dim)
            self.layers.append(layer)

    def layer_named(self, l):
        """Named trainable tensors of transformer layer ``l`` (1-based)."""
        return [(f"layer{l}.{k}", t) for k, t in self.layers[l - 1].items()]

    def named_trainable(self):
        out = []
        for l in range(1, self.config.n_layers + 1):
            out.extend(self.layer_named(l))
        return out

    def named_all(self):
        return [("frozen_in", self.frozen_in)] + self.named_trainable()


class PretrainedSnapshot:
    """Frozen copy of encoder parameters at (warmed-up) initialization."""

    def __init__(self, params):
        self.config = params.config
        self._values = MappingProxyType(
            {name: array("d", t.data) for name, t in params.named_all()}
        )

    def value(self, name):
        return self._values[name]

    def items(self):
        return self._values.items()


def sinusoidal_positions(n_frames, dim):
    """Classic sin/cos position table, shape n_frames x dim."""
    data = []
    for t in range(n_frames):
        for d in range(dim):
            angle = t / (10000.0 ** (2 * (d // 2) / dim))
            data.append(math.sin(angle) if d % 2 == 0 else math.cos(angle))
    return Tensor((n_frames, dim), data)


_POS_CACHE = {}


def _positions(n_frames, dim):
    key = (n_frames, dim)
    if key not in _POS_CACHE:
        _POS_CACHE[key] = sinusoidal_positions(n_frames, dim)
    return _POS_CACHE[key]


def encode(params, frames):
    """Run the encoder, returning the layer stack [Z_0, Z_1, ..., Z_L].

    Z_0 is the frozen projection of the input frames (plus fixed position
    encodings); each further entry is one pre-norm attention+FFN block with
    residual connections. Gradients never reach the frozen projection.
    """
    cfg = params.config
    if len(frames.shape) != 2 or frames.shape[1] != cfg.input_dim:
        raise ShapeError(
            f"encode: frames shape {frames.shape} incompatible with input_dim {cfg.input_dim}"
        )
    nheads = cfg.n_attn_heads
    dh = cfg.model_dim // nheads
    inv_sqrt_dh = 1.0 / math.sqrt(dh)
    z = T.add(T.matmul(frames, params.frozen_in), _positions(frames.shape[0], cfg.model_dim))
    stack = [z]
    for layer in params.layers:
        h = T.layer_norm_rows(z)
        attn = None
        for hd in range(nheads):
            q = T.matmul(h, layer[f"head{hd}.wq"])
            k = T.matmul(h, layer[f"head{hd}.wk"])
            v = T.matmul(h, layer[f"head{hd}.wv"])
            a = T.softmax(T.scale(T.matmul(q, T.transpose(k)), inv_sqrt_dh), axis=1)
            o = T.matmul(T.matmul(a, v), layer[f"head{hd}.wo"])
            attn = o if attn is None else T.add(attn, o)
        z = T.add(z, attn)
        h2 = T.layer_norm_rows(z)
        z = T.add(z, T.matmul(T.tanh(T.matmul(h2, layer["w1"])), layer["w2"]))
        stack.append(z)
    return stack


def layer_drift(params, snapshot):
    """Per-layer squared L2 distance between current and snapshot weights."""
    if snapshot.config != params.config:
        raise ConfigError(
            f"snapshot architecture {snapshot.config} does not match params {params.config}"
        )
    drifts = []
    for l in range(1, params.config.n_layers + 1):
        s = 0.0
        for name, t in params.layer_named(l):
            ref = snapshot.value(name)
            for i in range(t.size):
                d = t.data[i] - ref[i]
                s += d * d
        drifts.append(s)
    return drifts


# -- warm-up pre-training ------------------------------------------------------


def masked_recon_loss(params, w_rec, utts, seed, mask_frac=0.15):
    """Masked-frame reconstruction objective.

    Masks a seeded subset of frames (set to zero), encodes, and measures the
    mean squared error between a linear read-out of Z_L and the clean Z_0 at
    the masked positions.
    """
    cfg = params.config
    F = cfg.model_dim
    total = None
    for ui, utt in enumerate(utts):
        frames = utt.frames
        n_frames = frames.shape[0]
        rng = derive_rng(seed, "mask", utt.name, ui)
        n_mask = max(1, round(mask_frac * n_frames))
        masked_rows = sorted(rng.sample(range(n_frames), n_mask))
        with T.no_grad():
            target = T.add(
                T.matmul(frames, params.frozen_in), _positions(n_frames, F)
            ).detach()
        mdata = array("d", frames.data)
        for r in masked_rows:
            for d in range(frames.shape[1]):
                mdata[r * frames.shape[1] + d] = 0.0
        stack = encode(params, Tensor(frames.shape, mdata))
        pred = T.matmul(stack[-1], w_rec)
        diff = T.sub(pred, target)
        sel = Tensor((n_frames, F))
        for r in masked_rows:
            for d in range(F):
                sel.data[r * F + d] = 1.0
        sq = T.mul(T.mul(diff, diff), sel)
        term = T.scale(T.sum_all(sq), 1.0 / (n_mask * F))
        total = term if total is None else T.add(total, term)
    return T.scale(total, 1.0 / len(utts))


def pretrain_warmup(params, corpus, steps, seed=0, batch_size=8, lr=1e-3):
    """Short self-supervised warm-up; returns the frozen snapshot afterwards.

    With steps=0 the snapshot is exactly the random initialization. The
    reconstruction read-out is returned too so held-out loss can be probed.
    """
    if steps < 0:
        raise ConfigError(f"steps must be >= 0, got {steps}")
    cfg = params.config
    rng = derive_rng(seed, "warmup")
    w_rec = _uniform_init(rng, (cfg.model_dim, cfg.model_dim), cfg.model_dim)
    if steps > 0:
        group = ParamGroup("warmup", params.named_trainable() + [("w_rec", w_rec)], lr)
        opt = Adam([group])
        for step in range(steps):
            batch = [corpus[rng.randrange(len(corpus))] for _ in range(min(batch_size, len(corpus)))]
            loss = masked_recon_loss(params, w_rec, batch, derive_seed(seed, "step", step))
            loss.backward()
            opt.step()
    return PretrainedSnapshot(params), w_rec
