"""Per-group Adam updates with layer-wise learning rates.

Encoder layer ``l`` is assigned rate ``lr_encoder_base * xi**(l-1)``; the
back-end (pooling parameters plus classifier head) gets its own base rate.
Epoch ticks multiply every rate by a shared decay factor, computed in
closed form so rates after ``k`` ticks equal ``base * decay**k`` exactly.
"""

from __future__ import annotations

import math
from array import array
from dataclasses import dataclass

from . import kernels as K
from .errors import ConfigError, GradientMissingError
from .tensor import Tensor, _zeros_arr


@dataclass
class LlrdConfig:
    lr_backend: float = 1e-3
    lr_encoder_base: float = 2e-5
    xi: float = 1.0
    epoch_decay: float = 0.95
    freeze_encoder: bool = False

    def __post_init__(self):
        if self.lr_backend <= 0 or self.lr_encoder_base <= 0:
            raise ConfigError("learning rates must be positive")
        if self.xi <= 0:
            raise ConfigError(f"xi must be positive, got {self.xi}")
        if not (0 < self.epoch_decay <= 1):
            raise ConfigError(f"epoch_decay must be in (0, 1], got {self.epoch_decay}")


class ParamGroup:
    """A set of named tensors sharing one learning rate."""

    def __init__(self, gid, tensors, base_lr):
        self.gid = gid
        self.tensors = list(tensors)  # (name, Tensor) pairs
        self.base_lr = base_lr
        self.ticks = 0
        self.lr = base_lr

    def __repr__(self):
        return f"ParamGroup({self.gid!r}, n={len(self.tensors)}, lr={self.lr})"


def build_groups(encoder_params, backend_named, cfg):
    """One group for the back-end, one per transformer layer (unless frozen).

    The frozen input projection never gets a group. With
    ``freeze_encoder`` only the back-end group is returned.
    """
    groups = [ParamGroup("backend", backend_named, cfg.lr_backend)]
    if not cfg.freeze_encoder:
        for l in range(1, encoder_params.config.n_layers + 1):
            groups.append(
                ParamGroup(
                    f"encoder.layer{l}",
                    encoder_params.layer_named(l),
                    cfg.lr_encoder_base * cfg.xi ** (l - 1),
                )
            )
    return groups


def epoch_tick(groups, cfg):
    """Apply the per-epoch rate decay; layer-to-layer ratios are preserved."""
    for g in groups:
        g.ticks += 1
        g.lr = g.base_lr * cfg.epoch_decay**g.ticks


def clip_global_norm(groups, cap=5.0):
    """Scale all gradients so their joint L2 norm is at most ``cap``."""
    sq = 0.0
    for g in groups:
        for _, p in g.tensors:
            if p.grad is not None:
                sq += K.dot(p.grad, p.grad)
    nrm = math.sqrt(sq)
    if nrm > cap:
        s = cap / nrm
        for g in groups:
            for _, p in g.tensors:
                if p.grad is not None:
                    K.vscale(s, p.grad, p.grad)
    return nrm


class Adam:
    """Adam with per-group rates; deterministic given the gradient stream."""

    def __init__(self, groups, beta1=0.9, beta2=0.999, eps=1e-8):
        self.groups = groups
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._state = {}  # (gid, name) -> (m, v)

    def _slot(self, gid, name, n):
        key = (gid, name)
        if key not in self._state:
            self._state[key] = (_zeros_arr(n), _zeros_arr(n))
        return self._state[key]

    def step(self):
        """Update all group members from their gradients, then clear them."""
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for g in self.groups:
            for name, p in g.tensors:
                if p.grad is None:
                    raise GradientMissingError(
                        f"parameter {g.gid}/{name} has no gradient at step {self.t}"
                    )
                m, v = self._slot(g.gid, name, p.size)
                K.adam_update(p.data, p.grad, m, v, g.lr, self.beta1, self.beta2, self.eps, bc1, bc2)
                p.grad = None

    def state_tensors(self):
        """Moment buffers as named tensors for checkpointing."""
        out = []
        for g in self.groups:
            for name, p in g.tensors:
                m, v = self._slot(g.gid, name, p.size)
                out.append((f"opt.{g.gid}.{name}.m", Tensor(p.shape, array("d", m))))
                out.append((f"opt.{g.gid}.{name}.v", Tensor(p.shape, array("d", v))))
        return out

    def load_state_tensors(self, named):
        lookup = dict(named)
        for g in self.groups:
            for name, p in g.tensors:
                m = lookup.get(f"opt.{g.gid}.{name}.m")
                v = lookup.get(f"opt.{g.gid}.{name}.v")
                if m is None or v is None:
                    raise ConfigError(f"optimizer state missing for {g.gid}/{name}")
                self._state[(g.gid, name)] = (array("d", m.data), array("d", v.data))
