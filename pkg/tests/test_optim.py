"""Optimizer: layer-wise rates, epoch decay, clipping, Adam state."""

import math
import random

import numpy as np
import pytest

from svlab import tensor as T
from svlab.encoder import EncoderConfig, EncoderParams
from svlab.errors import ConfigError, GradientMissingError
from svlab.optim import Adam, LlrdConfig, ParamGroup, build_groups, clip_global_norm, epoch_tick
from svlab.tensor import Tensor


def _enc(n_layers=4):
    return EncoderParams(EncoderConfig(n_layers=n_layers, model_dim=8, n_attn_heads=2, ffn_dim=6, input_dim=5))


def _backend_named(seed=0):
    rng = random.Random(seed)
    return [("w", Tensor((2, 3), [rng.uniform(-1, 1) for _ in range(6)], requires_grad=True))]


def test_llrd_rates_bit_exact():
    enc = _enc(12)
    for xi in (0.6, 0.8, 1.0, 1.5, 1.8, 2.0):
        cfg = LlrdConfig(lr_backend=1e-3, lr_encoder_base=2e-5, xi=xi)
        groups = build_groups(enc, _backend_named(), cfg)
        assert groups[0].gid == "backend" and groups[0].lr == 1e-3
        for l in range(1, 13):
            assert groups[l].gid == f"encoder.layer{l}"
            assert groups[l].lr == 2e-5 * xi ** (l - 1)  # bit-exact


def test_epoch_tick_closed_form_bit_exact():
    enc = _enc(3)
    cfg = LlrdConfig(lr_backend=1e-3, lr_encoder_base=2e-5, xi=1.5, epoch_decay=0.95)
    groups = build_groups(enc, _backend_named(), cfg)
    for k in range(1, 8):
        epoch_tick(groups, cfg)
        for g in groups:
            assert g.lr == g.base_lr * 0.95**k  # no sequential-multiply drift


def test_freeze_encoder_yields_backend_group_only():
    enc = _enc(4)
    cfg = LlrdConfig(freeze_encoder=True)
    groups = build_groups(enc, _backend_named(), cfg)
    assert [g.gid for g in groups] == ["backend"]


def test_frozen_frontend_never_grouped():
    enc = _enc(2)
    groups = build_groups(enc, _backend_named(), LlrdConfig())
    all_named = [t for g in groups for _, t in g.tensors]
    assert all(t is not enc.frozen_in for t in all_named)


def test_clip_global_norm():
    p1 = Tensor((2,), [0.0, 0.0], requires_grad=True)
    p2 = Tensor((2,), [0.0, 0.0], requires_grad=True)
    from array import array

    p1.grad = array("d", [3.0, 0.0])
    p2.grad = array("d", [0.0, 4.0])
    groups = [ParamGroup("g", [("a", p1), ("b", p2)], 1.0)]
    nrm = clip_global_norm(groups, cap=2.5)
    assert math.isclose(nrm, 5.0)
    total = math.sqrt(sum(x * x for x in list(p1.grad) + list(p2.grad)))
    assert math.isclose(total, 2.5, rel_tol=1e-12)
    # below the cap: untouched
    p1.grad = array("d", [0.3, 0.0])
    p2.grad = array("d", [0.0, 0.4])
    clip_global_norm(groups, cap=2.5)
    assert list(p1.grad) == [0.3, 0.0]


def test_adam_single_step_matches_numpy_reference():
    rng = random.Random(1)
    from array import array

    p = Tensor((3,), [rng.uniform(-1, 1) for _ in range(3)], requires_grad=True)
    g = [rng.uniform(-1, 1) for _ in range(3)]
    p.grad = array("d", g)
    p0 = np.array(p.data).copy()
    opt = Adam([ParamGroup("g", [("p", p)], 0.01)])
    opt.step()
    gn = np.array(g)
    m_hat = gn  # bias-corrected first moment at t=1
    v_hat = gn * gn
    want = p0 - 0.01 * m_hat / (np.sqrt(v_hat) + 1e-8)
    np.testing.assert_allclose(np.array(p.data), want, rtol=1e-12)
    assert p.grad is None  # cleared after the step


def test_adam_missing_gradient_raises():
    p = Tensor((2,), [0.0, 0.0], requires_grad=True)
    opt = Adam([ParamGroup("g", [("p", p)], 0.01)])
    with pytest.raises(GradientMissingError):
        opt.step()


def test_adam_state_roundtrip():
    rng = random.Random(2)
    from array import array

    def make():
        p = Tensor((4,), [0.1, 0.2, -0.3, 0.4], requires_grad=True)
        return p, Adam([ParamGroup("g", [("p", p)], 0.05)])

    p1, o1 = make()
    for _ in range(3):
        p1.grad = array("d", [rng.uniform(-1, 1) for _ in range(4)])
        o1.step()
    state = o1.state_tensors()

    p2, o2 = make()
    p2.data[:] = p1.data
    o2.load_state_tensors(state)
    o2.t = o1.t
    g = array("d", [0.5, -0.5, 0.25, 0.0])
    p1.grad = array("d", g)
    p2.grad = array("d", g)
    o1.step()
    o2.step()
    assert p1.data == p2.data  # bit-identical continuation


def test_config_validation():
    with pytest.raises(ConfigError):
        LlrdConfig(xi=0.0)
    with pytest.raises(ConfigError):
        LlrdConfig(epoch_decay=0.0)
    with pytest.raises(ConfigError):
        LlrdConfig(lr_backend=-1.0)
