from __future__ import annotations

import numpy as np
import pytest

from mshllm.backbone import Backbone, BackboneConfig, backbone_forward
from mshllm.numerics import ShapeError, Tensor


def test_identity_returns_input(rng):
    x = rng.normal(size=(3, 11, 4))
    out = backbone_forward(x, BackboneConfig(variant="identity", width=4))
    np.testing.assert_array_equal(out.data, x)


@pytest.mark.parametrize("variant", ["frozen_transformer", "attention_only"])
def test_same_seed_gives_bitwise_identical_output(rng, variant):
    x = rng.normal(size=(2, 9, 4))
    cfg = BackboneConfig(variant=variant, width=4, heads=2, layers=3, seed=5)
    a = Backbone(cfg)(x).data
    b = Backbone(cfg)(x).data
    assert a.tobytes() == b.tobytes()
    assert a.shape == x.shape


def test_attention_only_has_one_block_without_feed_forward():
    bb = Backbone(BackboneConfig(variant="attention_only", width=4, layers=6))
    assert bb.n_blocks == 1
    assert not any("ff" in k for k in bb.params)


def test_depth_is_a_config_knob(rng):
    x = rng.normal(size=(5, 4))
    outs = [Backbone(BackboneConfig(width=4, layers=n)).n_blocks for n in (2, 4, 6)]
    assert outs == [2, 4, 6]
    assert Backbone(BackboneConfig(width=4, layers=4))(x).shape == (5, 4)


def test_width_mismatch_raises():
    with pytest.raises(ShapeError):
        Backbone(BackboneConfig(width=4))(np.zeros((3, 5)))


def test_bad_config_rejected():
    with pytest.raises(ValueError):
        BackboneConfig(variant="llama")
    with pytest.raises(ValueError):
        BackboneConfig(width=5, heads=2)


def test_weights_frozen_but_input_receives_gradient(rng):
    bb = Backbone(BackboneConfig(width=4, heads=2))
    x0 = rng.normal(size=(6, 4))
    x = Tensor(x0, requires_grad=True)
    target = rng.normal(size=(6, 4))

    def loss_of(arr):
        d = bb(arr).data - target
        return float((d * d).sum())

    d = bb(x) - target
    (d * d).sum().backward()
    for p in bb.parameters():
        assert not p.trainable
        assert not np.any(p.grad)
    assert np.abs(x.grad).max() > 0
    # finite differences on a few input entries
    eps = 1e-6
    for idx in [(0, 0), (3, 2), (5, 3)]:
        hi, lo = x0.copy(), x0.copy()
        hi[idx] += eps
        lo[idx] -= eps
        num = (loss_of(hi) - loss_of(lo)) / (2 * eps)
        assert num == pytest.approx(x.grad[idx], rel=1e-5, abs=1e-8)
