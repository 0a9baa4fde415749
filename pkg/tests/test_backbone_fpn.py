"""Backbone stride arithmetic and pyramid behavior."""

import pytest
import torch

from brnet.model import FeaturePyramid, ResidualBackbone


def test_backbone_stage_strides():
    net = ResidualBackbone((8, 16, 24, 32))
    feats = net(torch.randn(2, 1, 256, 256))
    assert [tuple(f.shape) for f in feats] == [
        (2, 8, 64, 64),
        (2, 16, 32, 32),
        (2, 24, 16, 16),
        (2, 32, 8, 8),
    ]


@pytest.mark.parametrize("use_attention", [False, True])
def test_pyramid_levels_and_channels(use_attention):
    fp = FeaturePyramid((8, 16, 24, 32), out_channels=64, use_attention=use_attention,
                        attention_mid_channels=8, attention_reduction=4)
    feats = fp(torch.randn(1, 1, 128, 96))
    assert [tuple(f.shape) for f in feats] == [
        (1, 64, 32, 24),
        (1, 64, 16, 12),
        (1, 64, 8, 6),
        (1, 64, 4, 3),
    ]
    assert fp.attention_count == (4 if use_attention else 0)


def test_zero_image_stays_finite():
    fp = FeaturePyramid((8, 16, 24, 32), use_attention=True,
                        attention_mid_channels=8)
    feats = fp(torch.zeros(1, 1, 64, 64))
    for f in feats:
        assert torch.isfinite(f).all()


def test_indivisible_input_rejected_with_padding_hint():
    fp = FeaturePyramid((8, 16, 24, 32))
    with pytest.raises(ValueError, match="divisible by 32"):
        fp(torch.randn(1, 1, 100, 64))
    with pytest.raises(ValueError):
        fp(torch.randn(1, 64, 64))


def test_forward_is_deterministic():
    torch.manual_seed(0)
    fp = FeaturePyramid((8, 16, 24, 32), use_attention=True,
                        attention_mid_channels=8)
    x = torch.randn(1, 1, 64, 64)
    a = fp(x)
    b = fp(x)
    for fa, fb in zip(a, b):
        assert torch.equal(fa, fb)
