"""Small residual backbone and feature pyramid.

The backbone is a 4-stage residual net over single-channel images producing
feature maps at strides 4, 8, 16 and 32. The pyramid projects each stage to
a common width with 1x1 laterals, runs the attention block on each lateral
(before top-down fusion), then adds nearest-upsampled coarser levels and
applies a smoothing convolution.

Normalization is GroupNorm throughout the backbone so behavior is identical
at any batch size.
"""

import torch
import torch.nn as nn
import torch.nn.functional as F

from .attention import UnitedAttention

TOTAL_STRIDE = 32


def _norm(channels):
    return nn.GroupNorm(8, channels)


class BasicBlock(nn.Module):
    """Two 3x3 convolutions with a projection shortcut when needed."""

    def __init__(self, in_channels, out_channels, stride=1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, stride=stride, padding=1, bias=False)
        self.norm1 = _norm(out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1, bias=False)
        self.norm2 = _norm(out_channels)
        if stride != 1 or in_channels != out_channels:
            self.shortcut = nn.Sequential(
                nn.Conv2d(in_channels, out_channels, 1, stride=stride, bias=False),
                _norm(out_channels),
            )
        else:
            self.shortcut = nn.Identity()

    def forward(self, x):
        out = torch.relu(self.norm1(self.conv1(x)))
        out = self.norm2(self.conv2(out))
        return torch.relu(out + self.shortcut(x))


class ResidualBackbone(nn.Module):
    """4-stage residual net; returns per-stage features at strides 4..32."""

    def __init__(self, widths=(16, 32, 64, 128)):
        super().__init__()
        if len(widths) != 4:
            raise ValueError("widths must list 4 stage channel counts")
        self.widths = tuple(int(w) for w in widths)
        self.stem = nn.Sequential(
            nn.Conv2d(1, self.widths[0], 3, stride=2, padding=1, bias=False),
            _norm(self.widths[0]),
            nn.ReLU(inplace=True),
        )
        stages = []
        prev = self.widths[0]
        for w in self.widths:
            stages.append(BasicBlock(prev, w, stride=2))
            prev = w
        self.stages = nn.ModuleList(stages)

    def forward(self, x):
        x = self.stem(x)
        feats = []
        for stage in self.stages:
            x = stage(x)
            feats.append(x)
        return feats


class FeaturePyramid(nn.Module):
    """Backbone + lateral attention + top-down fusion.

    Args:
        widths: backbone stage widths.
        out_channels: pyramid width (kept at 256 to honor the RoI contract).
        use_attention: insert the attention block on every lateral.
        attention_mid_channels: width of the attention block's parallel
            convolutions; small values keep CPU cost down.
        smooth_kernel: 1 or 3, the post-fusion smoothing convolution size.
    """

    strides = (4, 8, 16, 32)

    def __init__(
        self,
        widths=(16, 32, 64, 128),
        out_channels=256,
        use_attention=True,
        attention_mid_channels=32,
        attention_reduction=4,
        smooth_kernel=1,
    ):
        super().__init__()
        if smooth_kernel not in (1, 3):
            raise ValueError("smooth_kernel must be 1 or 3")
        self.out_channels = out_channels
        self.backbone = ResidualBackbone(widths)
        self.laterals = nn.ModuleList(
            nn.Conv2d(w, out_channels, 1) for w in self.backbone.widths
        )
        if use_attention:
            self.attentions = nn.ModuleList(
                UnitedAttention(
                    out_channels,
                    mid_channels=attention_mid_channels,
                    reduction=attention_reduction,
                )
                for _ in self.backbone.widths
            )
        else:
            self.attentions = nn.ModuleList(
                nn.Identity() for _ in self.backbone.widths
            )
        pad = smooth_kernel // 2
        self.smooths = nn.ModuleList(
            nn.Conv2d(out_channels, out_channels, smooth_kernel, padding=pad)
            for _ in self.backbone.widths
        )

    @property
    def attention_count(self):
        return sum(1 for m in self.attentions if isinstance(m, UnitedAttention))

    def forward(self, x):
        """x: (B, 1, H, W) with H and W divisible by the total stride."""
        if x.ndim != 4 or x.shape[1] != 1:
            raise ValueError(f"expected a (B, 1, H, W) tensor, got shape {tuple(x.shape)}")
        h, w = x.shape[2], x.shape[3]
        if h % TOTAL_STRIDE or w % TOTAL_STRIDE:
            need_h = (TOTAL_STRIDE - h % TOTAL_STRIDE) % TOTAL_STRIDE
            need_w = (TOTAL_STRIDE - w % TOTAL_STRIDE) % TOTAL_STRIDE
            raise ValueError(
                f"input {h}x{w} is not divisible by {TOTAL_STRIDE}; "
                f"pad by {need_h} rows and {need_w} columns "
                f"to {h + need_h}x{w + need_w}"
            )
        feats = self.backbone(x)
        laterals = [
            att(lat(f))
            for f, lat, att in zip(feats, self.laterals, self.attentions)
        ]
        merged = [None] * len(laterals)
        merged[-1] = laterals[-1]
        for i in range(len(laterals) - 2, -1, -1):
            up = F.interpolate(merged[i + 1], scale_factor=2, mode="nearest")
            merged[i] = laterals[i] + up
        return [smooth(m) for smooth, m in zip(self.smooths, merged)]
