"""United attention block used at the feature-pyramid lateral connections.

Three parallel convolutions with different receptive fields feed a
complementary channel-attention stage (a per-channel gate splits weight
between the dilated and 5x5 branches) and a complementary spatial-attention
stage (a single-channel gate splits each pixel between the two fused
streams). Spatial size and channel count are preserved end to end.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass
class AttentionMaps:
    """Diagnostic view of the two attention stages for one forward pass."""

    channel: torch.Tensor        # (B, C_mid), in [0, 1]
    channel_comp: torch.Tensor   # 1 - channel
    spatial: torch.Tensor        # (B, H, W), in [0, 1]
    spatial_comp: torch.Tensor   # 1 - spatial


class SafeBatchNorm1d(nn.BatchNorm1d):
    """BatchNorm over feature vectors that tolerates batch size 1.

    The normalized input here is a pooled 1x1 descriptor, so with a single
    sample the batch variance is identically zero. In that case we normalize
    with the running statistics instead (still updating nothing), which keeps
    training well-defined at any batch size.
    """

    def forward(self, x):
        if self.training and x.shape[0] <= 1:
            return F.batch_norm(
                x,
                self.running_mean,
                self.running_var,
                self.weight,
                self.bias,
                training=False,
                momentum=0.0,
                eps=self.eps,
            )
        return super().forward(x)


class UnitedAttention(nn.Module):
    """See module docstring.

    Args:
        in_channels: channel count of the input feature map.
        mid_channels: width of the three parallel convolutions; defaults to
            ``in_channels``.
        reduction: channel reduction ratio of the two FC layers.
    """

    def __init__(self, in_channels, mid_channels=None, reduction=4):
        super().__init__()
        if mid_channels is None:
            mid_channels = in_channels
        if mid_channels < reduction:
            raise ValueError("mid_channels must be >= reduction")
        self.in_channels = in_channels
        self.mid_channels = mid_channels

        self.conv5 = nn.Conv2d(in_channels, mid_channels, 5, padding=2)
        self.conv3d = nn.Conv2d(in_channels, mid_channels, 3, padding=3, dilation=3)
        self.conv3 = nn.Conv2d(in_channels, mid_channels, 3, padding=1)

        reduced = mid_channels // reduction
        self.fc1 = nn.Linear(mid_channels, reduced, bias=False)
        self.bn = SafeBatchNorm1d(reduced)
        self.fc2 = nn.Linear(reduced, mid_channels, bias=False)

        self.proj_chan = nn.Conv2d(mid_channels, mid_channels, 1)
        self.proj_spat = nn.Conv2d(mid_channels, mid_channels, 1)
        self.proj_gate = nn.Conv2d(mid_channels, 1, 1)
        self.proj_out = nn.Conv2d(mid_channels, in_channels, 1)

    def _stages(self, x):
        if x.ndim != 4:
            raise ValueError(f"expected a (B, C, H, W) tensor, got shape {tuple(x.shape)}")
        if x.shape[1] != self.in_channels:
            raise ValueError(
                f"expected {self.in_channels} input channels, got {x.shape[1]}"
            )
        f5 = self.conv5(x)
        fd = self.conv3d(x)
        f3 = self.conv3(x)

        pooled = (f5 + fd).mean(dim=(2, 3))
        squeezed = torch.relu(self.bn(self.fc1(pooled)))
        ch_gate = torch.sigmoid(self.fc2(squeezed))
        fd_cal = ch_gate[:, :, None, None] * fd
        f5_cal = (1.0 - ch_gate)[:, :, None, None] * f5

        chan_stream = self.proj_chan(f5_cal + fd_cal)
        spat_stream = self.proj_spat(f3)
        sp_gate = torch.sigmoid(self.proj_gate(torch.relu(chan_stream + spat_stream)))
        out = self.proj_out(sp_gate * chan_stream + (1.0 - sp_gate) * spat_stream)
        return out, ch_gate, sp_gate

    def forward(self, x):
        out, _, _ = self._stages(x)
        return out

    def attention_maps(self, x) -> AttentionMaps:
        """Run the block and return the intermediate attention weights."""
        _, ch_gate, sp_gate = self._stages(x)
        sp_gate = sp_gate[:, 0]
        return AttentionMaps(
            channel=ch_gate,
            channel_comp=1.0 - ch_gate,
            spatial=sp_gate,
            spatial_comp=1.0 - sp_gate,
        )
