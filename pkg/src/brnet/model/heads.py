"""Mask and detection heads.

Every mask head follows the same recipe: 4 convolutions producing
14x14x256 features, one deconvolution up to 28x28x256, and a 1x1 sigmoid
predictor giving a 28x28 mask. The coarse head additionally carries a small
detection branch (class logits + box deltas). The bilayer pair shares a
connection block; the recombination head fuses the bilayer penultimate
features with upsampled RoI features and re-enters the 14x14 regime with a
stride-2 first convolution.

Heads expose the pre-sigmoid logits alongside the probabilities so the
training path can use the numerically safe logit-space BCE (identical in
value until saturation, but with gradients that never vanish).
"""

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

ROI_CHANNELS = 256
ROI_SIZE = 14
MASK_SIZE = 28


@dataclass
class MaskPrediction:
    """One mask head's output and its penultimate features."""

    prob: torch.Tensor  # (N, 28, 28) sigmoid output
    logit: torch.Tensor  # (N, 28, 28) pre-sigmoid
    pre_deconv: torch.Tensor  # (N, 256, 14, 14)
    post_deconv: torch.Tensor  # (N, 256, 28, 28)


def _check_feature(x, channels, size, name):
    if x.ndim != 4 or x.shape[1] != channels or x.shape[2] != size or x.shape[3] != size:
        raise ValueError(
            f"{name} must be (N, {channels}, {size}, {size}), got {tuple(x.shape)}"
        )


def _init_predictor(conv, fg_prior):
    # start every pixel at the foreground base rate instead of 0.5: the head
    # then spends the high-lr phase on shape, not on learning the class bias
    nn.init.normal_(conv.weight, std=0.001)
    nn.init.constant_(conv.bias, math.log(fg_prior / (1.0 - fg_prior)))


def _init_upsample(deconv):
    # channel-identity nearest upsample; the stack below breaks symmetry
    nn.init.zeros_(deconv.weight)
    for c in range(deconv.weight.shape[0]):
        deconv.weight.data[c, c] = 1.0
    nn.init.zeros_(deconv.bias)


class _MaskStack(nn.Module):
    """4 convs, 1 deconv, 1x1 sigmoid predictor.

    Each conv carries a GroupNorm: it is batch-size independent, keeps the
    trunk activations bounded through the aggressive early learning rates,
    and adds a negligible parameter count. fg_prior sets the initial
    predicted foreground probability.
    """

    def __init__(
        self, in_channels=ROI_CHANNELS, width=ROI_CHANNELS, first_stride=1, fg_prior=0.5
    ):
        super().__init__()
        convs = [nn.Conv2d(in_channels, width, 3, stride=first_stride, padding=1)]
        convs += [nn.Conv2d(width, width, 3, padding=1) for _ in range(3)]
        self.convs = nn.ModuleList(convs)
        self.norms = nn.ModuleList(nn.GroupNorm(8, width) for _ in range(4))
        self.deconv = nn.ConvTranspose2d(width, width, 2, stride=2)
        _init_upsample(self.deconv)
        self.predictor = nn.Conv2d(width, 1, 1)
        _init_predictor(self.predictor, fg_prior)

    def forward(self, x) -> MaskPrediction:
        for conv, norm in zip(self.convs, self.norms):
            x = torch.relu(norm(conv(x)))
        pre_deconv = x
        x = torch.relu(self.deconv(x))
        logit = self.predictor(x)[:, 0]
        return MaskPrediction(
            prob=torch.sigmoid(logit),
            logit=logit,
            pre_deconv=pre_deconv,
            post_deconv=x,
        )


class CoarseHead(nn.Module):
    """Detection branch plus the coarse instance-mask branch."""

    def __init__(self, in_channels=ROI_CHANNELS):
        super().__init__()
        self.mask_stack = _MaskStack(in_channels, fg_prior=0.3)
        self.det_conv1 = nn.Conv2d(in_channels, in_channels, 3, stride=2, padding=1)
        self.det_norm1 = nn.GroupNorm(8, in_channels)
        self.det_conv2 = nn.Conv2d(in_channels, in_channels, 3, stride=2, padding=1)
        self.det_norm2 = nn.GroupNorm(8, in_channels)
        self.det_fc = nn.Linear(in_channels * 4 * 4, 256)
        self.cls = nn.Linear(256, 2)
        self.box = nn.Linear(256, 4)
        nn.init.normal_(self.cls.weight, std=0.01)
        nn.init.zeros_(self.cls.bias)
        nn.init.normal_(self.box.weight, std=0.001)
        nn.init.zeros_(self.box.bias)

    def detect(self, f_roi):
        """Detection branch only: (cls_logits (N,2), box_delta (N,4))."""
        _check_feature(f_roi, ROI_CHANNELS, ROI_SIZE, "f_roi")
        d = torch.relu(self.det_norm1(self.det_conv1(f_roi)))
        d = torch.relu(self.det_norm2(self.det_conv2(d)))
        d = torch.relu(self.det_fc(d.flatten(1)))
        return self.cls(d), self.box(d)

    def mask(self, f_roi) -> MaskPrediction:
        """Mask branch only; pre_deconv is the f_m handed to the twin heads."""
        _check_feature(f_roi, ROI_CHANNELS, ROI_SIZE, "f_roi")
        return self.mask_stack(f_roi)

    def forward(self, f_roi):
        """f_roi (N,256,14,14) -> (cls_logits, box_delta, MaskPrediction)."""
        cls_logits, box_delta = self.detect(f_roi)
        return cls_logits, box_delta, self.mask(f_roi)


class BilayerHeads(nn.Module):
    """Twin overlap / non-overlap mask heads behind one connection block."""

    def __init__(self, in_channels=ROI_CHANNELS):
        super().__init__()
        self.connection = nn.Conv2d(2 * in_channels, in_channels, 1)
        self.overlap_stack = _MaskStack(in_channels, fg_prior=0.08)
        self.nonoverlap_stack = _MaskStack(in_channels, fg_prior=0.25)

    def forward(self, f_roi, f_m):
        """-> (overlap MaskPrediction, nonoverlap MaskPrediction); their
        post_deconv features are the f_o/f_n consumed by recombination."""
        _check_feature(f_roi, ROI_CHANNELS, ROI_SIZE, "f_roi")
        _check_feature(f_m, ROI_CHANNELS, ROI_SIZE, "f_m")
        x = torch.relu(self.connection(torch.cat([f_roi, f_m], dim=1)))
        return self.overlap_stack(x), self.nonoverlap_stack(x)


class RecombineHead(nn.Module):
    """Fusion block plus the recombined-mask head."""

    def __init__(self, in_channels=ROI_CHANNELS):
        super().__init__()
        self.fusion = nn.Conv2d(3 * in_channels, in_channels, 1)
        self.mask_stack = _MaskStack(in_channels, first_stride=2, fg_prior=0.3)

    def forward(self, f_roi, f_o, f_n) -> MaskPrediction:
        _check_feature(f_roi, ROI_CHANNELS, ROI_SIZE, "f_roi")
        _check_feature(f_o, ROI_CHANNELS, MASK_SIZE, "f_o")
        _check_feature(f_n, ROI_CHANNELS, MASK_SIZE, "f_n")
        up = F.interpolate(
            f_roi, size=(MASK_SIZE, MASK_SIZE), mode="bilinear", align_corners=False
        )
        x = torch.relu(self.fusion(torch.cat([up, f_o, f_n], dim=1)))
        return self.mask_stack(x)
