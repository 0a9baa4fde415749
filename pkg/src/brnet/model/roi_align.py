"""Differentiable RoI feature extraction from a feature pyramid.

Sampling follows the usual aligned convention: continuous coordinate x in
[0, W] has pixel centers at i + 0.5, which maps to the normalized grid value
2x/W - 1 under align_corners=False. Each output cell averages a
sampling_ratio x sampling_ratio grid of bilinear samples. Out-of-range
sample points (at most half a pixel outside a clipped box) clamp to the
border, matching the customary RoIAlign edge handling.
"""

import math

import torch
import torch.nn.functional as F


def roi_align_single(feature, box, output_size=14, sampling_ratio=2):
    """Sample one box from one feature map.

    Args:
        feature: (C, H, W) tensor.
        box: 4-sequence (x0, y0, x1, y1) in feature-pixel continuous coords.
        output_size: side length of the pooled output.
        sampling_ratio: bilinear samples per output cell and axis.

    Returns:
        (C, output_size, output_size) tensor, differentiable w.r.t. feature.

    Raises:
        ValueError: for a degenerate (zero-area) box.
    """
    x0, y0, x1, y1 = (float(v) for v in box)
    if x1 <= x0 or y1 <= y0:
        raise ValueError(f"degenerate proposal box {(x0, y0, x1, y1)}")
    out = _aligned_sample(
        feature[None],
        torch.tensor([[x0, y0, x1, y1]], dtype=feature.dtype, device=feature.device),
        output_size,
        sampling_ratio,
    )
    return out[0]


def _aligned_sample(features, boxes, output_size, sampling_ratio):
    """features: (N, C, H, W); boxes: (N, 4) feature coords; -> (N, C, S, S)."""
    n = boxes.shape[0]
    h, w = features.shape[2], features.shape[3]
    s = output_size * sampling_ratio
    steps = (torch.arange(s, dtype=features.dtype, device=features.device) + 0.5) / s
    x0, y0, x1, y1 = boxes[:, 0], boxes[:, 1], boxes[:, 2], boxes[:, 3]
    fx = x0[:, None] + steps[None, :] * (x1 - x0)[:, None]   # (N, S)
    fy = y0[:, None] + steps[None, :] * (y1 - y0)[:, None]
    gx = 2.0 * fx / w - 1.0
    gy = 2.0 * fy / h - 1.0
    grid = torch.stack(
        [gx[:, None, :].expand(n, s, s), gy[:, :, None].expand(n, s, s)], dim=-1
    )
    sampled = F.grid_sample(
        features, grid, mode="bilinear", padding_mode="border", align_corners=False
    )
    return F.avg_pool2d(sampled, sampling_ratio)


def assign_pyramid_levels(boxes, num_levels, canonical_size=56, canonical_level=1):
    """Area-heuristic level index per box: boxes near `canonical_size` on a
    side go to `canonical_level`, each doubling moves one level up."""
    levels = []
    for x0, y0, x1, y1 in boxes:
        side = math.sqrt(max((float(x1) - float(x0)) * (float(y1) - float(y0)), 1e-12))
        lvl = canonical_level + math.floor(math.log2(side / canonical_size + 1e-12))
        levels.append(min(max(lvl, 0), num_levels - 1))
    return levels


def extract_roi_features(pyramid, boxes, strides=(4, 8, 16, 32), output_size=14, sampling_ratio=2):
    """Pool fixed-size features for each box from its assigned pyramid level.

    Args:
        pyramid: list of (C, H, W) tensors for one image, finest first.
        boxes: (N, 4) tensor in image-pixel coordinates.
        strides: image-to-feature downscale factor per level.

    Returns:
        (N, C, output_size, output_size) tensor.
    """
    if boxes.ndim != 2 or boxes.shape[1] != 4:
        raise ValueError(f"boxes must be (N, 4), got {tuple(boxes.shape)}")
    n = boxes.shape[0]
    c = pyramid[0].shape[0]
    out = pyramid[0].new_zeros((n, c, output_size, output_size))
    if n == 0:
        return out
    for box in boxes:
        if float(box[2]) <= float(box[0]) or float(box[3]) <= float(box[1]):
            raise ValueError(f"degenerate proposal box {tuple(float(v) for v in box)}")
    levels = assign_pyramid_levels(boxes.tolist(), num_levels=len(pyramid))
    for lvl in sorted(set(levels)):
        idx = [i for i, l in enumerate(levels) if l == lvl]
        feat = pyramid[lvl]
        scaled = boxes[idx].to(feat.dtype) / strides[lvl]
        batch = feat[None].expand(len(idx), -1, -1, -1)
        out[idx] = _aligned_sample(batch, scaled, output_size, sampling_ratio)
    return out
