"""RoI feature extraction: interpolation oracle, gradients, level routing."""

import numpy as np
import pytest
import torch

from brnet.model import assign_pyramid_levels, extract_roi_features, roi_align_single


def test_constant_feature_map_samples_constant():
    feat = torch.full((3, 16, 16), 2.5)
    out = roi_align_single(feat, torch.tensor([1.0, 2.0, 9.0, 13.0]), output_size=7)
    assert out.shape == (3, 7, 7)
    assert torch.allclose(out, torch.full_like(out, 2.5))


def test_full_extent_box_equals_average_pooling():
    # with the box covering the whole map and output_size dividing the side,
    # each output cell averages one aligned input block exactly
    torch.manual_seed(0)
    for side, out_size in [(28, 14), (56, 14), (28, 7)]:
        feat = torch.randn(2, side, side)
        box = torch.tensor([0.0, 0.0, float(side), float(side)])
        got = roi_align_single(feat, box, output_size=out_size)
        want = torch.nn.functional.avg_pool2d(
            feat[None], kernel_size=side // out_size
        )[0]
        assert torch.allclose(got, want, atol=1e-5), f"side={side} out={out_size}"


def test_subpixel_shift_interpolates_linearly():
    # a horizontal ramp must sample to the box-center x coordinate
    w = 16
    ramp = torch.arange(w, dtype=torch.float32).expand(1, w, w).clone()
    box = torch.tensor([2.0, 2.0, 10.0, 10.0])
    out = roi_align_single(ramp, box, output_size=4)
    # output column j covers x in [2 + 2j, 2 + 2(j+1)); its center is 3 + 2j
    want = torch.tensor([3.0, 5.0, 7.0, 9.0]) - 0.5
    assert torch.allclose(out[0, 0], want, atol=1e-5)


def test_degenerate_box_rejected():
    feat = torch.randn(1, 8, 8)
    with pytest.raises(ValueError):
        roi_align_single(feat, torch.tensor([4.0, 2.0, 4.0, 6.0]))
    with pytest.raises(ValueError):
        roi_align_single(feat, torch.tensor([5.0, 2.0, 3.0, 6.0]))


def test_finite_difference_gradient():
    torch.manual_seed(1)
    feat = torch.randn(1, 8, 8, dtype=torch.double, requires_grad=True)
    box = torch.tensor([1.0, 1.5, 6.0, 6.5], dtype=torch.double)

    def fn(f):
        return roi_align_single(f, box, output_size=4, sampling_ratio=2)

    assert torch.autograd.gradcheck(fn, (feat,), eps=1e-6, atol=1e-7, rtol=1e-4)


def test_level_assignment_by_box_size():
    boxes = torch.tensor(
        [
            [0.0, 0.0, 16.0, 16.0],    # small -> finest level
            [0.0, 0.0, 56.0, 56.0],    # canonical -> level 1
            [0.0, 0.0, 112.0, 112.0],  # doubled -> level 2
            [0.0, 0.0, 500.0, 500.0],  # huge -> clipped to coarsest
        ]
    )
    levels = assign_pyramid_levels(boxes, num_levels=4)
    assert list(levels) == [0, 1, 2, 3]


def test_extract_groups_by_level_and_keeps_order():
    torch.manual_seed(2)
    pyramid = [torch.randn(5, 64 // 2**i, 64 // 2**i) for i in range(4)]
    boxes = torch.tensor(
        [
            [0.0, 0.0, 200.0, 200.0],
            [8.0, 8.0, 24.0, 24.0],
            [0.0, 0.0, 100.0, 120.0],
        ]
    )
    out = extract_roi_features(pyramid, boxes)
    assert out.shape == (3, 5, 14, 14)
    levels = assign_pyramid_levels(boxes, num_levels=4)
    strides = (4, 8, 16, 32)
    for i in range(3):
        lv = int(levels[i])
        solo = roi_align_single(pyramid[lv], boxes[i] / strides[lv])
        assert torch.allclose(out[i], solo, atol=1e-6)


def test_empty_boxes_give_empty_features():
    pyramid = [torch.randn(5, 16 // 2**i, 16 // 2**i) for i in range(4)]
    out = extract_roi_features(pyramid, torch.zeros((0, 4)))
    assert out.shape == (0, 5, 14, 14)
