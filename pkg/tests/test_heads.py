"""Mask/detection heads: shape contracts, symmetry, quick overfit."""

import pytest
import torch

from brnet.model import BilayerHeads, CoarseHead, MaskPrediction, RecombineHead


def test_coarse_head_shapes():
    head = CoarseHead()
    f = torch.randn(3, 256, 14, 14)
    cls_logits, box_delta, pred = head(f)
    assert cls_logits.shape == (3, 2)
    assert box_delta.shape == (3, 4)
    assert pred.prob.shape == (3, 28, 28)
    assert pred.pre_deconv.shape == (3, 256, 14, 14)
    assert pred.post_deconv.shape == (3, 256, 28, 28)
    assert pred.prob.min() >= 0.0 and pred.prob.max() <= 1.0


def test_bilayer_heads_shapes():
    heads = BilayerHeads()
    f = torch.randn(2, 256, 14, 14)
    o, n = heads(f, torch.randn(2, 256, 14, 14))
    for pred in (o, n):
        assert isinstance(pred, MaskPrediction)
        assert pred.prob.shape == (2, 28, 28)
        assert pred.pre_deconv.shape == (2, 256, 14, 14)
        assert pred.post_deconv.shape == (2, 256, 28, 28)


def test_recombine_head_shapes():
    head = RecombineHead()
    pred = head(
        torch.randn(2, 256, 14, 14),
        torch.randn(2, 256, 28, 28),
        torch.randn(2, 256, 28, 28),
    )
    assert pred.prob.shape == (2, 28, 28)
    assert pred.pre_deconv.shape == (2, 256, 14, 14)
    assert pred.post_deconv.shape == (2, 256, 28, 28)


def test_prob_is_sigmoid_of_logit():
    head = CoarseHead()
    pred = head.mask(torch.randn(2, 256, 14, 14))
    assert torch.allclose(pred.prob, torch.sigmoid(pred.logit))


def test_wrong_input_shapes_rejected():
    head = CoarseHead()
    with pytest.raises(ValueError):
        head(torch.randn(2, 256, 7, 7))
    with pytest.raises(ValueError):
        head(torch.randn(2, 128, 14, 14))
    rec = RecombineHead()
    with pytest.raises(ValueError):
        rec(
            torch.randn(2, 256, 14, 14),
            torch.randn(2, 256, 14, 14),  # f_o must already be 28x28
            torch.randn(2, 256, 28, 28),
        )


def test_zeroed_predictor_gives_half_probability():
    head = CoarseHead()
    with torch.no_grad():
        head.mask_stack.predictor.weight.zero_()
        head.mask_stack.predictor.bias.zero_()
    pred = head.mask(torch.randn(2, 256, 14, 14))
    assert torch.allclose(pred.prob, torch.full_like(pred.prob, 0.5))


def test_twin_heads_swap_under_weight_exchange():
    # overlap/nonoverlap stacks are architecturally identical: swapping their
    # weights swaps the outputs
    torch.manual_seed(0)
    heads = BilayerHeads()
    f_roi = torch.randn(2, 256, 14, 14)
    f_m = torch.randn(2, 256, 14, 14)
    o1, n1 = heads(f_roi, f_m)
    o_state = {k: v.clone() for k, v in heads.overlap_stack.state_dict().items()}
    n_state = {k: v.clone() for k, v in heads.nonoverlap_stack.state_dict().items()}
    heads.overlap_stack.load_state_dict(n_state)
    heads.nonoverlap_stack.load_state_dict(o_state)
    o2, n2 = heads(f_roi, f_m)
    assert torch.allclose(o1.prob, n2.prob, atol=1e-6)
    assert torch.allclose(n1.prob, o2.prob, atol=1e-6)


def test_mask_head_overfits_one_pattern():
    torch.manual_seed(1)
    head = CoarseHead()
    f = torch.randn(1, 256, 14, 14)
    target = torch.zeros(1, 28, 28)
    target[0, 6:20, 8:24] = 1.0
    opt = torch.optim.Adam(head.mask_stack.parameters(), lr=1e-3)
    for _ in range(60):
        opt.zero_grad()
        pred = head.mask(f)
        loss = torch.nn.functional.binary_cross_entropy_with_logits(
            pred.logit, target
        )
        loss.backward()
        opt.step()
    final = head.mask(f).prob
    iou = ((final > 0.5) & (target > 0.5)).sum() / (
        ((final > 0.5) | (target > 0.5)).sum().clamp(min=1)
    )
    assert iou > 0.8
