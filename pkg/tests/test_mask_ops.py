"""Mask algebra against per-pixel brute-force oracles."""

import numpy as np
import pytest
import torch

from brnet.mask_ops import (
    binarize,
    decompose_instances,
    mask_iou,
    require_binary_mask,
    require_soft_mask,
    soft_xor_merge,
)

from conftest import random_binary_masks


def oracle_decompose(amodal_masks):
    """Per-pixel loop: overlap = covered by any other instance."""
    n = len(amodal_masks)
    h, w = amodal_masks[0].shape
    overlaps, nonoverlaps = [], []
    for k in range(n):
        o = np.zeros((h, w), dtype=np.uint8)
        for y in range(h):
            for x in range(w):
                if not amodal_masks[k][y, x]:
                    continue
                if any(amodal_masks[j][y, x] for j in range(n) if j != k):
                    o[y, x] = 1
        overlaps.append(o)
        nonoverlaps.append((amodal_masks[k] & ~o.astype(bool)).astype(np.uint8))
    return overlaps, nonoverlaps


def test_decompose_matches_bruteforce():
    rng = np.random.default_rng(0)
    for _ in range(25):
        n = int(rng.integers(2, 6))
        masks = random_binary_masks(rng, n, 16, 16)
        pairs = decompose_instances(masks)
        want_o, want_n = oracle_decompose(masks)
        for k, (got_o, got_n) in enumerate(pairs):
            assert np.array_equal(got_o, want_o[k])
            assert np.array_equal(got_n, want_n[k])


def test_decompose_partition_invariant():
    rng = np.random.default_rng(1)
    for _ in range(50):
        masks = random_binary_masks(rng, int(rng.integers(1, 5)), 12, 12)
        for a, (o, nn) in zip(masks, decompose_instances(masks)):
            assert np.array_equal(o | nn, a)
            assert not np.any(o & nn)


def test_decompose_single_instance_has_no_overlap():
    m = np.zeros((8, 8), dtype=np.uint8)
    m[2:5, 3:7] = 1
    (overlap, nonoverlap), = decompose_instances([m])
    assert overlap.sum() == 0
    assert np.array_equal(nonoverlap, m)


def test_soft_xor_binary_truth_table():
    a = np.array([0.0, 0.0, 1.0, 1.0])
    b = np.array([0.0, 1.0, 0.0, 1.0])
    assert np.array_equal(soft_xor_merge(a, b), np.array([0.0, 1.0, 1.0, 0.0]))


def test_soft_xor_identities():
    rng = np.random.default_rng(2)
    for _ in range(200):
        m = rng.random((6, 6))
        zero = np.zeros_like(m)
        assert np.allclose(soft_xor_merge(m, zero), m, atol=1e-12)
        hard = (m > 0.5).astype(float)
        assert np.allclose(soft_xor_merge(hard, hard), 0.0, atol=1e-12)
        other = rng.random((6, 6))
        assert np.allclose(
            soft_xor_merge(m, other), soft_xor_merge(other, m), atol=1e-12
        )


def test_soft_xor_range_and_torch_parity():
    rng = np.random.default_rng(3)
    a, b = rng.random((5, 5)), rng.random((5, 5))
    out = soft_xor_merge(a, b)
    assert out.min() >= 0.0 and out.max() <= 1.0
    t = soft_xor_merge(torch.from_numpy(a), torch.from_numpy(b))
    assert np.allclose(t.numpy(), out, atol=1e-12)


def test_soft_xor_gradient():
    a = torch.rand(4, 4, dtype=torch.float64, requires_grad=True)
    b = torch.rand(4, 4, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(soft_xor_merge, (a, b), eps=1e-6)


def test_validators_reject_bad_inputs():
    with pytest.raises(ValueError):
        require_binary_mask(np.array([[0, 2]], dtype=np.uint8))
    with pytest.raises(ValueError):
        require_binary_mask(np.zeros((3,), dtype=np.uint8))
    with pytest.raises(ValueError):
        require_soft_mask(np.array([[0.2, 1.3]]))
    with pytest.raises(ValueError):
        require_soft_mask(np.array([[np.nan, 0.5]]))


def test_binarize_threshold():
    m = np.array([[0.2, 0.5, 0.7]])
    assert np.array_equal(binarize(m), np.array([[0, 1, 1]], dtype=np.uint8))


def test_mask_iou_known_values():
    a = np.zeros((4, 4), dtype=np.uint8)
    b = np.zeros((4, 4), dtype=np.uint8)
    a[:2] = 1
    b[1:3] = 1
    assert mask_iou(a, b) == pytest.approx(4 / 12)
    assert mask_iou(a, a) == 1.0
    assert mask_iou(np.zeros_like(a), np.zeros_like(b)) == 0.0
