"""Pure mask set-operations shared by the data generator, losses, and metrics.

All functions here are framework-free: they accept numpy arrays (and, where
the math is plain arithmetic, torch tensors work too, preserving autograd).
"""

import numpy as np

__all__ = [
    "require_binary_mask",
    "require_soft_mask",
    "decompose_instances",
    "soft_xor_merge",
    "binarize",
    "mask_iou",
]


def require_binary_mask(mask, name="mask"):
    """Validate and return a 2-D {0,1} mask as uint8.

    Raises:
        ValueError: if the array is not 2-D, is empty, or holds values
            other than 0 and 1.
    """
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} must have height >= 1 and width >= 1")
    if not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0/1 values")
    return arr.astype(np.uint8)


def require_soft_mask(mask, name="mask"):
    """Validate and return a 2-D [0,1]-valued mask as float64."""
    arr = np.asarray(mask, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} must have height >= 1 and width >= 1")
    if not ((arr >= 0.0) & (arr <= 1.0)).all():
        raise ValueError(f"{name} values must lie in [0, 1]")
    return arr


def decompose_instances(masks):
    """Split each instance mask into its overlapping and non-overlapping parts.

    For instance i, the overlapping region is ``m_i AND (OR of all m_j, j != i)``
    and the non-overlapping region is the rest of ``m_i``, so the two regions
    partition the instance mask exactly.

    Args:
        masks: non-empty sequence of 2-D {0,1} masks sharing one shape.

    Returns:
        List of ``(overlap, nonoverlap)`` uint8 mask pairs, one per instance.

    Raises:
        ValueError: empty input or shape mismatch among the masks.
    """
    arrs = [require_binary_mask(m, f"masks[{i}]") for i, m in enumerate(masks)]
    if not arrs:
        raise ValueError("masks must be a non-empty sequence")
    shape = arrs[0].shape
    for i, a in enumerate(arrs):
        if a.shape != shape:
            raise ValueError(
                f"masks[{i}] has shape {a.shape}, expected {shape} like masks[0]"
            )
    stack = np.stack(arrs).astype(bool)
    coverage = stack.sum(axis=0)
    out = []
    for m in stack:
        others = (coverage - m.astype(coverage.dtype)) >= 1
        overlap = m & others
        nonoverlap = m & ~overlap
        out.append((overlap.astype(np.uint8), nonoverlap.astype(np.uint8)))
    return out


def soft_xor_merge(o, n):
    """Differentiable XOR-style merge of two [0,1] grids: ``o + n - 2*o*n``.

    The multilinear extension of logical XOR: it reduces to hard XOR on
    binary inputs, stays within [0,1] for inputs in [0,1], and is smooth in
    both arguments.  Works elementwise on numpy arrays and torch tensors.

    Raises:
        ValueError: shape mismatch.
    """
    if not hasattr(o, "shape"):
        o = np.asarray(o, dtype=np.float64)
    if not hasattr(n, "shape"):
        n = np.asarray(n, dtype=np.float64)
    if tuple(o.shape) != tuple(n.shape):
        raise ValueError(f"shape mismatch: {tuple(o.shape)} vs {tuple(n.shape)}")
    return o + n - 2.0 * o * n


def binarize(mask, threshold=0.5):
    """Threshold a soft mask to {0,1}: pixel is 1 iff value >= threshold.

    Raises:
        ValueError: threshold outside the open interval (0, 1).
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    arr = np.asarray(mask)
    return (arr >= threshold).astype(np.uint8)


def mask_iou(a, b):
    """Intersection-over-union of two binary masks of one shape.

    Returns 0.0 when both masks are empty (so metric aggregation never
    divides by zero).

    Raises:
        ValueError: shape mismatch.
    """
    am = require_binary_mask(a, "a").astype(bool)
    bm = require_binary_mask(b, "b").astype(bool)
    if am.shape != bm.shape:
        raise ValueError(f"shape mismatch: {am.shape} vs {bm.shape}")
    union = int(np.count_nonzero(am | bm))
    if union == 0:
        return 0.0
    inter = int(np.count_nonzero(am & bm))
    return inter / union
