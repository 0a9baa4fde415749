"""Training objectives.

The decomposition, refined-mask and consistency losses all share one nested
averaging scheme: a pixel-mean BCE per instance, averaged over the instances
of each image, averaged over images that contributed at least one instance.
"""

from dataclasses import dataclass

import torch

from .mask_ops import soft_xor_merge

PROB_EPS = 1e-7


@dataclass
class LossWeights:
    """Trade-off weights for the three auxiliary terms."""

    lambda_dec: float = 1.0
    lambda_rmask: float = 1.0
    lambda_cons: float = 1.0

    def __post_init__(self):
        for name in ("lambda_dec", "lambda_rmask", "lambda_cons"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass
class LossDiagnostics:
    """Counters for degenerate situations that yield zero-loss terms."""

    empty_cls_batches: int = 0
    unmatched_instances: int = 0


@dataclass
class LossBundle:
    l_cls: torch.Tensor
    l_reg: torch.Tensor
    l_cmask: torch.Tensor
    l_coarse: torch.Tensor
    l_dec: torch.Tensor
    l_rmask: torch.Tensor
    l_cons: torch.Tensor
    total: torch.Tensor

    def floats(self):
        """Plain-float view for logging."""
        return {
            "l_cls": float(self.l_cls.detach()),
            "l_reg": float(self.l_reg.detach()),
            "l_cmask": float(self.l_cmask.detach()),
            "l_coarse": float(self.l_coarse.detach()),
            "l_dec": float(self.l_dec.detach()),
            "l_rmask": float(self.l_rmask.detach()),
            "l_cons": float(self.l_cons.detach()),
            "total": float(self.total.detach()),
        }


def smooth_l1(x):
    """0.5 x^2 below |x| = 1, |x| - 0.5 beyond (elementwise)."""
    ax = x.abs()
    return torch.where(ax < 1.0, 0.5 * x * x, ax - 0.5)


def cls_loss(logits, labels, diagnostics=None):
    """Cross-entropy over {background, worm}, averaged over matched RoIs."""
    if logits.shape[0] == 0:
        if diagnostics is not None:
            diagnostics.empty_cls_batches += 1
        return logits.sum() * 0.0
    return torch.nn.functional.cross_entropy(logits, labels)


def reg_loss(pred_delta, target_delta):
    """Smooth-L1 summed over the 4 box coordinates, averaged over RoIs."""
    if pred_delta.shape[0] == 0:
        return pred_delta.sum() * 0.0
    return smooth_l1(pred_delta - target_delta).sum(dim=1).mean()


def _bce_elem(pred, target, from_logits=False):
    # the logit form is the same quantity computed stably: values agree to
    # float precision until the clamp saturates, and its gradient (p - t in
    # logit space) never dies, so training can always recover
    if from_logits:
        return torch.nn.functional.binary_cross_entropy_with_logits(
            pred, target, reduction="none"
        )
    p = pred.clamp(PROB_EPS, 1.0 - PROB_EPS)
    return -(target * torch.log(p) + (1.0 - target) * torch.log(1.0 - p))


def mask_bce(pred, target, from_logits=False):
    """Pixel-mean binary cross entropy; accepts soft targets in [0, 1]."""
    if tuple(pred.shape) != tuple(target.shape):
        raise ValueError(f"shape mismatch {tuple(pred.shape)} vs {tuple(target.shape)}")
    return _bce_elem(pred, target, from_logits).mean()


def coarse_loss(l_cls, l_reg, l_cmask):
    return l_cls + l_reg + l_cmask


def _per_instance_bce(pred_stack, target_stack, from_logits=False):
    """(A, h, w) stacks -> (A,) pixel-mean BCE per instance."""
    if tuple(pred_stack.shape) != tuple(target_stack.shape):
        raise ValueError(
            f"shape mismatch {tuple(pred_stack.shape)} vs {tuple(target_stack.shape)}"
        )
    return _bce_elem(pred_stack, target_stack, from_logits).mean(dim=(1, 2))


def _nested_image_mean(per_image_terms):
    """Average per-image scalars; images without instances are excluded."""
    if not per_image_terms:
        return torch.tensor(0.0)
    return sum(per_image_terms) / len(per_image_terms)


def dec_loss(overlap_preds, overlap_targets, nonoverlap_preds, nonoverlap_targets,
             from_logits=False):
    """Decomposition loss.

    Args are lists over images; entry k holds (A_k, 28, 28) tensors. Images
    with A_k = 0 do not contribute.
    """
    terms = []
    for o_p, o_t, n_p, n_t in zip(
        overlap_preds, overlap_targets, nonoverlap_preds, nonoverlap_targets
    ):
        if o_p.shape[0] == 0:
            continue
        per_inst = _per_instance_bce(o_p, o_t, from_logits) + _per_instance_bce(
            n_p, n_t, from_logits
        )
        terms.append(per_inst.mean())
    return _nested_image_mean(terms)


def rmask_loss(recombined_preds, amodal_targets, from_logits=False):
    """Refined-mask loss; same nesting with a single BCE per instance."""
    terms = []
    for r_p, m_t in zip(recombined_preds, amodal_targets):
        if r_p.shape[0] == 0:
            continue
        terms.append(_per_instance_bce(r_p, m_t, from_logits).mean())
    return _nested_image_mean(terms)


def cons_loss(recombined_preds, overlap_preds, nonoverlap_preds, from_logits=False):
    """Consistency loss: the recombined mask is pulled toward the soft-XOR
    merge of the two sub-region predictions. The merge target is detached so
    it shapes only the recombined head.

    `from_logits` applies to recombined_preds only; the overlap/nonoverlap
    entries are always probabilities (the merge needs them in [0, 1])."""
    terms = []
    for r_p, o_p, n_p in zip(recombined_preds, overlap_preds, nonoverlap_preds):
        if r_p.shape[0] == 0:
            continue
        merged = soft_xor_merge(o_p, n_p).detach()
        terms.append(_per_instance_bce(r_p, merged, from_logits).mean())
    return _nested_image_mean(terms)


def total_loss(l_cls, l_reg, l_cmask, l_dec, l_rmask, l_cons, weights: LossWeights):
    """Assemble the weighted bundle."""
    l_coarse = coarse_loss(l_cls, l_reg, l_cmask)
    total = (
        l_coarse
        + weights.lambda_dec * l_dec
        + weights.lambda_rmask * l_rmask
        + weights.lambda_cons * l_cons
    )
    return LossBundle(
        l_cls=l_cls,
        l_reg=l_reg,
        l_cmask=l_cmask,
        l_coarse=l_coarse,
        l_dec=l_dec,
        l_rmask=l_rmask,
        l_cons=l_cons,
        total=total,
    )
