"""The full two-stage network: pyramid, proposals, and all mask heads.

Training consumes per-image target dicts with keys "boxes" (N, 4),
"amodal"/"overlap"/"nonoverlap" (N, H, W) float tensors. Mask targets for a
proposal are produced by bilinearly cropping the matching ground-truth mask
to the proposal box at 28x28, so they are soft near edges.
"""

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from ..config import ModelConfig
from ..losses import (
    LossDiagnostics,
    LossWeights,
    cls_loss,
    dec_loss,
    mask_bce,
    reg_loss,
    rmask_loss,
    cons_loss,
    total_loss,
)
from .backbone import FeaturePyramid
from .heads import BilayerHeads, CoarseHead, RecombineHead
from .roi_align import extract_roi_features, roi_align_single
from .rpn import RegionProposer, box_iou_matrix, clip_boxes, decode_boxes, encode_boxes, greedy_nms

FG_IOU = 0.5


@dataclass
class Detection:
    """One predicted instance, masks pasted to full image size."""

    bbox: tuple
    score: float
    amodal_mask: np.ndarray
    overlap_mask: np.ndarray = None
    nonoverlap_mask: np.ndarray = None


def paste_mask(mask, box, image_size, threshold=0.5):
    """Place a 28x28 soft mask into the image at `box` and binarize."""
    h, w = image_size
    x0 = max(int(np.floor(float(box[0]))), 0)
    y0 = max(int(np.floor(float(box[1]))), 0)
    x1 = min(int(np.ceil(float(box[2]))), w)
    y1 = min(int(np.ceil(float(box[3]))), h)
    out = np.zeros((h, w), dtype=np.uint8)
    if x1 <= x0 or y1 <= y0:
        return out
    resized = F.interpolate(
        mask[None, None], size=(y1 - y0, x1 - x0), mode="bilinear", align_corners=False
    )[0, 0]
    out[y0:y1, x0:x1] = (resized >= threshold).cpu().numpy().astype(np.uint8)
    return out


class BRNet(nn.Module):
    """Coarse stage plus optional bilayer and recombination branches."""

    def __init__(self, config: ModelConfig = None):
        super().__init__()
        self.config = config if config is not None else ModelConfig()
        cfg = self.config
        self.pyramid = FeaturePyramid(
            widths=cfg.widths,
            use_attention=cfg.use_attention,
            attention_mid_channels=cfg.attention_mid_channels,
            attention_reduction=cfg.attention_reduction,
            smooth_kernel=cfg.fpn_smooth_kernel,
        )
        self.proposer = RegionProposer(
            nms_iou=cfg.rpn_nms_iou, top_n=cfg.rpn_top_n
        )
        self.coarse_head = CoarseHead()
        self.bilayer = BilayerHeads() if cfg.use_overlap_head else None
        self.recombine = RecombineHead() if cfg.use_recombine else None

    def _image_pyramids(self, images):
        feats = self.pyramid(images)
        batch = images.shape[0]
        return [[level[b] for level in feats] for b in range(batch)]

    @staticmethod
    def _crop_mask_targets(masks, matched, boxes):
        """Ground-truth masks cropped to proposal boxes -> binary (M, 28, 28).

        Crops are re-binarized at 0.5: bilinear resampling leaves fractional
        values on boundary pixels, and those would put an entropy floor under
        the mask BCE that no prediction can get below.
        """
        with torch.no_grad():
            crops = [
                roi_align_single(masks[g][None].float(), box, output_size=28)[0]
                for g, box in zip(matched.tolist(), boxes)
            ]
        if not crops:
            return masks.new_zeros((0, 28, 28))
        return (torch.stack(crops) >= 0.5).float()

    def training_losses(
        self,
        images,
        targets,
        proposal_mode="ground_truth",
        weights: LossWeights = None,
        diagnostics: LossDiagnostics = None,
    ):
        """Loss bundle for one batch.

        In rpn proposal mode the proposal-stage objectness/regression losses
        are folded into l_cls/l_reg, so the bundle's total invariant is
        unchanged. Ground-truth mode is the pure head objective.
        """
        weights = weights if weights is not None else LossWeights()
        image_size = tuple(images.shape[-2:])
        per_image = self._image_pyramids(images)

        all_logits, all_labels = [], []
        all_deltas, all_delta_targets = [], []
        coarse_preds, coarse_targets = [], []
        o_preds, o_probs, o_tgts = [], [], []
        n_preds, n_probs, n_tgts = [], [], []
        r_preds, r_amodal = [], []
        rpn_obj, rpn_reg = [], []

        for pyr, tgt in zip(per_image, targets):
            gt_boxes = tgt["boxes"]
            if proposal_mode == "ground_truth":
                props = gt_boxes.float()
                labels = torch.ones(props.shape[0], dtype=torch.long)
                matched = torch.arange(props.shape[0])
            else:
                head_out = self.proposer.head_outputs(pyr)
                props, _ = self.proposer.propose(
                    pyr, image_size, "rpn", head_out=head_out
                )
                obj_l, reg_l = self.proposer.losses(
                    pyr, image_size, gt_boxes, head_out=head_out
                )
                rpn_obj.append(obj_l)
                rpn_reg.append(reg_l)
                props = torch.cat([props, gt_boxes.float()])
                iou = box_iou_matrix(props, gt_boxes.float())
                best, matched = iou.max(dim=1)
                labels = (best >= FG_IOU).long()

            rois = extract_roi_features(pyr, props)
            logits, deltas = self.coarse_head.detect(rois)
            all_logits.append(logits)
            all_labels.append(labels)

            fg = torch.nonzero(labels == 1, as_tuple=True)[0]
            if diagnostics is not None:
                hit = set(matched[fg].tolist())
                diagnostics.unmatched_instances += sum(
                    1 for g in range(gt_boxes.shape[0]) if g not in hit
                )
            if fg.numel() == 0:
                continue
            fg_props = props[fg]
            fg_matched = matched[fg]
            all_deltas.append(deltas[fg])
            all_delta_targets.append(
                encode_boxes(fg_props, gt_boxes.float()[fg_matched])
            )

            rois_fg = rois[fg]
            coarse = self.coarse_head.mask(rois_fg)
            amodal_t = self._crop_mask_targets(tgt["amodal"], fg_matched, fg_props)
            coarse_preds.append(coarse.logit)
            coarse_targets.append(amodal_t)

            if self.bilayer is not None:
                o, n = self.bilayer(rois_fg, coarse.pre_deconv)
                o_preds.append(o.logit)
                o_probs.append(o.prob)
                o_tgts.append(
                    self._crop_mask_targets(tgt["overlap"], fg_matched, fg_props)
                )
                if self.config.use_nonoverlap_head:
                    n_preds.append(n.logit)
                    n_probs.append(n.prob)
                    n_tgts.append(
                        self._crop_mask_targets(tgt["nonoverlap"], fg_matched, fg_props)
                    )
                if self.recombine is not None:
                    r = self.recombine(rois_fg, o.post_deconv, n.post_deconv)
                    r_preds.append(r.logit)
                    r_amodal.append(amodal_t)

        zero = images.sum() * 0.0
        logits = torch.cat(all_logits) if all_logits else images.new_zeros((0, 2))
        labels = torch.cat(all_labels) if all_labels else torch.zeros(0, dtype=torch.long)
        l_cls = cls_loss(logits, labels, diagnostics)
        l_reg = (
            reg_loss(torch.cat(all_deltas), torch.cat(all_delta_targets))
            if all_deltas
            else zero
        )
        l_cmask = (
            mask_bce(torch.cat(coarse_preds), torch.cat(coarse_targets),
                     from_logits=True)
            if coarse_preds
            else zero
        )
        if rpn_obj:
            l_cls = l_cls + torch.stack(rpn_obj).mean()
            l_reg = l_reg + torch.stack(rpn_reg).mean()

        if self.bilayer is not None and self.config.use_nonoverlap_head:
            l_dec = dec_loss(o_preds, o_tgts, n_preds, n_tgts, from_logits=True)
        elif self.bilayer is not None:
            l_dec = rmask_loss(o_preds, o_tgts, from_logits=True)
        else:
            l_dec = zero
        l_rmask = (
            rmask_loss(r_preds, r_amodal, from_logits=True)
            if self.recombine is not None
            else zero
        )
        l_cons = (
            cons_loss(r_preds, o_probs, n_probs, from_logits=True)
            if self.recombine is not None
            else zero
        )
        return total_loss(l_cls, l_reg, l_cmask, l_dec, l_rmask, l_cons, weights)

    @torch.no_grad()
    def predict(self, images, proposal_mode="rpn", gt_boxes=None):
        """Per-image detections with full-size binary masks.

        Args:
            images: (B, 1, H, W) tensor.
            proposal_mode: "rpn" or "ground_truth".
            gt_boxes: list of (N, 4) tensors, required in ground_truth mode.
        """
        was_training = self.training
        self.eval()
        try:
            image_size = tuple(images.shape[-2:])
            per_image = self._image_pyramids(images)
            results = []
            for b, pyr in enumerate(per_image):
                boxes_in = gt_boxes[b] if gt_boxes is not None else None
                props, _ = self.proposer.propose(
                    pyr, image_size, proposal_mode, gt_boxes=boxes_in
                )
                if props.shape[0] == 0:
                    results.append([])
                    continue
                rois = extract_roi_features(pyr, props)
                logits, deltas = self.coarse_head.detect(rois)
                scores = torch.softmax(logits, dim=1)[:, 1]
                refined = clip_boxes(decode_boxes(props, deltas), image_size)
                wide = (refined[:, 2] - refined[:, 0] >= 1.0) & (
                    refined[:, 3] - refined[:, 1] >= 1.0
                )
                keep = wide & (scores >= self.config.score_threshold)
                refined, scores = refined[keep], scores[keep]
                if refined.shape[0] == 0:
                    results.append([])
                    continue
                kept = greedy_nms(refined, scores, self.config.detection_nms_iou)
                refined, scores = refined[kept], scores[kept]

                rois2 = extract_roi_features(pyr, refined)
                coarse = self.coarse_head.mask(rois2)
                overlap = nonoverlap = None
                final = coarse.prob
                if self.bilayer is not None:
                    o, n = self.bilayer(rois2, coarse.pre_deconv)
                    overlap, nonoverlap = o.prob, n.prob
                    if self.recombine is not None:
                        final = self.recombine(
                            rois2, o.post_deconv, n.post_deconv
                        ).prob
                dets = []
                for j in range(refined.shape[0]):
                    box = tuple(float(v) for v in refined[j])
                    dets.append(
                        Detection(
                            bbox=box,
                            score=float(scores[j]),
                            amodal_mask=paste_mask(final[j], box, image_size),
                            overlap_mask=(
                                paste_mask(overlap[j], box, image_size)
                                if overlap is not None
                                else None
                            ),
                            nonoverlap_mask=(
                                paste_mask(nonoverlap[j], box, image_size)
                                if nonoverlap is not None
                                else None
                            ),
                        )
                    )
                results.append(dets)
            return results
        finally:
            self.train(was_training)
