"""Anchor-based region proposals plus shared box utilities.

Boxes everywhere are (x0, y0, x1, y1) in image pixels. The proposer has a
"ground_truth" passthrough mode that returns the provided boxes verbatim
with score 1.0, which makes the downstream pipeline deterministic and lets
heads and losses be verified independently of detection quality.
"""

import torch
import torch.nn as nn
import torch.nn.functional as F

LOG_SCALE_CLAMP = 4.0


def box_iou_matrix(a, b):
    """Pairwise IoU of (N, 4) and (M, 4) boxes -> (N, M)."""
    area_a = (a[:, 2] - a[:, 0]).clamp(min=0) * (a[:, 3] - a[:, 1]).clamp(min=0)
    area_b = (b[:, 2] - b[:, 0]).clamp(min=0) * (b[:, 3] - b[:, 1]).clamp(min=0)
    lt = torch.maximum(a[:, None, :2], b[None, :, :2])
    rb = torch.minimum(a[:, None, 2:], b[None, :, 2:])
    wh = (rb - lt).clamp(min=0)
    inter = wh[..., 0] * wh[..., 1]
    union = area_a[:, None] + area_b[None, :] - inter
    return torch.where(union > 0, inter / union, torch.zeros_like(inter))


def greedy_nms(boxes, scores, iou_threshold):
    """Indices of kept boxes, in descending score order (stable on ties)."""
    order = torch.argsort(scores, descending=True, stable=True)
    keep = []
    while order.numel() > 0:
        i = order[0]
        keep.append(int(i))
        if order.numel() == 1:
            break
        rest = order[1:]
        ious = box_iou_matrix(boxes[i][None], boxes[rest])[0]
        order = rest[ious <= iou_threshold]
    return torch.tensor(keep, dtype=torch.long, device=boxes.device)


def encode_boxes(anchors, targets):
    """Regression deltas (dx, dy, dw, dh) that carry anchors onto targets."""
    aw = anchors[:, 2] - anchors[:, 0]
    ah = anchors[:, 3] - anchors[:, 1]
    acx = anchors[:, 0] + 0.5 * aw
    acy = anchors[:, 1] + 0.5 * ah
    tw = targets[:, 2] - targets[:, 0]
    th = targets[:, 3] - targets[:, 1]
    tcx = targets[:, 0] + 0.5 * tw
    tcy = targets[:, 1] + 0.5 * th
    return torch.stack(
        [
            (tcx - acx) / aw,
            (tcy - acy) / ah,
            torch.log(tw / aw),
            torch.log(th / ah),
        ],
        dim=1,
    )


def decode_boxes(anchors, deltas):
    """Inverse of encode_boxes, with the log-scale terms clamped."""
    aw = anchors[:, 2] - anchors[:, 0]
    ah = anchors[:, 3] - anchors[:, 1]
    acx = anchors[:, 0] + 0.5 * aw
    acy = anchors[:, 1] + 0.5 * ah
    cx = acx + deltas[:, 0] * aw
    cy = acy + deltas[:, 1] * ah
    w = aw * torch.exp(deltas[:, 2].clamp(max=LOG_SCALE_CLAMP))
    h = ah * torch.exp(deltas[:, 3].clamp(max=LOG_SCALE_CLAMP))
    return torch.stack([cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h], dim=1)


def clip_boxes(boxes, image_size):
    h, w = image_size
    return torch.stack(
        [
            boxes[:, 0].clamp(0.0, float(w)),
            boxes[:, 1].clamp(0.0, float(h)),
            boxes[:, 2].clamp(0.0, float(w)),
            boxes[:, 3].clamp(0.0, float(h)),
        ],
        dim=1,
    )


class RegionProposer(nn.Module):
    """Objectness/regression heads over the pyramid plus proposal selection.

    Negative anchors for the objectness loss are chosen by deterministic
    hard mining (highest-scoring negatives) rather than random sampling, so
    training is reproducible without a sampler state.
    """

    def __init__(
        self,
        in_channels=256,
        strides=(4, 8, 16, 32),
        scales=(0.5, 1.0, 2.0),
        ratios=(0.5, 1.0, 2.0),
        anchor_base=8.0,
        nms_iou=0.7,
        top_n=64,
        pre_nms_top_n=512,
    ):
        super().__init__()
        self.strides = tuple(strides)
        self.scales = tuple(scales)
        self.ratios = tuple(ratios)
        self.anchor_base = float(anchor_base)
        self.nms_iou = float(nms_iou)
        self.top_n = int(top_n)
        self.pre_nms_top_n = int(pre_nms_top_n)
        a = len(self.scales) * len(self.ratios)
        self.shared = nn.Conv2d(in_channels, in_channels, 3, padding=1)
        self.objectness = nn.Conv2d(in_channels, a, 1)
        self.deltas = nn.Conv2d(in_channels, 4 * a, 1)

    def anchors_for_level(self, feat_hw, stride, device, dtype=torch.float32):
        """(H*W*A, 4) anchors centered on feature cells of one level."""
        h, w = feat_hw
        base = self.anchor_base * stride
        shapes = []
        for scale in self.scales:
            for ratio in self.ratios:
                bw = base * scale / ratio**0.5
                bh = base * scale * ratio**0.5
                shapes.append((bw, bh))
        shapes = torch.tensor(shapes, dtype=dtype, device=device)
        ys = (torch.arange(h, dtype=dtype, device=device) + 0.5) * stride
        xs = (torch.arange(w, dtype=dtype, device=device) + 0.5) * stride
        cy, cx = torch.meshgrid(ys, xs, indexing="ij")
        centers = torch.stack([cx, cy], dim=-1).reshape(-1, 1, 2)
        half = 0.5 * shapes[None, :, :]
        boxes = torch.cat([centers - half, centers + half], dim=-1)
        return boxes.reshape(-1, 4)

    def head_outputs(self, pyramid):
        """Per level: ((H*W*A,) objectness logits, (H*W*A, 4) deltas)."""
        outs = []
        for feat in pyramid:
            x = torch.relu(self.shared(feat[None] if feat.ndim == 3 else feat))
            obj = self.objectness(x)
            dl = self.deltas(x)
            a = obj.shape[1]
            obj = obj.permute(0, 2, 3, 1).reshape(-1)
            dl = dl.permute(0, 2, 3, 1).reshape(-1, 4)
            outs.append((obj, dl))
        return outs

    def _flat_anchors(self, pyramid, device):
        per_level = [
            self.anchors_for_level(feat.shape[-2:], s, device)
            for feat, s in zip(pyramid, self.strides)
        ]
        return torch.cat(per_level, dim=0)

    def propose(self, pyramid, image_size, mode, gt_boxes=None, head_out=None):
        """Proposal boxes and scores for one image.

        Args:
            pyramid: list of (C, H, W) feature tensors.
            image_size: (H, W) of the input image.
            mode: "rpn" or "ground_truth".
            gt_boxes: (N, 4) tensor, required in ground_truth mode.
            head_out: optional precomputed head_outputs(pyramid).

        Returns:
            (boxes (M, 4), scores (M,)) with boxes clipped to the image.
        """
        if mode == "ground_truth":
            if gt_boxes is None or len(gt_boxes) == 0:
                raise ValueError("ground_truth proposal mode requires gt boxes")
            boxes = torch.as_tensor(gt_boxes, dtype=torch.float32)
            return boxes, torch.ones(boxes.shape[0])
        if mode != "rpn":
            raise ValueError(f"unknown proposal mode {mode!r}")
        if head_out is None:
            head_out = self.head_outputs(pyramid)
        device = head_out[0][0].device
        anchors = self._flat_anchors(pyramid, device)
        obj = torch.cat([o for o, _ in head_out])
        deltas = torch.cat([d for _, d in head_out])
        with torch.no_grad():
            scores = torch.sigmoid(obj)
            boxes = clip_boxes(decode_boxes(anchors, deltas), image_size)
            wide = (boxes[:, 2] - boxes[:, 0] >= 1.0) & (boxes[:, 3] - boxes[:, 1] >= 1.0)
            boxes, scores = boxes[wide], scores[wide]
            if boxes.shape[0] > self.pre_nms_top_n:
                top = torch.argsort(scores, descending=True, stable=True)[: self.pre_nms_top_n]
                boxes, scores = boxes[top], scores[top]
            if boxes.shape[0] == 0:
                return boxes, scores
            keep = greedy_nms(boxes, scores, self.nms_iou)[: self.top_n]
        return boxes[keep], scores[keep]

    def losses(self, pyramid, image_size, gt_boxes, head_out=None):
        """Objectness BCE and box smooth-L1 for one image's anchors."""
        from ..losses import smooth_l1

        if head_out is None:
            head_out = self.head_outputs(pyramid)
        device = head_out[0][0].device
        anchors = self._flat_anchors(pyramid, device)
        obj = torch.cat([o for o, _ in head_out])
        deltas = torch.cat([d for _, d in head_out])
        gt = torch.as_tensor(gt_boxes, dtype=anchors.dtype, device=device)
        if gt.numel() == 0:
            return obj.sum() * 0.0, obj.sum() * 0.0

        iou = box_iou_matrix(anchors, gt)
        best_iou, best_gt = iou.max(dim=1)
        labels = torch.full((anchors.shape[0],), -1, dtype=torch.long, device=device)
        labels[best_iou <= 0.3] = 0
        labels[best_iou >= 0.7] = 1
        # every gt keeps its single best anchor as positive
        labels[iou.argmax(dim=0)] = 1
        best_gt[iou.argmax(dim=0)] = torch.arange(gt.shape[0], device=device)

        pos = torch.nonzero(labels == 1, as_tuple=True)[0]
        neg = torch.nonzero(labels == 0, as_tuple=True)[0]
        n_neg = min(max(2 * pos.numel(), 16), neg.numel())
        hardest = torch.argsort(obj[neg], descending=True, stable=True)[:n_neg]
        neg = neg[hardest]

        sel = torch.cat([pos, neg])
        target = (labels[sel] == 1).to(obj.dtype)
        obj_loss = F.binary_cross_entropy_with_logits(obj[sel], target)
        if pos.numel() == 0:
            reg_loss = obj.sum() * 0.0
        else:
            enc = encode_boxes(anchors[pos], gt[best_gt[pos]])
            reg_loss = smooth_l1(deltas[pos] - enc).mean()
        return obj_loss, reg_loss
