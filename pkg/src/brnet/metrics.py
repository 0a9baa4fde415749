"""Evaluation: greedy matching, precision-recall, AP family, and mIoU.

Matching operates on full-image amodal masks, not boxes. AP uses all-point
interpolation (monotone precision envelope, exact Riemann sum over recall
increments) and the headline AP averages thresholds 0.50:0.05:0.95.
"""

from dataclasses import dataclass, field

import numpy as np

IOU_GRID = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))


@dataclass
class MatchTable:
    """Greedy matching result for one image at one IoU threshold."""

    order: list          # detection indices, descending score
    scores: list
    matched: list        # gt index or None per entry of `order`
    tp: list             # bool per entry of `order`
    fn: int
    gt_count: int


@dataclass
class MetricsReport:
    ap: float
    ap50: float
    ap75: float
    miou: float
    pr_curve: list = field(default_factory=list)   # (recall, precision) at IoU 0.5

    def as_dict(self):
        return {"ap": self.ap, "ap50": self.ap50, "ap75": self.ap75, "miou": self.miou}


def _mask_iou_counts(a, b):
    inter = int(np.logical_and(a, b).sum())
    union = int(np.logical_or(a, b).sum())
    return inter, union


def mask_iou_value(a, b):
    inter, union = _mask_iou_counts(a, b)
    return inter / union if union else 0.0


def match_detections(dets, gt_masks, iou_threshold):
    """Greedy score-descending matching of one image.

    A detection is a true positive iff its best-IoU still-unmatched ground
    truth reaches the threshold; that ground truth is then consumed.

    Args:
        dets: objects with .score and .amodal_mask.
        gt_masks: list of binary ground-truth amodal masks.
    """
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    used = set()
    matched, tp_flags, scores = [], [], []
    for i in order:
        best_j, best_iou = None, 0.0
        for j, gt in enumerate(gt_masks):
            if j in used:
                continue
            iou = mask_iou_value(dets[i].amodal_mask, gt)
            if iou > best_iou:
                best_j, best_iou = j, iou
        scores.append(float(dets[i].score))
        if best_j is not None and best_iou >= iou_threshold:
            used.add(best_j)
            matched.append(best_j)
            tp_flags.append(True)
        else:
            matched.append(None)
            tp_flags.append(False)
    return MatchTable(
        order=order,
        scores=scores,
        matched=matched,
        tp=tp_flags,
        fn=len(gt_masks) - len(used),
        gt_count=len(gt_masks),
    )


def precision_recall(tables):
    """Pooled PR points over one table or a list of per-image tables.

    Detections from all images are merged in descending score order; the
    recall denominator is the total ground-truth count.
    """
    if isinstance(tables, MatchTable):
        tables = [tables]
    pairs = [(s, t) for table in tables for s, t in zip(table.scores, table.tp)]
    total_gt = sum(table.gt_count for table in tables)
    pairs.sort(key=lambda p: -p[0])
    curve = []
    tp = fp = 0
    for score, is_tp in pairs:
        if is_tp:
            tp += 1
        else:
            fp += 1
        precision = tp / (tp + fp)
        recall = tp / total_gt if total_gt else 0.0
        curve.append((recall, precision))
    return curve


def average_precision(pr_curve):
    """Area under the monotone precision envelope of the PR curve."""
    if not pr_curve:
        return 0.0
    rec = [0.0] + [r for r, _ in pr_curve] + [1.0]
    pre = [0.0] + [p for _, p in pr_curve] + [0.0]
    for i in range(len(pre) - 2, -1, -1):
        pre[i] = max(pre[i], pre[i + 1])
    ap = 0.0
    for i in range(len(rec) - 1):
        if rec[i + 1] != rec[i]:
            ap += (rec[i + 1] - rec[i]) * pre[i + 1]
    return ap


def mean_iou(dets_per_image, gt_masks_per_image, instance_averaged=False):
    """Two-category mean IoU over {background, worm}.

    Default: semantic reading — per image, detections and ground truths each
    collapse to one worm mask by union; intersection/union pixel counts pool
    over all images before the per-category ratio; a category absent from
    both sides everywhere scores 0. With instance_averaged=True, returns the
    mean over ground-truth instances of the matched-detection mask IoU
    (unmatched instances score 0), a stricter per-worm variant.
    """
    if instance_averaged:
        ious = []
        for dets, gts in zip(dets_per_image, gt_masks_per_image):
            table = match_detections(dets, gts, iou_threshold=0.5)
            by_gt = {}
            for pos, j in enumerate(table.matched):
                if j is not None:
                    det = dets[table.order[pos]]
                    by_gt[j] = mask_iou_value(det.amodal_mask, gts[j])
            ious.extend(by_gt.get(j, 0.0) for j in range(len(gts)))
        return float(np.mean(ious)) if ious else 0.0

    inter = {"bg": 0, "fg": 0}
    union = {"bg": 0, "fg": 0}
    for dets, gts in zip(dets_per_image, gt_masks_per_image):
        if gts:
            shape = gts[0].shape
        elif dets:
            shape = dets[0].amodal_mask.shape
        else:
            continue
        pred_fg = np.zeros(shape, dtype=bool)
        for d in dets:
            pred_fg |= d.amodal_mask.astype(bool)
        gt_fg = np.zeros(shape, dtype=bool)
        for g in gts:
            gt_fg |= g.astype(bool)
        i_fg, u_fg = _mask_iou_counts(pred_fg, gt_fg)
        i_bg, u_bg = _mask_iou_counts(~pred_fg, ~gt_fg)
        inter["fg"] += i_fg
        union["fg"] += u_fg
        inter["bg"] += i_bg
        union["bg"] += u_bg
    per_cat = [
        (inter[c] / union[c]) if union[c] else 0.0 for c in ("bg", "fg")
    ]
    return float(np.mean(per_cat))


def evaluate(dets_per_image, gt_masks_per_image):
    """Full report: AP averaged over the IoU grid, AP50/AP75, mIoU."""
    if len(dets_per_image) != len(gt_masks_per_image):
        raise ValueError("detections and ground truths must cover the same images")
    aps = {}
    curve50 = []
    for thr in IOU_GRID:
        tables = [
            match_detections(d, g, thr)
            for d, g in zip(dets_per_image, gt_masks_per_image)
        ]
        curve = precision_recall(tables)
        aps[thr] = average_precision(curve)
        if thr == 0.5:
            curve50 = curve
    return MetricsReport(
        ap=float(np.mean(list(aps.values()))),
        ap50=aps[0.5],
        ap75=aps[0.75],
        miou=mean_iou(dets_per_image, gt_masks_per_image),
        pr_curve=curve50,
    )
