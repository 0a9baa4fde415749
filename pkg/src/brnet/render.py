"""Overlay rendering: ground truth and predictions side by side.

Palette and blending are fixed so tests can assert exact pixel values:

- instance colors cycle through PALETTE in instance order;
- a mask pixel becomes round(0.5 * gray + 0.5 * color) per channel, where
  gray is the 8-bit grayscale image value;
- overlap-region pixels additionally carry a diagonal hatch: every pixel
  with (row + col) % 4 == 0 inside an overlap mask is set to pure white;
- panels are [ground truth | prediction], separated by a 4-px black gutter.
"""

from pathlib import Path

import numpy as np
from PIL import Image

PALETTE = (
    (230, 25, 75),
    (60, 180, 75),
    (255, 225, 25),
    (0, 130, 200),
    (245, 130, 48),
    (145, 30, 180),
    (70, 240, 240),
    (240, 50, 230),
)
GUTTER = 4


def _to_gray_rgb(image):
    gray = np.round(np.asarray(image, dtype=np.float64) * 255.0).astype(np.uint8)
    return np.stack([gray, gray, gray], axis=-1)


def _blend(panel, mask, color):
    sel = mask.astype(bool)
    mixed = np.round(0.5 * panel[sel].astype(np.float64) + 0.5 * np.array(color, dtype=np.float64))
    panel[sel] = mixed.astype(np.uint8)


def _hatch(panel, mask):
    rows, cols = np.nonzero(mask.astype(bool))
    on = (rows + cols) % 4 == 0
    panel[rows[on], cols[on]] = (255, 255, 255)


def draw_instances(image, amodal_masks, overlap_masks=None):
    """One annotated panel as an (H, W, 3) uint8 array."""
    panel = _to_gray_rgb(image)
    for i, mask in enumerate(amodal_masks):
        _blend(panel, mask, PALETTE[i % len(PALETTE)])
    if overlap_masks is not None:
        for mask in overlap_masks:
            if mask is not None:
                _hatch(panel, mask)
    return panel


def render_scene(scene, detections):
    """(H, 2W + gutter, 3) side-by-side overlay for one scene."""
    gt_panel = draw_instances(
        scene.image,
        [inst.amodal_mask for inst in scene.instances],
        [inst.overlap_mask for inst in scene.instances],
    )
    pred_panel = draw_instances(
        scene.image,
        [d.amodal_mask for d in detections],
        [d.overlap_mask for d in detections],
    )
    h, w, _ = gt_panel.shape
    out = np.zeros((h, 2 * w + GUTTER, 3), dtype=np.uint8)
    out[:, :w] = gt_panel
    out[:, w + GUTTER :] = pred_panel
    return out


def render_dataset(scenes, detections_per_scene, out_dir):
    """Write overlay_%05d.png per scene; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, (scene, dets) in enumerate(zip(scenes, detections_per_scene)):
        path = out / f"overlay_{i:05d}.png"
        Image.fromarray(render_scene(scene, dets), mode="RGB").save(path)
        paths.append(path)
    return paths
