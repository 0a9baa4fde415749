"""Scene and instance containers plus their invariant checks.

Bounding boxes use half-open pixel coordinates ``(x0, y0, x1, y1)`` with
``x1``/``y1`` exclusive, so a tight box of a mask satisfies
``mask[y0:y1, x0:x1].any(axis=...)`` on every border row/column.
"""

from dataclasses import dataclass, field

import numpy as np

from .mask_ops import require_binary_mask


def tight_bbox(mask):
    """Tight axis-aligned half-open bounding box (x0, y0, x1, y1) of a mask.

    Raises:
        ValueError: if the mask is empty.
    """
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        raise ValueError("cannot take the bounding box of an empty mask")
    return (int(cols[0]), int(rows[0]), int(cols[-1]) + 1, int(rows[-1]) + 1)


@dataclass
class WormSpec:
    """Geometry of one rendered worm: a smooth spine swept by a disc."""

    spine: np.ndarray  # (P, 2) float (x, y) points
    half_width: float
    intensity: float
    z_order: int

    def __post_init__(self):
        self.spine = np.asarray(self.spine, dtype=np.float64)
        if self.spine.ndim != 2 or self.spine.shape[1] != 2 or self.spine.shape[0] < 4:
            raise ValueError("spine must be an (>=4, 2) array of control points")
        if not self.half_width > 0:
            raise ValueError("half_width must be > 0")
        if not 0.0 <= self.intensity <= 1.0:
            raise ValueError("intensity must lie in [0, 1]")


@dataclass
class Instance:
    """One annotated instance: full (amodal) mask plus its region split."""

    bbox: tuple  # (x0, y0, x1, y1) ints, half-open
    amodal_mask: np.ndarray
    overlap_mask: np.ndarray
    nonoverlap_mask: np.ndarray

    def validate(self, image_shape=None):
        am = require_binary_mask(self.amodal_mask, "amodal_mask")
        ov = require_binary_mask(self.overlap_mask, "overlap_mask")
        nv = require_binary_mask(self.nonoverlap_mask, "nonoverlap_mask")
        if not (am.shape == ov.shape == nv.shape):
            raise ValueError("instance masks must share one shape")
        if image_shape is not None and am.shape != tuple(image_shape):
            raise ValueError(f"mask shape {am.shape} != image shape {tuple(image_shape)}")
        if not am.any():
            raise ValueError("amodal_mask must be non-empty")
        if ((ov | nv) != am).any() or (ov & nv).any():
            raise ValueError("overlap/non-overlap masks must partition the amodal mask")
        if tuple(self.bbox) != tight_bbox(am):
            raise ValueError(f"bbox {tuple(self.bbox)} is not tight for the amodal mask")


@dataclass
class AnnotatedScene:
    """One grayscale image with exact per-instance amodal ground truth."""

    image: np.ndarray  # (H, W) float32 in [0, 1]
    instances: list = field(default_factory=list)
    noise_level: float = 0.0

    @property
    def height(self):
        return self.image.shape[0]

    @property
    def width(self):
        return self.image.shape[1]

    def validate(self):
        """Check every scene invariant; raises ValueError on the first failure."""
        img = np.asarray(self.image)
        if img.ndim != 2:
            raise ValueError(f"image must be 2-D, got shape {img.shape}")
        if not np.isfinite(img).all():
            raise ValueError("image contains non-finite values")
        if img.min() < 0.0 or img.max() > 1.0:
            raise ValueError("image values must lie in [0, 1]")
        if len(self.instances) < 1:
            raise ValueError("scene must contain at least one instance")
        for i, inst in enumerate(self.instances):
            try:
                inst.validate(image_shape=img.shape)
            except ValueError as exc:
                raise ValueError(f"instance {i}: {exc}") from exc
        return self

    def gt_boxes(self):
        """(N, 4) float array of instance boxes."""
        return np.array([inst.bbox for inst in self.instances], dtype=np.float64)


@dataclass
class SceneConfig:
    """Knobs for the procedural scene generator.

    ``overlap_bias`` is the probability that each worm after the first is
    forced to cross an already-placed worm. ``noise_profile`` selects the
    background regime: "clean" (mild sensor noise) or "cluttered" (debris
    blobs plus speckle). Noise touches the image only, never the masks.
    """

    image_size: tuple = (256, 256)
    worm_count_range: tuple = (2, 4)
    overlap_bias: float = 0.9
    noise_profile: str = "clean"
    seed: int = 0

    def __post_init__(self):
        h, w = self.image_size
        if h < 64 or w < 64:
            raise ValueError("image_size must be at least 64x64")
        lo, hi = self.worm_count_range
        if lo < 1 or hi < lo:
            raise ValueError("worm_count_range must satisfy 1 <= min <= max")
        if not 0.0 <= self.overlap_bias <= 1.0:
            raise ValueError("overlap_bias must lie in [0, 1]")
        if self.noise_profile not in ("clean", "cluttered"):
            raise ValueError(f"unknown noise_profile {self.noise_profile!r}")


def check_scenes(scenes, name="scenes"):
    """Validate a list of scenes (used as the estimator input check)."""
    if not isinstance(scenes, (list, tuple)) or len(scenes) == 0:
        raise ValueError(f"{name} must be a non-empty list of AnnotatedScene")
    for i, s in enumerate(scenes):
        if not isinstance(s, AnnotatedScene):
            raise ValueError(f"{name}[{i}] is not an AnnotatedScene")
        try:
            s.validate()
        except ValueError as exc:
            raise ValueError(f"{name}[{i}]: {exc}") from exc
    return list(scenes)
