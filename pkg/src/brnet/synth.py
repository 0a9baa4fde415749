"""Procedural scenes of overlapping worm-like tubes with exact ground truth.

Each worm is a smooth random-walk spine swept by a disc. Worms are rendered
independently before compositing, so every full (amodal) mask is exact even
where worms cross; the overlap/non-overlap split is recomputed afterwards
from the stack of full masks.
"""

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .mask_ops import decompose_instances
from .scenes import AnnotatedScene, Instance, SceneConfig, WormSpec, tight_bbox

BACKGROUND_INTENSITY = 0.85
SPINE_STEP = 2.0        # raw walk step, px
DENSE_SPACING = 0.25    # resampled spine spacing, px
EDGE_CLEARANCE = 2.0    # gap between tube edge and image border, px
NOISE_SIGMA = {"clean": 0.01, "cluttered": 0.04}

AUGMENT_OPS = ("rotate", "crop", "hflip")


def _curvature_walk(start, heading, n_steps, margin, image_size, rng):
    """Random walk whose turn angle follows an AR(1) process, reflecting off
    a margin band so the whole spine stays at least `margin` from borders."""
    h, w = image_size
    theta = float(heading)
    kappa = 0.0
    pts = [np.asarray(start, dtype=np.float64)]
    for _ in range(n_steps):
        kappa = 0.75 * kappa + 0.15 * rng.normal()
        kappa = float(np.clip(kappa, -0.45, 0.45))
        theta += kappa
        nxt = pts[-1] + SPINE_STEP * np.array([np.cos(theta), np.sin(theta)])
        if nxt[0] < margin or nxt[0] > w - margin:
            theta = np.pi - theta
            nxt = pts[-1] + SPINE_STEP * np.array([np.cos(theta), np.sin(theta)])
        if nxt[1] < margin or nxt[1] > h - margin:
            theta = -theta
            nxt = pts[-1] + SPINE_STEP * np.array([np.cos(theta), np.sin(theta)])
        nxt[0] = np.clip(nxt[0], margin, w - margin)
        nxt[1] = np.clip(nxt[1], margin, h - margin)
        pts.append(nxt)
    return np.array(pts)


def _overlap_walk(anchor, n_steps, margin, image_size, rng):
    """Spine that passes exactly through `anchor`: walk both ways from it."""
    heading = rng.uniform(0.0, 2.0 * np.pi)
    n_back = n_steps // 2
    fwd = _curvature_walk(anchor, heading, n_steps - n_back, margin, image_size, rng)
    bwd = _curvature_walk(anchor, heading + np.pi, n_back, margin, image_size, rng)
    return np.concatenate([bwd[::-1], fwd[1:]], axis=0)


def _resample_spine(points, spacing=DENSE_SPACING):
    """Resample a polyline at roughly uniform arc-length spacing."""
    pts = np.asarray(points, dtype=np.float64)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    keep = np.concatenate([[True], seg > 1e-9])
    pts = pts[keep]
    if len(pts) < 2:
        return pts
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    n = max(int(np.ceil(arc[-1] / spacing)) + 1, 2)
    grid = np.linspace(0.0, arc[-1], n)
    return np.column_stack(
        [np.interp(grid, arc, pts[:, 0]), np.interp(grid, arc, pts[:, 1])]
    )


def _rasterize_tube(dense_spine, half_width, image_size):
    """Binary mask of all pixels within `half_width` of the dense spine."""
    h, w = image_size
    x0 = max(int(np.floor(dense_spine[:, 0].min() - half_width - 1)), 0)
    x1 = min(int(np.ceil(dense_spine[:, 0].max() + half_width + 1)) + 1, w)
    y0 = max(int(np.floor(dense_spine[:, 1].min() - half_width - 1)), 0)
    y1 = min(int(np.ceil(dense_spine[:, 1].max() + half_width + 1)) + 1, h)
    ys, xs = np.mgrid[y0:y1, x0:x1]
    grid = np.column_stack([xs.ravel(), ys.ravel()]).astype(np.float64)
    tree = cKDTree(dense_spine)
    dist, _ = tree.query(grid, k=1)
    mask = np.zeros((h, w), dtype=np.uint8)
    mask[y0:y1, x0:x1] = (dist <= half_width).reshape(y1 - y0, x1 - x0)
    return mask


def _sample_worms(cfg, geom):
    h, w = cfg.image_size
    lo, hi = cfg.worm_count_range
    count = int(geom.integers(lo, hi + 1))
    worms = []
    for k in range(count):
        length = geom.uniform(0.35, 0.55) * min(h, w)
        aspect = geom.uniform(10.0, 20.0)
        half_width = max(length / aspect / 2.0, 1.5)
        n_steps = max(int(round(length / SPINE_STEP)), 3)
        forced = k > 0 and geom.random() < cfg.overlap_bias
        if forced:
            donor = worms[int(geom.integers(0, len(worms)))]
            anchor = donor.spine[int(geom.integers(0, len(donor.spine)))]
            border = min(anchor[0], w - anchor[0], anchor[1], h - anchor[1])
            # shrink the tube if the anchor sits close to a border, so the
            # reflecting band still contains the anchor
            half_width = max(min(half_width, border - EDGE_CLEARANCE), 1.5)
            margin = half_width + EDGE_CLEARANCE
            spine = _overlap_walk(anchor, n_steps, margin, (h, w), geom)
        else:
            margin = half_width + EDGE_CLEARANCE
            start = np.array(
                [geom.uniform(margin, w - margin), geom.uniform(margin, h - margin)]
            )
            heading = geom.uniform(0.0, 2.0 * np.pi)
            spine = _curvature_walk(start, heading, n_steps, margin, (h, w), geom)
        worms.append(
            WormSpec(
                spine=spine,
                half_width=half_width,
                intensity=float(geom.uniform(0.2, 0.5)),
                z_order=k,
            )
        )
    return worms


def _apply_clutter(image, rng):
    """Bright/dark debris blobs plus multiplicative speckle, image only."""
    h, w = image.shape
    for _ in range(int(rng.integers(5, 13))):
        cx = rng.uniform(0.0, w)
        cy = rng.uniform(0.0, h)
        radius = rng.uniform(1.5, 5.0)
        delta = float(rng.choice([-1.0, 1.0])) * rng.uniform(0.15, 0.35)
        x0 = max(int(np.floor(cx - radius)), 0)
        x1 = min(int(np.ceil(cx + radius)) + 1, w)
        y0 = max(int(np.floor(cy - radius)), 0)
        y1 = min(int(np.ceil(cy + radius)) + 1, h)
        if x0 >= x1 or y0 >= y1:
            continue
        ys, xs = np.mgrid[y0:y1, x0:x1]
        inside = (xs - cx) ** 2 + (ys - cy) ** 2 <= radius**2
        image[y0:y1, x0:x1][inside] += delta
    image *= 1.0 + rng.normal(0.0, 0.05, size=image.shape)
    return image


def generate_scene(cfg: SceneConfig) -> AnnotatedScene:
    """Render one annotated scene, deterministically per (cfg, seed).

    Geometry and noise use independent RNG streams split from the seed, so
    the "clean" and "cluttered" profiles of an otherwise identical config
    place identical worms and differ only in the image.
    """
    h, w = cfg.image_size
    geom_seed, noise_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    geom = np.random.default_rng(geom_seed)
    noise = np.random.default_rng(noise_seed)

    worms = _sample_worms(cfg, geom)
    full_masks = [
        _rasterize_tube(_resample_spine(wm.spine), wm.half_width, (h, w))
        for wm in worms
    ]

    image = np.full((h, w), BACKGROUND_INTENSITY, dtype=np.float64)
    for wm, mask in sorted(zip(worms, full_masks), key=lambda t: t[0].z_order):
        image[mask.astype(bool)] = wm.intensity

    sigma = NOISE_SIGMA[cfg.noise_profile]
    if cfg.noise_profile == "cluttered":
        image = _apply_clutter(image, noise)
    image += noise.normal(0.0, sigma, size=image.shape)
    np.clip(image, 0.0, 1.0, out=image)

    parts = decompose_instances(full_masks)
    instances = [
        Instance(
            bbox=tight_bbox(mask),
            amodal_mask=mask,
            overlap_mask=ov,
            nonoverlap_mask=non,
        )
        for mask, (ov, non) in zip(full_masks, parts)
    ]
    scene = AnnotatedScene(
        image=image.astype(np.float32), instances=instances, noise_level=sigma
    )
    return scene.validate()


def _rebuild(image, amodal_masks, noise_level):
    """Recompute the overlap split and boxes from transformed full masks."""
    kept = [m for m in amodal_masks if m.any()]
    if not kept:
        raise ValueError("no instance survived the transform")
    parts = decompose_instances(kept)
    instances = [
        Instance(bbox=tight_bbox(m), amodal_mask=m, overlap_mask=ov, nonoverlap_mask=non)
        for m, (ov, non) in zip(kept, parts)
    ]
    return AnnotatedScene(
        image=np.ascontiguousarray(image, dtype=np.float32),
        instances=instances,
        noise_level=noise_level,
    )


def hflip_scene(scene: AnnotatedScene) -> AnnotatedScene:
    image = scene.image[:, ::-1].copy()
    masks = [inst.amodal_mask[:, ::-1].copy() for inst in scene.instances]
    return _rebuild(image, masks, scene.noise_level)


def rotate_scene(scene: AnnotatedScene, angle_degrees) -> AnnotatedScene:
    """Rotate image and masks together.

    Multiples of 90 degrees are exact index remaps. Other angles use bilinear
    resampling for the image (exposed corners filled with the median
    intensity) and nearest-neighbor for masks so they stay binary. If the
    rotation pushes every instance out of frame, the scene is returned
    unchanged.
    """
    angle = float(angle_degrees) % 360.0
    if angle in (0.0, 90.0, 180.0, 270.0):
        k = int(angle // 90.0)
        image = np.rot90(scene.image, k).copy()
        masks = [np.rot90(inst.amodal_mask, k).copy() for inst in scene.instances]
    else:
        cval = float(np.median(scene.image))
        image = ndimage.rotate(
            scene.image, angle, reshape=False, order=1, mode="constant", cval=cval
        )
        np.clip(image, 0.0, 1.0, out=image)
        masks = [
            ndimage.rotate(
                inst.amodal_mask, angle, reshape=False, order=0, mode="constant", cval=0
            )
            for inst in scene.instances
        ]
    try:
        return _rebuild(image, masks, scene.noise_level)
    except ValueError:
        return scene


def crop_scene(scene: AnnotatedScene, top, left, height, width) -> AnnotatedScene:
    """Crop a window; instances left without pixels are dropped.

    Raises:
        ValueError: on an out-of-bounds window, or if no instance survives.
    """
    h, w = scene.image.shape
    if height < 1 or width < 1:
        raise ValueError("crop size must be positive")
    if top < 0 or left < 0 or top + height > h or left + width > w:
        raise ValueError("crop window exceeds image bounds")
    image = scene.image[top : top + height, left : left + width].copy()
    masks = [
        inst.amodal_mask[top : top + height, left : left + width].copy()
        for inst in scene.instances
    ]
    return _rebuild(image, masks, scene.noise_level)


def _random_crop(scene, rng):
    """Window sizes are multiples of 32 (min 64). A window is accepted only
    if some instance keeps at least a quarter of its pixels; after 10 failed
    draws the scene is returned uncropped."""
    h, w = scene.image.shape
    ch = 32 * int(rng.integers(2, h // 32 + 1))
    cw = 32 * int(rng.integers(2, w // 32 + 1))
    areas = [int(inst.amodal_mask.sum()) for inst in scene.instances]
    for _ in range(10):
        top = int(rng.integers(0, h - ch + 1))
        left = int(rng.integers(0, w - cw + 1))
        visible = [
            int(inst.amodal_mask[top : top + ch, left : left + cw].sum())
            for inst in scene.instances
        ]
        if any(v >= 0.25 * a for v, a in zip(visible, areas)):
            return crop_scene(scene, top, left, ch, cw)
    return scene


def augment(scene: AnnotatedScene, ops, seed) -> AnnotatedScene:
    """Apply the requested subset of {rotate, crop, hflip}, in that order."""
    ops = set(ops)
    unknown = ops - set(AUGMENT_OPS)
    if unknown:
        raise ValueError(f"unknown augmentation ops: {sorted(unknown)}")
    rng = np.random.default_rng(seed)
    out = scene
    if "rotate" in ops:
        out = rotate_scene(out, float(rng.uniform(0.0, 360.0)))
    if "crop" in ops:
        out = _random_crop(out, rng)
    if "hflip" in ops:
        if rng.random() < 0.5:
            out = hflip_scene(out)
    return out
