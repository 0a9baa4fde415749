"""Directory-based dataset format.

Layout::

    <dir>/index.json          format_version, one record per scene
    <dir>/scene_00000.png     16-bit grayscale image (value = round(v * 65535))
    <dir>/scene_00000.masks   array container: amodal/overlap/nonoverlap
                              (N, H, W) uint8 stacks plus (N, 4) int32 boxes

Masks round-trip bit-identically; images round-trip within one quantization
step (1/65535). Writing is byte-deterministic for identical input.
"""

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .arrayio import ContainerError, read_arrays, write_arrays
from .scenes import AnnotatedScene, Instance

FORMAT_VERSION = 1
_MASK_KEYS = ("amodal", "overlap", "nonoverlap", "bboxes")


class DatasetError(ValueError):
    """A dataset directory failed to parse or validate."""


def _record_names(i):
    return f"scene_{i:05d}.png", f"scene_{i:05d}.masks"


def save_dataset(scenes, path):
    """Write scenes to a directory, creating it if needed."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    records = []
    for i, scene in enumerate(scenes):
        scene.validate()
        image_name, masks_name = _record_names(i)
        quant = np.round(scene.image.astype(np.float64) * 65535.0).astype(np.uint16)
        Image.fromarray(quant, mode="I;16").save(root / image_name)
        write_arrays(
            root / masks_name,
            {
                "amodal": np.stack([t.amodal_mask for t in scene.instances]),
                "overlap": np.stack([t.overlap_mask for t in scene.instances]),
                "nonoverlap": np.stack([t.nonoverlap_mask for t in scene.instances]),
                "bboxes": np.array([t.bbox for t in scene.instances], dtype=np.int32),
            },
        )
        records.append(
            {
                "image": image_name,
                "masks": masks_name,
                "noise_level": float(scene.noise_level),
                "instance_count": len(scene.instances),
            }
        )
    index = {"format_version": FORMAT_VERSION, "records": records}
    with open(root / "index.json", "w", encoding="utf-8") as fh:
        json.dump(index, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return root


def _load_record(root, i, record):
    for key in ("image", "masks", "noise_level"):
        if key not in record:
            raise DatasetError(f"record {i}: missing field {key!r}")
    try:
        with Image.open(root / record["image"]) as img:
            quant = np.asarray(img, dtype=np.uint16)
    except (OSError, SyntaxError) as exc:
        raise DatasetError(f"record {i} ({record['image']}): {exc}") from exc
    if quant.ndim != 2:
        raise DatasetError(f"record {i} ({record['image']}): not a grayscale image")
    image = (quant.astype(np.float64) / 65535.0).astype(np.float32)

    try:
        arrays = read_arrays(root / record["masks"])
    except (ContainerError, OSError) as exc:
        raise DatasetError(f"record {i} ({record['masks']}): {exc}") from exc
    for key in _MASK_KEYS:
        if key not in arrays:
            raise DatasetError(f"record {i} ({record['masks']}): missing array {key!r}")
    amodal, overlap, nonoverlap = (
        arrays["amodal"],
        arrays["overlap"],
        arrays["nonoverlap"],
    )
    bboxes = arrays["bboxes"]
    if amodal.ndim != 3 or amodal.shape[1:] != image.shape:
        raise DatasetError(
            f"record {i} ({record['masks']}): mask stack shape "
            f"{amodal.shape} does not match image {image.shape}"
        )
    n = amodal.shape[0]
    if overlap.shape != amodal.shape or nonoverlap.shape != amodal.shape:
        raise DatasetError(f"record {i} ({record['masks']}): mask stacks disagree")
    if bboxes.shape != (n, 4):
        raise DatasetError(f"record {i} ({record['masks']}): bad bboxes shape")

    instances = [
        Instance(
            bbox=tuple(int(v) for v in bboxes[j]),
            amodal_mask=amodal[j],
            overlap_mask=overlap[j],
            nonoverlap_mask=nonoverlap[j],
        )
        for j in range(n)
    ]
    scene = AnnotatedScene(
        image=image, instances=instances, noise_level=float(record["noise_level"])
    )
    try:
        scene.validate()
    except ValueError as exc:
        raise DatasetError(f"record {i}: {exc}") from exc
    return scene


def load_dataset(path):
    """Read a dataset directory back into scenes.

    Raises:
        DatasetError: naming the offending record, for any malformed content.
    """
    root = Path(path)
    index_path = root / "index.json"
    try:
        with open(index_path, encoding="utf-8") as fh:
            index = json.load(fh)
    except OSError as exc:
        raise DatasetError(f"cannot read {index_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DatasetError(f"index.json is not valid JSON: {exc}") from exc
    if not isinstance(index, dict) or index.get("format_version") != FORMAT_VERSION:
        raise DatasetError(
            f"unsupported format_version {index.get('format_version')!r}"
            if isinstance(index, dict)
            else "index.json must hold an object"
        )
    records = index.get("records")
    if not isinstance(records, list):
        raise DatasetError("index.json 'records' must be a list")
    return [_load_record(root, i, rec) for i, rec in enumerate(records)]
