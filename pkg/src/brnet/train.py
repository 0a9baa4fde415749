"""Training loop: Adam, linear warmup then decay, TSV loss log.

The learning-rate schedule is 1-indexed over optimizer steps: step s during
warmup gets lr_initial * s / warmup_iters; afterwards the rate moves
linearly (or in one step, with lr_decay="step") to lr_final, reached exactly
at the final step.
"""

import math
from pathlib import Path

import numpy as np
import torch

from .checkpoint import save_checkpoint
from .config import Config, config_to_dict
from .losses import LossDiagnostics
from .model.detector import BRNet
from .scenes import SceneConfig
from .synth import augment, generate_scene

LOG_COLUMNS = ("step", "l_cls", "l_reg", "l_cmask", "l_dec", "l_rmask", "l_cons", "total", "lr")


class TrainingDiverged(RuntimeError):
    """Raised when any loss term stops being finite."""

    def __init__(self, step, bundle_floats):
        self.step = step
        self.bundle = bundle_floats
        parts = ", ".join(f"{k}={v!r}" for k, v in bundle_floats.items())
        super().__init__(f"non-finite loss at step {step}: {parts}")


def learning_rate(step, train_cfg, schedule_total=None):
    """Learning rate for 1-indexed optimizer step `step`."""
    total = schedule_total if schedule_total is not None else train_cfg.total_iters
    warmup = train_cfg.warmup_iters
    if step < 1 or step > total:
        raise ValueError(f"step must lie in [1, {total}]")
    if warmup > 0 and step <= warmup:
        return train_cfg.lr_initial * step / warmup
    if step == total:
        # land on lr_final exactly instead of within float rounding of it
        return train_cfg.lr_final
    if train_cfg.lr_decay == "linear":
        frac = (step - warmup) / (total - warmup)
        return train_cfg.lr_initial + frac * (train_cfg.lr_final - train_cfg.lr_initial)
    # single-drop schedule: full rate for the first half after warmup
    midpoint = warmup + (total - warmup) // 2
    return train_cfg.lr_initial if step <= midpoint else train_cfg.lr_final


def scene_to_tensors(scene):
    """(image (1,H,W) float tensor, target dict) for one scene."""
    image = torch.from_numpy(np.ascontiguousarray(scene.image))[None]
    target = {
        "boxes": torch.tensor(
            [inst.bbox for inst in scene.instances], dtype=torch.float32
        ),
        "amodal": torch.from_numpy(
            np.stack([inst.amodal_mask for inst in scene.instances])
        ).float(),
        "overlap": torch.from_numpy(
            np.stack([inst.overlap_mask for inst in scene.instances])
        ).float(),
        "nonoverlap": torch.from_numpy(
            np.stack([inst.nonoverlap_mask for inst in scene.instances])
        ).float(),
    }
    return image, target


def synthesize_scenes(data_cfg, base_seed, count=None, offset=0):
    """Deterministic list of scenes for a (config, seed) pair."""
    n = data_cfg.train_count if count is None else count
    scenes = []
    for i in range(n):
        scene = generate_scene(
            SceneConfig(
                image_size=data_cfg.image_size,
                worm_count_range=data_cfg.worm_count_range,
                overlap_bias=data_cfg.overlap_bias,
                noise_profile=data_cfg.noise_profile,
                seed=base_seed + offset + i,
            )
        )
        if data_cfg.augment_ops:
            scene = augment(scene, data_cfg.augment_ops, seed=base_seed + offset + i)
        scenes.append(scene)
    return scenes


def fit_model(config: Config, scenes, log_lines=None, checkpoint_dir=None):
    """Train a fresh model on `scenes`; returns (model, optimizer, history).

    history is a list of per-step dicts matching LOG_COLUMNS. If `log_lines`
    is a list, formatted TSV lines are appended to it as training runs.

    Raises:
        TrainingDiverged: on the first non-finite loss bundle.
    """
    if not scenes:
        raise ValueError("cannot train on an empty scene list")
    train_cfg = config.train
    torch.manual_seed(train_cfg.seed)
    model = BRNet(config.model)
    model.train()
    optimizer = torch.optim.Adam(
        model.parameters(), lr=train_cfg.lr_initial, betas=train_cfg.adam_betas
    )
    diagnostics = LossDiagnostics()

    tensors = [scene_to_tensors(s) for s in scenes]
    batch = train_cfg.batch_size
    n_batches = math.ceil(len(tensors) / batch)
    if train_cfg.iter_unit == "epoch":
        schedule_total = train_cfg.total_iters * n_batches
    else:
        schedule_total = train_cfg.total_iters

    history = []
    for step in range(1, schedule_total + 1):
        start = ((step - 1) % n_batches) * batch
        chunk = tensors[start : start + batch]
        images = torch.cat([img[None] for img, _ in chunk])
        targets = [t for _, t in chunk]

        lr = learning_rate(step, train_cfg, schedule_total)
        for group in optimizer.param_groups:
            group["lr"] = lr
        optimizer.zero_grad()
        bundle = model.training_losses(
            images,
            targets,
            proposal_mode=train_cfg.proposal_mode,
            weights=train_cfg.loss_weights,
            diagnostics=diagnostics,
        )
        floats = bundle.floats()
        if not all(math.isfinite(v) for v in floats.values()):
            raise TrainingDiverged(step, floats)
        bundle.total.backward()
        if train_cfg.grad_clip_norm > 0:
            torch.nn.utils.clip_grad_norm_(
                model.parameters(), train_cfg.grad_clip_norm
            )
        optimizer.step()

        row = {"step": step, **{k: floats[k] for k in LOG_COLUMNS[1:-1]}, "lr": lr}
        history.append(row)
        if log_lines is not None:
            log_lines.append(format_log_row(row))
        if (
            checkpoint_dir is not None
            and train_cfg.checkpoint_every
            and step % train_cfg.checkpoint_every == 0
            and step != schedule_total
        ):
            save_checkpoint(
                Path(checkpoint_dir) / f"checkpoint_{step:06d}.ckpt",
                model,
                optimizer,
                step=step,
                config_dict=config_to_dict(config),
            )
    return model, optimizer, history


def format_log_row(row):
    vals = [str(row["step"])]
    vals += [format(row[k], ".10g") for k in LOG_COLUMNS[1:]]
    return "\t".join(vals)


def train_run(config: Config, out_dir, scenes=None):
    """File-producing wrapper around fit_model.

    Writes `metrics.log` (TSV, one line per step under a `#`-prefixed
    header) and `checkpoint.ckpt` into out_dir. If scenes is None they are
    synthesized from config.data using the training seed.

    Returns a dict with the model, the scenes, and the output paths.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if scenes is None:
        scenes = synthesize_scenes(config.data, config.train.seed)
    log_lines = []
    try:
        model, optimizer, history = fit_model(
            config, scenes, log_lines=log_lines, checkpoint_dir=out
        )
    finally:
        log_path = out / "metrics.log"
        with open(log_path, "w", encoding="utf-8") as fh:
            fh.write("# " + "\t".join(LOG_COLUMNS) + "\n")
            for line in log_lines:
                fh.write(line + "\n")
    ckpt_path = out / "checkpoint.ckpt"
    save_checkpoint(
        ckpt_path,
        model,
        optimizer,
        step=history[-1]["step"],
        config_dict=config_to_dict(config),
    )
    return {
        "model": model,
        "scenes": scenes,
        "history": history,
        "log_path": log_path,
        "checkpoint_path": ckpt_path,
    }
