"""Command-line front end: synth, train, eval, ablate, render.

Every command exits non-zero on any validation failure (bad config, bad
dataset, bad checkpoint, diverged training) and zero otherwise.
"""

import argparse
import dataclasses
import os
import sys
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .ablation import format_table, run_full_ablation
from .checkpoint import CheckpointError, load_checkpoint
from .config import Config, ConfigError, config_from_dict, load_config
from .dataset_io import DatasetError, load_dataset, save_dataset
from .metrics import evaluate
from .model.detector import BRNet
from .render import render_dataset
from .scenes import SceneConfig
from .synth import generate_scene
from .train import TrainingDiverged, scene_to_tensors, train_run

_MODE_FLAG = {"rpn": "rpn", "gt": "ground_truth"}


def _load_config_arg(path):
    return load_config(path) if path else Config()


def _apply_overrides(config, args):
    train = config.train
    if getattr(args, "seed", None) is not None:
        train = dataclasses.replace(train, seed=args.seed)
    if getattr(args, "proposal_mode", None) is not None:
        train = dataclasses.replace(
            train, proposal_mode=_MODE_FLAG[args.proposal_mode]
        )
    return dataclasses.replace(config, train=train)


def _num_workers():
    raw = os.environ.get("BRNET_NUM_WORKERS", "")
    try:
        return max(int(raw), 1) if raw else 1
    except ValueError:
        raise ConfigError(f"BRNET_NUM_WORKERS must be an integer, got {raw!r}")


def cmd_synth(args):
    config = _apply_overrides(_load_config_arg(args.config), args)
    d = config.data
    count = args.count if args.count is not None else d.train_count
    base_seed = config.train.seed
    scene_cfgs = [
        SceneConfig(
            image_size=d.image_size,
            worm_count_range=d.worm_count_range,
            overlap_bias=d.overlap_bias,
            noise_profile=d.noise_profile,
            seed=base_seed + i,
        )
        for i in range(count)
    ]
    workers = _num_workers()
    if workers > 1 and count > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            scenes = list(pool.map(generate_scene, scene_cfgs))
    else:
        scenes = [generate_scene(c) for c in scene_cfgs]
    save_dataset(scenes, args.out)

    hist = Counter(len(s.instances) for s in scenes)
    print(f"scenes={len(scenes)}")
    for k in sorted(hist):
        print(f"scenes_with_{k}_instances={hist[k]}")
    overlap_px = sum(int(i.overlap_mask.sum()) for s in scenes for i in s.instances)
    amodal_px = sum(int(i.amodal_mask.sum()) for s in scenes for i in s.instances)
    frac = overlap_px / amodal_px if amodal_px else 0.0
    print(f"overlap_pixel_fraction={frac:.6f}")
    return 0


def cmd_train(args):
    config = _apply_overrides(_load_config_arg(args.config), args)
    scenes = load_dataset(args.dataset) if args.dataset else None
    result = train_run(config, args.out, scenes)
    first, last = result["history"][0], result["history"][-1]
    print(f"steps={last['step']}")
    print(f"initial_total={first['total']:.6f}")
    print(f"final_total={last['total']:.6f}")
    print(f"checkpoint={result['checkpoint_path']}")
    print(f"log={result['log_path']}")
    return 0


def _load_model(checkpoint_path):
    meta = load_checkpoint(checkpoint_path)
    config = (
        config_from_dict(meta["config"]) if meta.get("config") else Config()
    )
    model = BRNet(config.model)
    load_checkpoint(checkpoint_path, model=model)
    model.eval()
    return model, config


def _predict_dataset(model, scenes, mode):
    dets_per_scene = []
    for scene in scenes:
        image, target = scene_to_tensors(scene)
        gt_boxes = [target["boxes"]] if mode == "ground_truth" else None
        dets_per_scene.append(
            model.predict(image[None], proposal_mode=mode, gt_boxes=gt_boxes)[0]
        )
    return dets_per_scene


def cmd_eval(args):
    model, config = _load_model(args.checkpoint)
    scenes = load_dataset(args.dataset)
    mode = (
        _MODE_FLAG[args.proposal_mode]
        if args.proposal_mode
        else config.train.proposal_mode
    )
    dets = _predict_dataset(model, scenes, mode)
    gts = [[inst.amodal_mask for inst in s.instances] for s in scenes]
    report = evaluate(dets, gts)
    lines = [
        "AP\tAP50\tAP75\tmIoU",
        f"{report.ap:.6f}\t{report.ap50:.6f}\t{report.ap75:.6f}\t{report.miou:.6f}",
    ]
    text = "\n".join(lines) + "\n"
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def cmd_ablate(args):
    config = _apply_overrides(_load_config_arg(args.config), args)
    component, module = run_full_ablation(config, args.out)
    print(format_table(component, "component toggles"), end="")
    print(format_table(module, "module stack"), end="")
    return 0


def cmd_render(args):
    model, config = _load_model(args.checkpoint)
    scenes = load_dataset(args.dataset)
    mode = (
        _MODE_FLAG[args.proposal_mode]
        if args.proposal_mode
        else config.train.proposal_mode
    )
    dets = _predict_dataset(model, scenes, mode)
    paths = render_dataset(scenes, dets, args.out)
    print(f"rendered={len(paths)}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="brnet",
        description="Amodal instance segmentation of overlapping worm-like objects.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, *, config=False, seed=False, out=False, checkpoint=False,
                   dataset=False, mode=False):
        if config:
            p.add_argument("--config", help="YAML config file")
        if seed:
            p.add_argument("--seed", type=int, help="override the config seed")
        if out:
            p.add_argument("--out", required=True, help="output directory")
        if checkpoint:
            p.add_argument("--checkpoint", required=True, help="checkpoint file")
        if dataset:
            p.add_argument("--dataset", required=dataset == "required",
                           help="dataset directory")
        if mode:
            p.add_argument("--proposal-mode", choices=("rpn", "gt"),
                           help="proposal source (gt = ground-truth boxes)")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    add_common(p, config=True, seed=True, out=True)
    p.add_argument("--count", type=int, help="number of scenes (default from config)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    add_common(p, config=True, seed=True, out=True, dataset=True, mode=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset")
    add_common(p, out=True, checkpoint=True, dataset="required", mode=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run the toggle sweeps")
    add_common(p, config=True, seed=True, out=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("render", help="write prediction overlays")
    add_common(p, out=True, checkpoint=True, dataset="required", mode=True)
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DatasetError, CheckpointError, TrainingDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
