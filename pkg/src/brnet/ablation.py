"""Toggle sweeps: train and evaluate one model per component/module row.

Two row sets are produced. The component matrix switches individual pieces
cumulatively (base coarse head, overlap head, non-overlap head, attention,
consistency); the module matrix works at coarser granularity (coarse stage
with attention, plus the bilayer pair, plus recombination). The consistency
toggle implies the recombination head, since the consistency term trains
that head's output.
"""

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import torch

from .config import Config
from .metrics import MetricsReport, evaluate
from .train import fit_model, synthesize_scenes

COMPONENT_ROWS = (
    ("coarse_only", dict(b_o=False, b_n=False, uam=False, l_cons=False)),
    ("plus_overlap", dict(b_o=True, b_n=False, uam=False, l_cons=False)),
    ("plus_nonoverlap", dict(b_o=True, b_n=True, uam=False, l_cons=False)),
    ("plus_attention", dict(b_o=True, b_n=True, uam=True, l_cons=False)),
    ("plus_consistency", dict(b_o=True, b_n=True, uam=True, l_cons=True)),
)

MODULE_ROWS = (
    ("coarse_stage", dict(b_o=False, b_n=False, uam=True, l_cons=False)),
    ("plus_bilayer", dict(b_o=True, b_n=True, uam=True, l_cons=False)),
    ("plus_recombination", dict(b_o=True, b_n=True, uam=True, l_cons=True)),
)


@dataclass
class AblationRow:
    name: str
    toggles: dict
    report: MetricsReport


def row_config(base: Config, toggles) -> Config:
    """Derive a per-row config; everything else is shared with the base."""
    model = dataclasses.replace(
        base.model,
        use_overlap_head=toggles["b_o"],
        use_nonoverlap_head=toggles["b_n"],
        use_attention=toggles["uam"],
        use_recombine=toggles["l_cons"],
    )
    return dataclasses.replace(base, model=model)


def _evaluate_model(model, scenes, proposal_mode):
    from .train import scene_to_tensors

    dets_per_image, gts_per_image = [], []
    for scene in scenes:
        image, target = scene_to_tensors(scene)
        gt_boxes = [target["boxes"]] if proposal_mode == "ground_truth" else None
        dets = model.predict(image[None], proposal_mode=proposal_mode, gt_boxes=gt_boxes)[0]
        dets_per_image.append(dets)
        gts_per_image.append([inst.amodal_mask for inst in scene.instances])
    return evaluate(dets_per_image, gts_per_image)


def run_ablation(config: Config, rows, train_scenes=None, eval_scenes=None):
    """Train/evaluate every row under the shared seed; returns AblationRows."""
    if train_scenes is None:
        train_scenes = synthesize_scenes(config.data, config.train.seed)
    if eval_scenes is None:
        eval_scenes = synthesize_scenes(
            config.data,
            config.train.seed,
            count=config.data.eval_count,
            offset=len(train_scenes),
        )
    results = []
    for name, toggles in rows:
        cfg = row_config(config, toggles)
        model, _, _ = fit_model(cfg, train_scenes)
        report = _evaluate_model(model, eval_scenes, cfg.train.proposal_mode)
        results.append(AblationRow(name=name, toggles=dict(toggles), report=report))
    return results


def format_table(rows, title):
    """TSV table: toggle columns then the four metrics."""
    lines = [f"# {title}", "row\tb_c\tb_o\tb_n\tuam\tl_cons\tap\tap50\tap75\tmiou"]
    for row in rows:
        t = row.toggles
        flags = "\t".join(
            "yes" if v else "no"
            for v in (True, t["b_o"], t["b_n"], t["uam"], t["l_cons"])
        )
        m = row.report
        lines.append(
            f"{row.name}\t{flags}\t{m.ap:.6f}\t{m.ap50:.6f}\t{m.ap75:.6f}\t{m.miou:.6f}"
        )
    return "\n".join(lines) + "\n"


def run_full_ablation(config: Config, out_dir):
    """Both row sets, written as TSV tables; returns (component, module) rows."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train_scenes = synthesize_scenes(config.data, config.train.seed)
    eval_scenes = synthesize_scenes(
        config.data,
        config.train.seed,
        count=config.data.eval_count,
        offset=len(train_scenes),
    )
    component = run_ablation(config, COMPONENT_ROWS, train_scenes, eval_scenes)
    module = run_ablation(config, MODULE_ROWS, train_scenes, eval_scenes)
    (out / "ablation_components.tsv").write_text(
        format_table(component, "component toggles"), encoding="utf-8"
    )
    (out / "ablation_modules.tsv").write_text(
        format_table(module, "module stack"), encoding="utf-8"
    )
    return component, module
