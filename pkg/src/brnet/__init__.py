"""Bilayer segmentation-recombination network for overlapping worm imagery."""

from .arrayio import ContainerError, read_arrays, write_arrays
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import (
    Config,
    ConfigError,
    DataConfig,
    ModelConfig,
    TrainConfig,
    config_from_dict,
    config_to_dict,
    load_config,
)
from .dataset_io import DatasetError, load_dataset, save_dataset
from .estimator import WormInstanceSegmenter
from .losses import LossBundle, LossDiagnostics, LossWeights, total_loss
from .mask_ops import (
    binarize,
    decompose_instances,
    mask_iou,
    require_binary_mask,
    require_soft_mask,
    soft_xor_merge,
)
from .metrics import MetricsReport, evaluate, match_detections, mean_iou
from .model import BRNet, Detection, UnitedAttention
from .render import render_dataset, render_scene
from .scenes import AnnotatedScene, Instance, SceneConfig, WormSpec, tight_bbox
from .synth import augment, crop_scene, generate_scene, hflip_scene, rotate_scene
from .train import (
    TrainingDiverged,
    fit_model,
    learning_rate,
    synthesize_scenes,
    train_run,
)

__version__ = "0.1.0"

__all__ = [
    "AnnotatedScene",
    "BRNet",
    "CheckpointError",
    "Config",
    "ConfigError",
    "ContainerError",
    "DataConfig",
    "DatasetError",
    "Detection",
    "Instance",
    "LossBundle",
    "LossDiagnostics",
    "LossWeights",
    "MetricsReport",
    "ModelConfig",
    "SceneConfig",
    "TrainConfig",
    "TrainingDiverged",
    "UnitedAttention",
    "WormInstanceSegmenter",
    "WormSpec",
    "augment",
    "binarize",
    "config_from_dict",
    "config_to_dict",
    "crop_scene",
    "decompose_instances",
    "evaluate",
    "fit_model",
    "generate_scene",
    "hflip_scene",
    "learning_rate",
    "load_checkpoint",
    "load_config",
    "load_dataset",
    "mask_iou",
    "match_detections",
    "mean_iou",
    "read_arrays",
    "render_dataset",
    "render_scene",
    "require_binary_mask",
    "require_soft_mask",
    "rotate_scene",
    "save_checkpoint",
    "save_dataset",
    "soft_xor_merge",
    "tight_bbox",
    "total_loss",
    "train_run",
    "write_arrays",
]
