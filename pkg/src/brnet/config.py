"""Configuration dataclasses and strict YAML loading.

Unknown keys anywhere in a config file are rejected rather than ignored, so
typos fail loudly. All invariant violations surface as ConfigError.
"""

from dataclasses import asdict, dataclass, field, fields

import yaml

from .losses import LossWeights

PROPOSAL_MODES = ("rpn", "ground_truth")


class ConfigError(ValueError):
    """A config file or config value violates the schema."""


@dataclass
class ModelConfig:
    """Architecture knobs; defaults are the desk-scale configuration."""

    widths: tuple = (16, 32, 64, 128)
    attention_mid_channels: int = 32
    attention_reduction: int = 4
    fpn_smooth_kernel: int = 1
    use_attention: bool = True
    use_overlap_head: bool = True
    use_nonoverlap_head: bool = True
    use_recombine: bool = True
    rpn_top_n: int = 64
    rpn_nms_iou: float = 0.7
    score_threshold: float = 0.5
    detection_nms_iou: float = 0.5

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        if len(self.widths) != 4:
            raise ConfigError("widths must list 4 backbone stage channel counts")
        if self.fpn_smooth_kernel not in (1, 3):
            raise ConfigError("fpn_smooth_kernel must be 1 or 3")
        if self.attention_mid_channels < self.attention_reduction:
            raise ConfigError("attention_mid_channels must be >= attention_reduction")
        if self.use_nonoverlap_head and not self.use_overlap_head:
            raise ConfigError("the non-overlap head requires the overlap head")
        if self.use_recombine and not (self.use_overlap_head and self.use_nonoverlap_head):
            raise ConfigError("recombination requires both region heads")
        if not 0.0 < self.rpn_nms_iou < 1.0 or not 0.0 < self.detection_nms_iou < 1.0:
            raise ConfigError("NMS IoU thresholds must lie in (0, 1)")


@dataclass
class TrainConfig:
    batch_size: int = 2
    lr_initial: float = 0.01
    lr_final: float = 0.001
    warmup_iters: int = 20
    total_iters: int = 200
    optimizer: str = "adam"
    iter_unit: str = "step"
    lr_decay: str = "linear"
    proposal_mode: str = "rpn"
    seed: int = 0
    checkpoint_every: int = 0
    grad_clip_norm: float = 1.0
    adam_betas: tuple = (0.9, 0.999)
    loss_weights: LossWeights = field(default_factory=LossWeights)

    def __post_init__(self):
        if isinstance(self.loss_weights, dict):
            try:
                self.loss_weights = LossWeights(**self.loss_weights)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"loss_weights: {exc}") from exc
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.lr_final > self.lr_initial:
            raise ConfigError("lr_final must be <= lr_initial")
        if self.lr_initial <= 0:
            raise ConfigError("lr_initial must be > 0")
        if not 0 <= self.warmup_iters < self.total_iters:
            raise ConfigError("need 0 <= warmup_iters < total_iters")
        if self.optimizer != "adam":
            raise ConfigError(f"unsupported optimizer {self.optimizer!r}")
        if self.iter_unit not in ("step", "epoch"):
            raise ConfigError("iter_unit must be 'step' or 'epoch'")
        if self.lr_decay not in ("linear", "step"):
            raise ConfigError("lr_decay must be 'linear' or 'step'")
        if self.proposal_mode not in PROPOSAL_MODES:
            raise ConfigError(f"proposal_mode must be one of {PROPOSAL_MODES}")
        if self.checkpoint_every < 0:
            raise ConfigError("checkpoint_every must be >= 0")
        if self.grad_clip_norm < 0:
            raise ConfigError("grad_clip_norm must be >= 0 (0 disables clipping)")
        self.adam_betas = tuple(float(b) for b in self.adam_betas)
        if len(self.adam_betas) != 2 or not all(0.0 <= b < 1.0 for b in self.adam_betas):
            raise ConfigError("adam_betas must be two values in [0, 1)")


@dataclass
class DataConfig:
    """Synthesis parameters for runs that generate their own data."""

    image_size: tuple = (256, 256)
    worm_count_range: tuple = (2, 4)
    overlap_bias: float = 0.9
    noise_profile: str = "clean"
    train_count: int = 8
    eval_count: int = 4
    augment_ops: tuple = ()

    def __post_init__(self):
        self.image_size = tuple(int(v) for v in self.image_size)
        self.worm_count_range = tuple(int(v) for v in self.worm_count_range)
        self.augment_ops = tuple(self.augment_ops)
        if self.train_count < 0 or self.eval_count < 0:
            raise ConfigError("scene counts must be >= 0")
        bad = set(self.augment_ops) - {"rotate", "crop", "hflip"}
        if bad:
            raise ConfigError(f"unknown augment_ops {sorted(bad)}")


@dataclass
class Config:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)


def _build_section(cls, mapping, context):
    if mapping is None:
        mapping = {}
    if not isinstance(mapping, dict):
        raise ConfigError(f"section {context!r} must be a mapping")
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in section {context!r}")
    try:
        return cls(**mapping)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"section {context!r}: {exc}") from exc


def config_from_dict(raw):
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    unknown = sorted(set(raw) - {"model", "train", "data"})
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {unknown}")
    return Config(
        model=_build_section(ModelConfig, raw.get("model"), "model"),
        train=_build_section(TrainConfig, raw.get("train"), "train"),
        data=_build_section(DataConfig, raw.get("data"), "data"),
    )


def load_config(path):
    """Parse a YAML config file into a validated Config."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    return config_from_dict(raw)


def config_to_dict(config: Config):
    """JSON-serializable view, used for logging and checkpoint metadata."""
    return asdict(config)
