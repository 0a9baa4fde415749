"""Config schema: defaults, invariants, strict YAML loading."""

import dataclasses

import pytest

from brnet.config import (
    Config,
    ConfigError,
    DataConfig,
    ModelConfig,
    TrainConfig,
    config_from_dict,
    config_to_dict,
    load_config,
)


def test_defaults_are_the_published_training_recipe():
    t = TrainConfig()
    assert t.lr_initial == 0.01
    assert t.lr_final == 0.001
    assert t.warmup_iters == 20
    assert t.total_iters == 200
    assert t.optimizer == "adam"
    assert t.loss_weights.lambda_dec == 1.0
    assert t.loss_weights.lambda_rmask == 1.0
    assert t.loss_weights.lambda_cons == 1.0


def test_default_model_and_data_shape():
    m = ModelConfig()
    assert len(m.widths) == 4
    assert m.use_attention and m.use_overlap_head and m.use_recombine
    d = DataConfig()
    assert d.image_size == (256, 256)
    assert d.image_size[0] % 32 == 0 and d.image_size[1] % 32 == 0


@pytest.mark.parametrize(
    "kwargs",
    [
        {"batch_size": 0},
        {"lr_initial": 0.0},
        {"lr_initial": 0.001, "lr_final": 0.01},
        {"warmup_iters": 200, "total_iters": 200},
        {"warmup_iters": -1},
        {"optimizer": "sgd"},
        {"iter_unit": "minute"},
        {"lr_decay": "cosine"},
        {"proposal_mode": "oracle"},
        {"checkpoint_every": -1},
        {"grad_clip_norm": -0.5},
        {"loss_weights": {"lambda_dec": -1.0}},
    ],
)
def test_train_invariants_rejected(kwargs):
    with pytest.raises(ConfigError):
        TrainConfig(**kwargs)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"widths": (16, 32, 64)},
        {"fpn_smooth_kernel": 5},
        {"attention_mid_channels": 2, "attention_reduction": 4},
        {"use_overlap_head": False, "use_nonoverlap_head": True},
        {"use_overlap_head": False, "use_nonoverlap_head": False, "use_recombine": True},
        {"rpn_nms_iou": 1.0},
        {"detection_nms_iou": 0.0},
    ],
)
def test_model_invariants_rejected(kwargs):
    with pytest.raises(ConfigError):
        ModelConfig(**kwargs)


def test_data_invariants_rejected():
    with pytest.raises(ConfigError):
        DataConfig(train_count=-1)
    with pytest.raises(ConfigError):
        DataConfig(augment_ops=("vflip",))


def test_unknown_keys_rejected_everywhere():
    with pytest.raises(ConfigError, match="top-level"):
        config_from_dict({"trian": {}})
    with pytest.raises(ConfigError, match="unknown key"):
        config_from_dict({"train": {"lr": 0.01}})
    with pytest.raises(ConfigError, match="unknown key"):
        config_from_dict({"model": {"width": (1, 2, 3, 4)}})


def test_non_mapping_sections_rejected():
    with pytest.raises(ConfigError):
        config_from_dict([1, 2])
    with pytest.raises(ConfigError):
        config_from_dict({"train": [1]})


def test_yaml_round_trip(tmp_path):
    import yaml

    cfg = Config(
        model=ModelConfig(widths=(8, 16, 24, 32), use_attention=False),
        train=TrainConfig(batch_size=4, seed=7, proposal_mode="ground_truth"),
        data=DataConfig(image_size=(96, 96), train_count=2),
    )
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(config_to_dict(cfg)), encoding="utf-8")
    loaded = load_config(path)
    assert config_to_dict(loaded) == config_to_dict(cfg)


def test_empty_yaml_gives_defaults(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("", encoding="utf-8")
    assert config_to_dict(load_config(path)) == config_to_dict(Config())


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("train: [unclosed", encoding="utf-8")
    with pytest.raises(ConfigError, match="not valid YAML"):
        load_config(bad)


def test_to_dict_is_plain_data():
    d = config_to_dict(Config())
    assert set(d) == {"model", "train", "data"}
    # dataclasses.asdict flattens nested dataclasses into dicts
    assert isinstance(d["train"]["loss_weights"], dict)
    assert not any(dataclasses.is_dataclass(v) for v in d.values())
