"""Shared fixtures. Heavy fixtures are session-scoped so the suite stays fast."""

import sys

import numpy as np
import pytest
import torch

from brnet.config import Config, DataConfig, ModelConfig, TrainConfig
from brnet.train import fit_model, synthesize_scenes


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    """One visible verdict line per acceptance criterion, capture or not."""
    outcome = yield
    rep = outcome.get_result()
    if "test_acceptance" not in item.nodeid:
        return
    failed_setup = rep.when == "setup" and not rep.passed
    if rep.when == "call" or failed_setup:
        verdict = "PASS" if rep.passed else "FAIL"
        print(f"[acceptance] {verdict} {item.name}", file=sys.__stderr__)
        sys.__stderr__.flush()


def tiny_config(seed=11, total_iters=6, **model_kw):
    return Config(
        model=ModelConfig(widths=(8, 16, 24, 32), **model_kw),
        train=TrainConfig(
            batch_size=2,
            total_iters=total_iters,
            warmup_iters=2,
            lr_initial=1e-3,
            lr_final=1e-4,
            proposal_mode="ground_truth",
            seed=seed,
        ),
        data=DataConfig(
            image_size=(96, 96),
            worm_count_range=(2, 2),
            train_count=2,
            eval_count=1,
        ),
    )


@pytest.fixture(scope="session")
def small_scenes():
    cfg = tiny_config()
    return synthesize_scenes(cfg.data, cfg.train.seed, count=3)


@pytest.fixture(scope="session")
def trained_tiny(small_scenes):
    """A short ground-truth-mode run shared by checkpoint/estimator/render tests."""
    cfg = tiny_config()
    model, optimizer, history = fit_model(cfg, small_scenes[:2])
    return {"config": cfg, "model": model, "optimizer": optimizer,
            "history": history, "scenes": small_scenes[:2]}


@pytest.fixture(autouse=True)
def _reseed_torch():
    torch.manual_seed(0)
    yield


def random_binary_masks(rng, n, h, w, p=0.3):
    return [(rng.random((h, w)) < p).astype(np.uint8) for _ in range(n)]
