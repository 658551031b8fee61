"""Shared fixtures: a toy corpus and a fully trained pipeline (built once)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from rainsynth.dataset import generate_dataset
from rainsynth.rainmodel import DegradationConfig

from reftrainer import ModelConfig, load_corpus, pretrain_fpm, pretrain_hrrm, train_joint


def write_smooth_image(path: Path, seed: int, size: int = 32) -> None:
    """Piecewise-smooth random image (bilinear-upsampled coarse noise)."""
    rng = np.random.default_rng(seed)
    base = (rng.random((4, 4, 3)) * 255).astype(np.uint8)
    Image.fromarray(base, "RGB").resize((size, size), Image.BILINEAR).save(path)


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("toy_corpus")
    hr = root / "hr"
    hr.mkdir()
    for i in range(8):
        write_smooth_image(hr / f"face_{i}.png", seed=i)
    generate_dataset(hr, DegradationConfig(master_seed=2), (1.0, 0.0, 0.0),
                     root / "corpus", workers=1)
    return root / "corpus"


@pytest.fixture(scope="session")
def corpus(corpus_dir):
    return load_corpus(corpus_dir / "manifest.json")


@pytest.fixture(scope="session")
def toy_config() -> ModelConfig:
    # Toy-scale schedule: higher lr than the full-scale default so the
    # tiny nets overfit 8 samples within a few hundred steps.
    return ModelConfig(seed=0, learning_rate=3e-3)


@pytest.fixture(scope="session")
def trained_pipeline(corpus, toy_config):
    """Full recipe trained once per session: 400/400/600 steps."""
    hrrm, hrrm_trace = pretrain_hrrm(corpus, toy_config, steps=400, batch_size=8)
    fpm, fpm_trace = pretrain_fpm(corpus, hrrm, toy_config, steps=400, batch_size=8)
    bundle, joint_trace = train_joint(corpus, hrrm, fpm, toy_config,
                                      steps=600, batch_size=8)
    return {
        "bundle": bundle,
        "hrrm_trace": hrrm_trace,
        "fpm_trace": fpm_trace,
        "joint_trace": joint_trace,
    }
