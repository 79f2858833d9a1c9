import numpy as np
import pytest
import torch

from grace.model import ModelConfig
from grace.encoders import ImageEncoderConfig, PointEncoderConfig, PointLevel
from grace.synthetic import GeneratorConfig, generate_sample


def tiny_model_config(num_parts: int = 8) -> ModelConfig:
    return ModelConfig(
        channels=16, num_parts=num_parts, part_channels=16, attention_dim=16,
        global_channels=16, fused_channels=16, head_channels=16,
        image=ImageEncoderConfig(stage_channels=(4, 8, 16), out_channels=16),
        points=PointEncoderConfig(
            levels=(PointLevel(48, 0.3, 8, 16), PointLevel(16, 0.6, 8, 16)),
            lift_channels=8,
        ),
    )


@pytest.fixture
def tiny_cfg():
    return tiny_model_config()


@pytest.fixture
def tiny_sample():
    cfg = GeneratorConfig(n_points=256, image_size=(64, 64), num_parts=8)
    return generate_sample(seed=7, index=0, cfg=cfg)


@pytest.fixture(autouse=True)
def _seed_torch():
    torch.manual_seed(0)
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(0)
