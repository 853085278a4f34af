"""Shared fixtures: a deliberately tiny model configuration that still
exercises every code path (multiple heads, both stacks, padding branch)."""

import numpy as np
import pytest

from patchformer import ModelConfig, PatchformerModel


@pytest.fixture
def tiny_config() -> ModelConfig:
    return ModelConfig(
        seq_len=16,
        pred_len=8,
        n_channels=2,
        patch_len=4,
        stride=2,
        d_model=8,
        n_heads=2,
        d_ff=16,
        n_encoder_layers=1,
        n_decoder_layers=1,
        dropout=0.0,
        seed=0,
    )


@pytest.fixture
def tiny_model(tiny_config) -> PatchformerModel:
    return PatchformerModel.build(tiny_config)


@pytest.fixture
def rng_np() -> np.random.Generator:
    return np.random.default_rng(1234)
