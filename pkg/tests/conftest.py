import numpy as np
import pytest
import torch

from midframe.codec import CodecConfig, MotionGuidedCodec
from midframe.data import SceneSpec, generate_synthetic
from midframe.denoiser import ConditionalDenoiser, DenoiserConfig
from midframe.diffusion import linear_schedule
from midframe.nn_blocks import seed_parameters
from midframe.sampling import ModelBundle

torch.set_num_threads(2)

TINY_B = 3  # hint temporal channels used by the tiny model fixtures


def tiny_codec(seed=0, in_channels=1) -> MotionGuidedCodec:
    cfg = CodecConfig(
        in_channels=in_channels, f=4, codebook_size=32, embed_dim=16,
        base_width=16, hint_channels=2 * TINY_B, channel_mult=(1, 2),
    )
    codec = MotionGuidedCodec(cfg)
    seed_parameters(codec, seed)
    codec.eval()
    return codec


def tiny_denoiser(seed=1, timesteps=32) -> ConditionalDenoiser:
    cfg = DenoiserConfig(
        latent_channels=16, base_width=16, depth=2, attention_heads=4,
        time_embed_dim=32, hint_channels=2 * TINY_B, max_timestep=timesteps,
    )
    model = ConditionalDenoiser(cfg)
    seed_parameters(model, seed)
    model.eval()
    return model


@pytest.fixture
def tiny_models() -> ModelBundle:
    schedule = linear_schedule(32)
    return ModelBundle(
        codec=tiny_codec(), denoiser=tiny_denoiser(), schedule=schedule,
        latent_scale=1.0,
    )


@pytest.fixture
def tiny_triplets():
    spec = SceneSpec(height=32, width=32, motion_tier="hard", size_range=(3.0, 6.0))
    return generate_synthetic(spec, 4, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
