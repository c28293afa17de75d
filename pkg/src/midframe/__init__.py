"""Motion-hinted latent diffusion for middle-frame video interpolation."""

from .diffusion import (
    NoiseSchedule,
    ddim_step,
    ddim_timesteps,
    ddpm_step,
    linear_schedule,
    predict_z0,
    q_sample,
)
from .events import Event, EventVolume, build_event_volume, simulate_events
from .hints import HintSource, MotionHints, empty_hints, extract_motion_hints
from .codec import CodecConfig, LatentCode, MotionGuidedCodec, quantize, train_codec
from .denoiser import ConditionalDenoiser, DenoiserConfig, train_denoiser
from .sampling import (
    ModelBundle,
    SampleManifest,
    SampleResult,
    replay_manifest,
    sample,
    sample_baseline,
    sample_motion_aware,
)
from .data import FrameTriplet, SceneSpec, augment, generate_synthetic
from .metrics import psnr, ssim

__version__ = "0.1.0"

__all__ = [
    "NoiseSchedule", "linear_schedule", "q_sample", "predict_z0",
    "ddpm_step", "ddim_step", "ddim_timesteps",
    "Event", "EventVolume", "build_event_volume", "simulate_events",
    "HintSource", "MotionHints", "empty_hints", "extract_motion_hints",
    "CodecConfig", "LatentCode", "MotionGuidedCodec", "quantize", "train_codec",
    "ConditionalDenoiser", "DenoiserConfig", "train_denoiser",
    "ModelBundle", "SampleManifest", "SampleResult",
    "sample", "sample_baseline", "sample_motion_aware", "replay_manifest",
    "FrameTriplet", "SceneSpec", "augment", "generate_synthetic",
    "psnr", "ssim",
]
