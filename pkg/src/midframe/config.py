"""Flat dotted-key run configuration.

Every tunable lives in DEFAULTS; config files (YAML or JSON) may override
any subset. Unknown keys are rejected, and the hash of the fully resolved
config is embedded in checkpoints for provenance.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import yaml

from .codec import CodecConfig, CodecTrainConfig
from .denoiser import DenoiserConfig, DenoiserTrainConfig
from .diffusion import NoiseSchedule, linear_schedule
from .errors import ConfigError

DEFAULTS: dict = {
    "seed": 0,

    "data.height": 64,
    "data.width": 64,
    "data.channels": 1,
    "data.train_count": 2000,   # total across tiers
    "data.eval_count": 200,
    "data.tiers": ["easy", "medium", "hard"],

    "events.b_channels": 9,
    "events.contrast_threshold": 0.2,

    "flow.block_size": 8,
    "flow.search_radius": 8,

    "codec.f": 8,                 # paper-scale value 32 selectable
    "codec.codebook_size": 512,   # paper-scale value 8192 selectable
    "codec.embed_dim": 64,
    "codec.base_width": 64,
    "codec.channel_mult": [],
    "codec.steps": 4000,
    "codec.batch_size": 4,
    "codec.lr": 1e-4,             # paper-scale value 1e-5 selectable
    "codec.lambda_percep": 0.1,
    "codec.lambda_adv": 0.1,
    "codec.adv_warmup_frac": 0.2,
    "codec.hint_dropout": 0.5,
    "codec.use_hints": True,
    "codec.hint_backend": "simulator",
    "codec.augment": True,
    "codec.crop": 64,
    "codec.disc_width": 32,

    "schedule.timesteps": 1000,
    "schedule.beta_start": 1e-4,
    "schedule.beta_end": 2e-2,

    "denoiser.base_width": 64,
    "denoiser.depth": 2,
    "denoiser.attention_heads": 4,
    "denoiser.time_embed_dim": 256,
    "denoiser.channel_mult": [],
    "denoiser.steps": 6000,
    "denoiser.batch_size": 16,
    "denoiser.lr": 1e-4,          # paper-scale value 1e-6 selectable
    "denoiser.use_hints": True,
    "denoiser.hint_backend": "simulator",
    "denoiser.augment": True,
    "denoiser.crop": 64,

    "sample.kind": "ma-ddim",
    "sample.steps": 200,
    "sample.hints": "simulator",
    "sample.hint_mode": "dynamic",

    "i2e.width": 32,
    "i2e.steps": 500,
    "i2e.batch_size": 8,
    "i2e.lr": 1e-3,

    "ablate.seeds": [0, 1, 2],
    "ablate.cells": ["exp0", "exp1", "exp2", "exp3", "exp3_global", "exp3_flow"],
    "ablate.eval_tier": "hard",
    "ablate.eval_count": 16,
    "ablate.sample_steps": 8,
}


def load_config_file(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a flat mapping of dotted keys")
    return data


def resolve_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults overlaid with a config file and explicit overrides."""
    cfg = dict(DEFAULTS)
    for source in (load_config_file(path) if path else {}, overrides or {}):
        unknown = sorted(set(source) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        for key, value in source.items():
            default = DEFAULTS[key]
            if isinstance(default, bool):
                if not isinstance(value, bool):
                    raise ConfigError(f"{key} expects a boolean, got {value!r}")
            elif isinstance(default, (int, float)) and not isinstance(value, (int, float)):
                raise ConfigError(f"{key} expects a number, got {value!r}")
            elif isinstance(default, str) and not isinstance(value, str):
                raise ConfigError(f"{key} expects a string, got {value!r}")
            elif isinstance(default, list) and not isinstance(value, list):
                raise ConfigError(f"{key} expects a list, got {value!r}")
            cfg[key] = value
    return cfg


def config_hash(cfg: dict) -> str:
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def hint_channels(cfg: dict) -> int:
    return 2 * int(cfg["events.b_channels"])


def codec_config(cfg: dict) -> CodecConfig:
    return CodecConfig(
        in_channels=int(cfg["data.channels"]),
        f=int(cfg["codec.f"]),
        codebook_size=int(cfg["codec.codebook_size"]),
        embed_dim=int(cfg["codec.embed_dim"]),
        base_width=int(cfg["codec.base_width"]),
        hint_channels=hint_channels(cfg),
        channel_mult=tuple(cfg["codec.channel_mult"]),
    )


def codec_train_config(cfg: dict) -> CodecTrainConfig:
    return CodecTrainConfig(
        steps=int(cfg["codec.steps"]),
        batch_size=int(cfg["codec.batch_size"]),
        lr=float(cfg["codec.lr"]),
        lambda_percep=float(cfg["codec.lambda_percep"]),
        lambda_adv=float(cfg["codec.lambda_adv"]),
        adv_warmup_frac=float(cfg["codec.adv_warmup_frac"]),
        hint_dropout=float(cfg["codec.hint_dropout"]),
        use_hints=bool(cfg["codec.use_hints"]),
        hint_backend=str(cfg["codec.hint_backend"]),
        contrast_threshold=float(cfg["events.contrast_threshold"]),
        b_channels=int(cfg["events.b_channels"]),
        disc_width=int(cfg["codec.disc_width"]),
        augment=bool(cfg["codec.augment"]),
        crop=int(cfg["codec.crop"]),
    )


def denoiser_config(cfg: dict) -> DenoiserConfig:
    return DenoiserConfig(
        latent_channels=int(cfg["codec.embed_dim"]),
        base_width=int(cfg["denoiser.base_width"]),
        depth=int(cfg["denoiser.depth"]),
        attention_heads=int(cfg["denoiser.attention_heads"]),
        time_embed_dim=int(cfg["denoiser.time_embed_dim"]),
        hint_channels=hint_channels(cfg),
        max_timestep=int(cfg["schedule.timesteps"]),
        channel_mult=tuple(cfg["denoiser.channel_mult"]),
    )


def denoiser_train_config(cfg: dict) -> DenoiserTrainConfig:
    return DenoiserTrainConfig(
        steps=int(cfg["denoiser.steps"]),
        batch_size=int(cfg["denoiser.batch_size"]),
        lr=float(cfg["denoiser.lr"]),
        hint_backend=str(cfg["denoiser.hint_backend"]),
        contrast_threshold=float(cfg["events.contrast_threshold"]),
        b_channels=int(cfg["events.b_channels"]),
        use_hints=bool(cfg["denoiser.use_hints"]),
        augment=bool(cfg["denoiser.augment"]),
        crop=int(cfg["denoiser.crop"]),
    )


def schedule_config(cfg: dict) -> NoiseSchedule:
    return linear_schedule(
        int(cfg["schedule.timesteps"]),
        float(cfg["schedule.beta_start"]),
        float(cfg["schedule.beta_end"]),
    )
