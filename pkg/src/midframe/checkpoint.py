"""Checkpoint serialization for trained codecs and denoisers.

Checkpoints are torch archives holding only plain containers and tensors:
a mandatory version field, a kind tag, config echoes, parameter and
optimizer state, and the training RNG state. Loading rebuilds the model
from the echoed config, so round trips are bit-exact.
"""

from __future__ import annotations

import torch

from .codec import CodecConfig, CodecTrainResult, MotionGuidedCodec, PatchDiscriminator
from .denoiser import ConditionalDenoiser, DenoiserConfig, DenoiserTrainResult
from .diffusion import NoiseSchedule, schedule_from_echo
from .errors import CheckpointError

CHECKPOINT_VERSION = 1


def _base_payload(kind: str, config_echo: dict | None, config_hash: str | None) -> dict:
    return {
        "version": CHECKPOINT_VERSION,
        "kind": kind,
        "run_config": dict(config_echo or {}),
        "config_hash": config_hash or "",
    }


def save_checkpoint(path, payload: dict) -> None:
    if "version" not in payload or "kind" not in payload:
        raise CheckpointError("checkpoint payload needs 'version' and 'kind'")
    torch.save(payload, path)


def load_checkpoint(path, expected_kind: str | None = None) -> dict:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    version = payload.get("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version!r} in {path}")
    if expected_kind is not None and payload.get("kind") != expected_kind:
        raise CheckpointError(
            f"expected a {expected_kind!r} checkpoint, found {payload.get('kind')!r}"
        )
    return payload


def save_codec_checkpoint(
    path,
    result: CodecTrainResult,
    config_echo: dict | None = None,
    config_hash: str | None = None,
) -> None:
    payload = _base_payload("codec", config_echo, config_hash)
    payload.update({
        "codec_config": result.model.cfg.to_dict(),
        "model_state": result.model.state_dict(),
        "disc_state": result.discriminator.state_dict(),
        "optimizer_state": result.optimizer.state_dict(),
        "disc_optimizer_state": result.disc_optimizer.state_dict(),
        "rng_state": result.generator.get_state() if result.generator else None,
        "history_tail": {k: v[-50:] for k, v in result.history.items()
                         if isinstance(v, list)},
    })
    save_checkpoint(path, payload)


def load_codec_checkpoint(path) -> tuple[MotionGuidedCodec, dict]:
    payload = load_checkpoint(path, expected_kind="codec")
    cfg_dict = dict(payload["codec_config"])
    cfg_dict["channel_mult"] = tuple(cfg_dict.get("channel_mult") or ())
    cfg = CodecConfig(**cfg_dict)
    model = MotionGuidedCodec(cfg)
    model.load_state_dict(payload["model_state"])
    model.eval()
    return model, payload


def save_denoiser_checkpoint(
    path,
    result: DenoiserTrainResult,
    schedule: NoiseSchedule,
    config_echo: dict | None = None,
    config_hash: str | None = None,
) -> None:
    payload = _base_payload("denoiser", config_echo, config_hash)
    payload.update({
        "denoiser_config": result.model.cfg.to_dict(),
        "schedule": schedule.echo(),
        "latent_scale": result.latent_scale,
        "model_state": result.model.state_dict(),
        "optimizer_state": result.optimizer.state_dict(),
        "rng_state": result.generator.get_state() if result.generator else None,
        "history_tail": {k: v[-50:] for k, v in result.history.items()
                         if isinstance(v, list)},
    })
    save_checkpoint(path, payload)


def load_denoiser_checkpoint(path) -> tuple[ConditionalDenoiser, NoiseSchedule, float, dict]:
    payload = load_checkpoint(path, expected_kind="denoiser")
    cfg_dict = dict(payload["denoiser_config"])
    cfg_dict["channel_mult"] = tuple(cfg_dict.get("channel_mult") or ())
    cfg = DenoiserConfig(**cfg_dict)
    model = ConditionalDenoiser(cfg)
    model.load_state_dict(payload["model_state"])
    model.eval()
    schedule = schedule_from_echo(payload["schedule"])
    return model, schedule, float(payload["latent_scale"]), payload


def save_i2e_checkpoint(path, model, config_echo: dict | None = None,
                        config_hash: str | None = None) -> None:
    payload = _base_payload("i2e", config_echo, config_hash)
    payload.update({
        "b_channels": model.b_channels,
        "width": model.net[0].out_channels,
        "model_state": model.state_dict(),
    })
    save_checkpoint(path, payload)


def load_i2e_checkpoint(path):
    from .hints import ImageToEvents

    payload = load_checkpoint(path, expected_kind="i2e")
    model = ImageToEvents(b_channels=payload["b_channels"], width=payload["width"])
    model.load_state_dict(payload["model_state"])
    model.eval()
    return model, payload


def load_bundle(codec_path, denoiser_path):
    """Load codec + denoiser checkpoints into a sampling-ready bundle."""
    from .sampling import ModelBundle

    codec, _ = load_codec_checkpoint(codec_path)
    denoiser, schedule, latent_scale, _ = load_denoiser_checkpoint(denoiser_path)
    if denoiser.cfg.latent_channels != codec.cfg.embed_dim:
        raise CheckpointError("codec/denoiser latent dimensions do not match")
    if denoiser.cfg.hint_channels != codec.cfg.hint_channels:
        raise CheckpointError("codec/denoiser hint channel counts do not match")
    return ModelBundle(codec=codec, denoiser=denoiser, schedule=schedule,
                       latent_scale=latent_scale)
