"""Reverse-diffusion samplers for frame interpolation.

Baseline samplers condition the denoiser on neighbor latents only (hints
stay empty). The motion-aware samplers decode the current middle-frame
estimate at every step, re-extract motion hints against the decoded frame,
and feed them to the next step's denoiser and decoder; hints start empty at
the first step. Every run emits a manifest sufficient to reproduce it
bit-exactly for the deterministic (ddim) kinds.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict

import numpy as np
import torch

from .codec import MotionGuidedCodec, _to_tensor, tensor_to_image
from .denoiser import ConditionalDenoiser
from .diffusion import NoiseSchedule, ddim_step, ddim_timesteps, ddpm_step, predict_z0
from .errors import CheckpointError, ConfigError, ShapeError
from .hints import HintSource, MotionHints, hints_to_tensor, make_hint_backend

MANIFEST_VERSION = 1

BASELINE_KINDS = ("baseline_ddpm", "baseline_ddim")
MA_KINDS = ("ma_ddpm", "ma_ddim")


@dataclass
class ModelBundle:
    """Everything a sampler needs: trained codec + denoiser + schedule."""

    codec: MotionGuidedCodec
    denoiser: ConditionalDenoiser
    schedule: NoiseSchedule
    latent_scale: float = 1.0

    @property
    def hint_b_channels(self) -> int:
        return self.codec.cfg.hint_channels // 2


def parameter_hash(module: torch.nn.Module) -> str:
    h = hashlib.sha256()
    for name, tensor in sorted(module.state_dict().items()):
        h.update(name.encode())
        h.update(tensor.detach().cpu().numpy().tobytes())
    return h.hexdigest()


def image_hash(image: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(image, dtype=np.float32).tobytes()).hexdigest()


@dataclass
class SampleManifest:
    """Reproducibility record emitted next to each sampled frame."""

    sampler: str
    seed: int
    steps: int
    schedule: dict
    hint_backend: str
    hint_backend_params: dict
    hint_mode: str
    hint_targets: list
    latent_scale: float
    decoder_calls: int = 0
    extractions: int = 0
    trace: list = field(default_factory=list)
    final_hint_mass: list = field(default_factory=list)
    codec_hash: str = ""
    denoiser_hash: str = ""
    output_sha256: str = ""
    triplet_id: str = ""
    version: int = MANIFEST_VERSION

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SampleManifest":
        payload = json.loads(text)
        if payload.get("version") != MANIFEST_VERSION:
            raise CheckpointError(f"unsupported manifest version {payload.get('version')}")
        return cls(**payload)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "SampleManifest":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_json(fh.read())


@dataclass
class SampleResult:
    image: np.ndarray
    manifest: SampleManifest
    trajectory: list | None = None


def _prepare_conditioning(models: ModelBundle, frame_prev: np.ndarray, frame_next: np.ndarray):
    if frame_prev.shape != frame_next.shape:
        raise ShapeError(
            f"neighbor frames differ: {frame_prev.shape} vs {frame_next.shape}"
        )
    with torch.no_grad():
        pair = torch.cat([_to_tensor(frame_prev), _to_tensor(frame_next)])
        z, pyr = models.codec.encode(pair)
    z_prev = z[0:1] / models.latent_scale
    z_next = z[1:2] / models.latent_scale
    pyr_prev = [lvl[0:1] for lvl in pyr]
    pyr_next = [lvl[1:2] for lvl in pyr]
    return z_prev, z_next, pyr_prev, pyr_next


def _empty_hint_tensor(models: ModelBundle, h: int, w: int) -> torch.Tensor:
    return torch.zeros(1, 2 * models.codec.cfg.hint_channels, h, w)


def _decode(models: ModelBundle, z_scaled, pyr_prev, pyr_next, hints_tensor) -> np.ndarray:
    with torch.no_grad():
        z_raw = z_scaled * models.latent_scale
        z_q, _, _ = models.codec.quantize(z_raw)
        img = models.codec.decode(z_q, pyr_prev, pyr_next, hints_tensor)
    return tensor_to_image(img)


def _step_pairs(kind: str, schedule: NoiseSchedule, steps: int | None):
    """Sequence of (t, t_prev) pairs walked by the sampler."""
    if kind.endswith("ddim"):
        seq = ddim_timesteps(schedule.timesteps, steps or schedule.timesteps)
        return [(t, seq[i + 1] if i + 1 < len(seq) else 0) for i, t in enumerate(seq)]
    if steps is not None and steps != schedule.timesteps:
        raise ConfigError("ddpm sampling always walks every schedule step; omit steps")
    return [(t, t - 1) for t in range(schedule.timesteps, 0, -1)]


def sample_baseline(
    frame_prev: np.ndarray,
    frame_next: np.ndarray,
    models: ModelBundle,
    kind: str = "baseline_ddim",
    steps: int | None = None,
    seed: int = 0,
    record_trajectory: bool = False,
) -> SampleResult:
    """Reverse loop with empty hints everywhere; final decode with empty hints."""
    if kind not in BASELINE_KINDS:
        raise ConfigError(f"unknown baseline sampler {kind!r}")
    schedule = models.schedule
    z_prev, z_next, pyr_prev, pyr_next = _prepare_conditioning(models, frame_prev, frame_next)
    h, w = frame_prev.shape[:2]
    empty = _empty_hint_tensor(models, h, w)

    gen = torch.Generator().manual_seed(seed)
    z = torch.randn(z_prev.shape, generator=gen)
    pairs = _step_pairs(kind, schedule, steps)
    trajectory = [z.numpy().copy()] if record_trajectory else None

    with torch.no_grad():
        for t, t_prev in pairs:
            eps = models.denoiser(z, t, z_prev, z_next, empty)
            if kind.endswith("ddim"):
                z = ddim_step(z, t, t_prev, eps, schedule)
            else:
                noise = torch.randn(z.shape, generator=gen)
                z = ddpm_step(z, t, eps, noise, schedule)
            if record_trajectory:
                trajectory.append(z.numpy().copy())

    image = _decode(models, z, pyr_prev, pyr_next, empty)
    manifest = SampleManifest(
        sampler=kind,
        seed=seed,
        steps=len(pairs),
        schedule=schedule.echo(),
        hint_backend=HintSource.EMPTY.value,
        hint_backend_params={},
        hint_mode="none",
        hint_targets=[],
        latent_scale=models.latent_scale,
        decoder_calls=1,
        extractions=0,
        codec_hash=parameter_hash(models.codec),
        denoiser_hash=parameter_hash(models.denoiser),
        output_sha256=image_hash(image),
    )
    return SampleResult(image=image, manifest=manifest, trajectory=trajectory)


def sample_motion_aware(
    frame_prev: np.ndarray,
    frame_next: np.ndarray,
    models: ModelBundle,
    kind: str = "ma_ddim",
    steps: int | None = None,
    seed: int = 0,
    hint_backend: str = "simulator",
    hint_backend_params: dict | None = None,
    hint_mode: str = "dynamic",
    hint_targets: tuple = ("decoder", "denoiser"),
    record_trajectory: bool = False,
) -> SampleResult:
    """Sampling with per-step motion-hint re-extraction.

    Each step predicts noise under the hints carried from the previous
    step's decode (empty at the first step), decodes the current middle
    estimate, and re-extracts hints against it at full image resolution.
    hint_mode="global" instead extracts hints once between the two input
    frames and holds them fixed, skipping the per-step decodes.
    """
    if kind not in MA_KINDS:
        raise ConfigError(f"unknown motion-aware sampler {kind!r}")
    for target in hint_targets:
        if target not in ("decoder", "denoiser"):
            raise ConfigError(f"unknown hint target {target!r}")
    schedule = models.schedule
    params = dict(hint_backend_params or {})
    params.setdefault("b_channels", models.hint_b_channels)
    backend = make_hint_backend(hint_backend, **params)
    z_prev, z_next, pyr_prev, pyr_next = _prepare_conditioning(models, frame_prev, frame_next)
    h, w = frame_prev.shape[:2]
    empty = _empty_hint_tensor(models, h, w)

    gen = torch.Generator().manual_seed(seed)
    z = torch.randn(z_prev.shape, generator=gen)
    pairs = _step_pairs(kind, schedule, steps)
    trajectory = [z.numpy().copy()] if record_trajectory else None

    manifest = SampleManifest(
        sampler=kind,
        seed=seed,
        steps=len(pairs),
        schedule=schedule.echo(),
        hint_backend=HintSource(hint_backend).value,
        hint_backend_params={
            k: v for k, v in params.items()
            if isinstance(v, (str, int, float, bool, list, dict))
        },
        hint_mode=hint_mode,
        hint_targets=list(hint_targets),
        latent_scale=models.latent_scale,
        codec_hash=parameter_hash(models.codec),
        denoiser_hash=parameter_hash(models.denoiser),
    )

    if hint_mode == "global":
        fn, tag = backend
        vol = fn(frame_prev, frame_next)
        hints = MotionHints(forward=vol, backward=vol.copy(), source_tag=tag)
        manifest.extractions = 1
        hint_tensor = hints_to_tensor(hints)
        den_hints = hint_tensor if "denoiser" in hint_targets else empty
        dec_hints = hint_tensor if "decoder" in hint_targets else empty
        with torch.no_grad():
            for t, t_prev in pairs:
                eps = models.denoiser(z, t, z_prev, z_next, den_hints)
                if kind.endswith("ddim"):
                    z = ddim_step(z, t, t_prev, eps, schedule)
                else:
                    noise = torch.randn(z.shape, generator=gen)
                    z = ddpm_step(z, t, eps, noise, schedule)
                manifest.trace.append({
                    "t": t, "t_prev": t_prev,
                    "used_hint_mass": list(hints.mass), "hints_from": "global",
                    "extracted_hint_mass": list(hints.mass),
                })
                if record_trajectory:
                    trajectory.append(z.numpy().copy())
        image = _decode(models, z, pyr_prev, pyr_next, dec_hints)
        manifest.decoder_calls = 1
        manifest.final_hint_mass = list(hints.mass)
        manifest.output_sha256 = image_hash(image)
        return SampleResult(image=image, manifest=manifest, trajectory=trajectory)

    if hint_mode != "dynamic":
        raise ConfigError(f"unknown hint_mode {hint_mode!r}")

    b = models.hint_b_channels
    hints = MotionHints(
        forward=np.zeros((h, w, 2 * b), np.float32),
        backward=np.zeros((h, w, 2 * b), np.float32),
        source_tag=HintSource.EMPTY,
    )
    hints_from = None
    with torch.no_grad():
        for t, t_prev in pairs:
            hint_tensor = hints_to_tensor(hints)
            den_hints = hint_tensor if "denoiser" in hint_targets else empty
            dec_hints = hint_tensor if "decoder" in hint_targets else empty

            eps = models.denoiser(z, t, z_prev, z_next, den_hints)
            z0_hat = predict_z0(z, t, eps, schedule)
            mid_estimate = _decode(models, z0_hat, pyr_prev, pyr_next, dec_hints)
            manifest.decoder_calls += 1

            try:
                fn, tag = backend
                new_hints = MotionHints(
                    forward=fn(frame_prev, mid_estimate),
                    backward=fn(mid_estimate, frame_next),
                    source_tag=tag,
                )
            except Exception as exc:
                raise RuntimeError(f"hint backend failed at step t={t}") from exc
            manifest.extractions += 1
            manifest.trace.append({
                "t": t, "t_prev": t_prev,
                "used_hint_mass": list(hints.mass),
                "hints_from": hints_from,
                "extracted_hint_mass": list(new_hints.mass),
            })

            if kind.endswith("ddim"):
                z = ddim_step(z, t, t_prev, eps, schedule)
            else:
                noise = torch.randn(z.shape, generator=gen)
                z = ddpm_step(z, t, eps, noise, schedule)
            hints = new_hints
            hints_from = t
            if record_trajectory:
                trajectory.append(z.numpy().copy())

    final_tensor = hints_to_tensor(hints)
    dec_hints = final_tensor if "decoder" in hint_targets else empty
    image = _decode(models, z, pyr_prev, pyr_next, dec_hints)
    manifest.decoder_calls += 1
    manifest.final_hint_mass = list(hints.mass)
    manifest.output_sha256 = image_hash(image)
    return SampleResult(image=image, manifest=manifest, trajectory=trajectory)


def sample(
    frame_prev: np.ndarray,
    frame_next: np.ndarray,
    models: ModelBundle,
    kind: str,
    **kwargs,
) -> SampleResult:
    """Dispatch to the baseline or motion-aware sampler by kind."""
    if kind in BASELINE_KINDS:
        kwargs.pop("hint_backend", None)
        kwargs.pop("hint_backend_params", None)
        kwargs.pop("hint_mode", None)
        kwargs.pop("hint_targets", None)
        return sample_baseline(frame_prev, frame_next, models, kind=kind, **kwargs)
    if kind in MA_KINDS:
        return sample_motion_aware(frame_prev, frame_next, models, kind=kind, **kwargs)
    raise ConfigError(f"unknown sampler kind {kind!r}")


def replay_manifest(
    manifest: SampleManifest,
    models: ModelBundle,
    frame_prev: np.ndarray,
    frame_next: np.ndarray,
    verify: bool = True,
    extra_backend_params: dict | None = None,
) -> SampleResult:
    """Re-run a recorded sampling run; optionally verify the output hash.

    extra_backend_params re-supplies non-serializable backend arguments
    (e.g. a loaded image-to-event model for the learned backend).
    """
    if manifest.schedule != models.schedule.echo():
        raise CheckpointError("manifest schedule does not match the loaded models")
    if manifest.codec_hash != parameter_hash(models.codec):
        raise CheckpointError("codec parameters differ from the manifest's recording")
    if manifest.denoiser_hash != parameter_hash(models.denoiser):
        raise CheckpointError("denoiser parameters differ from the manifest's recording")

    steps = manifest.steps if manifest.sampler.endswith("ddim") else None
    if manifest.sampler in BASELINE_KINDS:
        result = sample_baseline(
            frame_prev, frame_next, models,
            kind=manifest.sampler, steps=steps, seed=manifest.seed,
        )
    else:
        params = dict(manifest.hint_backend_params)
        params.update(extra_backend_params or {})
        result = sample_motion_aware(
            frame_prev, frame_next, models,
            kind=manifest.sampler, steps=steps, seed=manifest.seed,
            hint_backend=manifest.hint_backend,
            hint_backend_params=params,
            hint_mode=manifest.hint_mode,
            hint_targets=tuple(manifest.hint_targets),
        )
    if verify and manifest.output_sha256:
        if image_hash(result.image) != manifest.output_sha256:
            raise CheckpointError("replayed output does not match the manifest hash")
    return result
