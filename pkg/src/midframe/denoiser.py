"""Motion-conditioned noise prediction network and its training loop.

The network predicts the noise added to the middle-frame latent given the
noisy latent, the diffusion step, the two neighbor-frame latents
(channel-concatenated at the input), and motion hints (area-resized to the
latent resolution and injected through a zero-initialized conv adapter).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .diffusion import NoiseSchedule
from .errors import ConfigError, ShapeError, TrainingDiverged
from .hints import extract_motion_hints, hints_to_tensor, make_hint_backend
from .nn_blocks import (
    Downsample,
    ResBlock,
    SelfAttention,
    Upsample,
    group_norm,
    seed_parameters,
    timestep_embedding,
    zero_module,
)
from .warp import resize_hint_tensor


@dataclass
class DenoiserConfig:
    latent_channels: int = 64
    base_width: int = 64
    depth: int = 2
    attention_heads: int = 4
    time_embed_dim: int = 256
    hint_channels: int = 18     # 2*B per hint direction
    max_timestep: int = 1000
    channel_mult: tuple = ()

    def __post_init__(self):
        if self.base_width % self.attention_heads:
            raise ConfigError(
                f"base_width {self.base_width} not divisible by "
                f"{self.attention_heads} attention heads"
            )
        if not self.channel_mult:
            self.channel_mult = tuple(min(2 ** i, 4) for i in range(self.depth))
        if len(self.channel_mult) != self.depth:
            raise ConfigError(f"channel_mult needs {self.depth} entries")

    @property
    def widths(self) -> list[int]:
        return [self.base_width * m for m in self.channel_mult]

    def to_dict(self) -> dict:
        return asdict(self)


class ConditionalDenoiser(nn.Module):
    """U-Net epsilon-predictor with self-attention at the two coarsest stages."""

    def __init__(self, cfg: DenoiserConfig):
        super().__init__()
        self.cfg = cfg
        widths = cfg.widths
        depth = cfg.depth

        self.time_mlp = nn.Sequential(
            nn.Linear(cfg.base_width, cfg.time_embed_dim),
            nn.SiLU(),
            nn.Linear(cfg.time_embed_dim, cfg.time_embed_dim),
        )
        self.in_conv = nn.Conv2d(3 * cfg.latent_channels, widths[0], 3, padding=1)
        self.hint_adapter = zero_module(
            nn.Conv2d(2 * cfg.hint_channels, widths[0], 3, padding=1)
        )

        def attn_here(i):
            return i >= depth - 2

        self.down_blocks = nn.ModuleList()
        self.down_attn = nn.ModuleList()
        self.downs = nn.ModuleList()
        for i in range(depth):
            self.down_blocks.append(nn.ModuleList([
                ResBlock(widths[i], widths[i], cfg.time_embed_dim),
                ResBlock(widths[i], widths[i], cfg.time_embed_dim),
            ]))
            self.down_attn.append(
                SelfAttention(widths[i], cfg.attention_heads) if attn_here(i) else nn.Identity()
            )
            if i < depth - 1:
                self.downs.append(Downsample(widths[i], widths[i + 1]))

        self.mid1 = ResBlock(widths[-1], widths[-1], cfg.time_embed_dim)
        self.mid_attn = SelfAttention(widths[-1], cfg.attention_heads)
        self.mid2 = ResBlock(widths[-1], widths[-1], cfg.time_embed_dim)

        self.up_blocks = nn.ModuleList()
        self.up_attn = nn.ModuleList()
        self.ups = nn.ModuleList()
        for i in reversed(range(depth)):
            self.up_blocks.append(nn.ModuleList([
                ResBlock(2 * widths[i], widths[i], cfg.time_embed_dim),
                ResBlock(widths[i], widths[i], cfg.time_embed_dim),
            ]))
            self.up_attn.append(
                SelfAttention(widths[i], cfg.attention_heads) if attn_here(i) else nn.Identity()
            )
            if i > 0:
                self.ups.append(Upsample(widths[i], widths[i - 1]))

        self.out_norm = group_norm(widths[0])
        self.out_conv = zero_module(nn.Conv2d(widths[0], cfg.latent_channels, 3, padding=1))

    def forward(
        self,
        z_t: torch.Tensor,
        t: torch.Tensor | int,
        z_prev: torch.Tensor,
        z_next: torch.Tensor,
        hints: torch.Tensor,
    ) -> torch.Tensor:
        if isinstance(t, int):
            t = torch.full((z_t.shape[0],), t, dtype=torch.long, device=z_t.device)
        if t.min() < 1 or t.max() > self.cfg.max_timestep:
            raise ValueError(
                f"t in [{int(t.min())}, {int(t.max())}] outside schedule "
                f"range [1, {self.cfg.max_timestep}]"
            )
        if z_t.shape != z_prev.shape or z_t.shape != z_next.shape:
            raise ShapeError("latent shapes must match")
        if hints.shape[1] != 2 * self.cfg.hint_channels:
            raise ShapeError(
                f"hints have {hints.shape[1]} channels, expected "
                f"{2 * self.cfg.hint_channels}"
            )

        temb = self.time_mlp(
            timestep_embedding(t, self.cfg.base_width).to(z_t.dtype)
        )
        h, w = z_t.shape[-2:]
        m = resize_hint_tensor(hints.to(z_t.dtype), h, w)
        x = self.in_conv(torch.cat([z_t, z_prev, z_next], dim=1)) + self.hint_adapter(m)

        skips = []
        depth = self.cfg.depth
        for i in range(depth):
            for block in self.down_blocks[i]:
                x = block(x, temb)
            x = self.down_attn[i](x)
            skips.append(x)
            if i < depth - 1:
                x = self.downs[i](x)

        x = self.mid2(self.mid_attn(self.mid1(x, temb)), temb)

        for step, i in enumerate(reversed(range(depth))):
            if i != depth - 1:
                x = self.ups[step - 1](x)
            x = torch.cat([x, skips[i]], dim=1)
            for block in self.up_blocks[step]:
                x = block(x, temb)
            x = self.up_attn[step](x)

        return self.out_conv(F.silu(self.out_norm(x)))


def draw_timesteps(gen: torch.Generator, timesteps: int, n: int) -> torch.Tensor:
    """Uniform draws from {1, ..., T}."""
    return torch.randint(1, timesteps + 1, (n,), generator=gen)


def compute_latent_scale(codec, triplets, limit: int = 32) -> float:
    """Std of encoder outputs over a data sample; normalizes latents to
    roughly unit scale so that diffusion starts from a matched prior."""
    from .codec import _to_tensor

    with torch.no_grad():
        frames = [_to_tensor(tri.mid) for tri in triplets[:limit]]
        z, _ = codec.encode(torch.cat(frames))
    return max(float(z.std()), 1e-6)


@dataclass
class DenoiserTrainConfig:
    steps: int = 3000
    batch_size: int = 16
    lr: float = 1e-4
    hint_backend: str = "simulator"
    contrast_threshold: float = 0.2
    b_channels: int = 9
    use_hints: bool = True
    augment: bool = False
    crop: int | None = None


@dataclass
class DenoiserTrainResult:
    model: ConditionalDenoiser
    optimizer: torch.optim.Optimizer
    latent_scale: float
    generator: torch.Generator | None = None
    history: dict = field(default_factory=dict)


def train_denoiser(
    triplets,
    codec,
    schedule: NoiseSchedule,
    denoiser_cfg: DenoiserConfig,
    train_cfg: DenoiserTrainConfig,
    seed: int = 0,
) -> DenoiserTrainResult:
    """Noise-prediction training with a frozen codec.

    Per step: encode the triplet frames, draw t ~ U(1, T) and unit normal
    noise, corrupt the middle latent, extract hints from the ground-truth
    middle frame, and minimize the mean squared error between the drawn and
    the predicted noise (AdamW).
    """
    from .codec import _to_tensor
    from .data import augment as augment_triplet

    if denoiser_cfg.latent_channels != codec.cfg.embed_dim:
        raise ConfigError(
            f"latent_channels={denoiser_cfg.latent_channels} != codec embed_dim="
            f"{codec.cfg.embed_dim}"
        )
    if denoiser_cfg.hint_channels != codec.cfg.hint_channels:
        raise ConfigError("denoiser/codec hint_channels mismatch")
    if denoiser_cfg.max_timestep != schedule.timesteps:
        raise ConfigError(
            f"denoiser max_timestep={denoiser_cfg.max_timestep} != schedule "
            f"T={schedule.timesteps}"
        )

    gen = torch.Generator().manual_seed(seed)
    model = ConditionalDenoiser(denoiser_cfg)
    seed_parameters(model, seed)
    opt = torch.optim.AdamW(model.parameters(), lr=train_cfg.lr)
    codec.eval()
    for p in codec.parameters():
        p.requires_grad_(False)
    backend = make_hint_backend(
        train_cfg.hint_backend,
        b_channels=train_cfg.b_channels,
        contrast_threshold=train_cfg.contrast_threshold,
    )
    latent_scale = compute_latent_scale(codec, triplets)

    sqrt_abar = torch.from_numpy(np.sqrt(schedule.alpha_bar)).float()
    sqrt_1m_abar = torch.from_numpy(np.sqrt(1.0 - schedule.alpha_bar)).float()

    history = {"loss": [], "latent_scale": latent_scale}
    for step in range(train_cfg.steps):
        idx = torch.randint(len(triplets), (train_cfg.batch_size,), generator=gen)
        prevs, mids, nxts, hint_list = [], [], [], []
        for i in idx.tolist():
            tri = triplets[i]
            if train_cfg.augment:
                aug_seed = int(torch.randint(2 ** 31 - 1, (), generator=gen))
                tri = augment_triplet(tri, aug_seed, crop=train_cfg.crop)
            if train_cfg.use_hints:
                hints = extract_motion_hints(tri.prev, tri.mid, tri.next, backend=backend)
            else:
                from .hints import empty_hints
                hints = empty_hints(tri.mid.shape[0], tri.mid.shape[1], train_cfg.b_channels)
            prevs.append(_to_tensor(tri.prev))
            mids.append(_to_tensor(tri.mid))
            nxts.append(_to_tensor(tri.next))
            hint_list.append(hints_to_tensor(hints))
        with torch.no_grad():
            n = train_cfg.batch_size
            z_all, _ = codec.encode(torch.cat(prevs + mids + nxts))
            z_all = z_all / latent_scale
            z_prev, z0, z_next = z_all[:n], z_all[n:2 * n], z_all[2 * n:]
        hints_b = torch.cat(hint_list)

        t = draw_timesteps(gen, schedule.timesteps, n)
        eps = torch.randn(z0.shape, generator=gen)
        sa = sqrt_abar[t - 1].view(-1, 1, 1, 1)
        sb = sqrt_1m_abar[t - 1].view(-1, 1, 1, 1)
        z_t = sa * z0 + sb * eps

        eps_hat = model(z_t, t, z_prev, z_next, hints_b)
        loss = F.mse_loss(eps_hat, eps)
        if not torch.isfinite(loss):
            raise TrainingDiverged(step, {"loss": loss.item()})
        opt.zero_grad()
        loss.backward()
        opt.step()
        history["loss"].append(loss.item())

    model.eval()
    return DenoiserTrainResult(model, opt, latent_scale, gen, history)
