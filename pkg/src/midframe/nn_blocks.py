"""Shared network building blocks and deterministic initialization."""

from __future__ import annotations

import math

import torch
from torch import nn


def zero_module(module: nn.Module) -> nn.Module:
    """Zero a module's parameters and mark it to stay zero under re-seeding."""
    for p in module.parameters():
        nn.init.zeros_(p)
    module._zero_init = True
    return module


def seed_parameters(model: nn.Module, seed: int) -> None:
    """Deterministically re-initialize all parameters from a private generator.

    Keeps initialization independent of torch's global RNG so that model
    construction is reproducible from an explicit seed. Modules marked by
    zero_module keep their all-zero parameters.
    """
    gen = torch.Generator().manual_seed(seed)
    zero_params = set()
    for m in model.modules():
        if getattr(m, "_zero_init", False):
            for p in m.parameters():
                zero_params.add(id(p))

    for name, p in sorted(model.named_parameters(), key=lambda kv: kv[0]):
        if id(p) in zero_params:
            with torch.no_grad():
                p.zero_()
            continue
        with torch.no_grad():
            if name.endswith("codebook.weight"):
                k = p.shape[0]
                p.uniform_(-1.0 / k, 1.0 / k, generator=gen)
            elif p.ndim >= 2:
                fan_in = p.shape[1] * (p[0][0].numel() if p.ndim > 2 else 1)
                std = 1.0 / math.sqrt(max(fan_in, 1))
                p.normal_(0.0, std, generator=gen)
            elif p.ndim == 1 and "weight" in name:
                p.fill_(1.0)  # norm-style gains
            else:
                p.zero_()


def group_norm(channels: int) -> nn.GroupNorm:
    groups = 8
    while channels % groups != 0:
        groups //= 2
    return nn.GroupNorm(groups, channels)


def timestep_embedding(t: torch.Tensor, dim: int, max_period: float = 10000.0) -> torch.Tensor:
    """Sinusoidal embedding of integer timesteps, shape (B, dim)."""
    half = dim // 2
    freqs = torch.exp(
        -math.log(max_period) * torch.arange(half, dtype=torch.float64) / half
    ).to(t.device)
    args = t.double()[:, None] * freqs[None, :]
    emb = torch.cat([torch.cos(args), torch.sin(args)], dim=-1)
    if dim % 2:
        emb = torch.cat([emb, torch.zeros_like(emb[:, :1])], dim=-1)
    return emb


class ResBlock(nn.Module):
    """GroupNorm/SiLU/conv residual block with optional timestep modulation."""

    def __init__(self, in_ch: int, out_ch: int, temb_dim: int | None = None):
        super().__init__()
        self.norm1 = group_norm(in_ch)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, padding=1)
        self.temb_proj = nn.Linear(temb_dim, out_ch) if temb_dim else None
        self.norm2 = group_norm(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, padding=1)
        self.skip = nn.Conv2d(in_ch, out_ch, 1) if in_ch != out_ch else nn.Identity()

    def forward(self, x: torch.Tensor, temb: torch.Tensor | None = None) -> torch.Tensor:
        h = self.conv1(torch.nn.functional.silu(self.norm1(x)))
        if self.temb_proj is not None and temb is not None:
            h = h + self.temb_proj(torch.nn.functional.silu(temb))[:, :, None, None]
        h = self.conv2(torch.nn.functional.silu(self.norm2(h)))
        return self.skip(x) + h


class SelfAttention(nn.Module):
    """Multi-head self-attention over flattened spatial positions."""

    def __init__(self, channels: int, heads: int = 4):
        super().__init__()
        if channels % heads != 0:
            raise ValueError(f"channels {channels} not divisible by heads {heads}")
        self.heads = heads
        self.norm = group_norm(channels)
        self.qkv = nn.Conv2d(channels, channels * 3, 1)
        self.proj = nn.Conv2d(channels, channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, c, h, w = x.shape
        qkv = self.qkv(self.norm(x)).reshape(b, 3, self.heads, c // self.heads, h * w)
        q, k, v = qkv[:, 0], qkv[:, 1], qkv[:, 2]
        scale = (c // self.heads) ** -0.5
        attn = torch.softmax(q.transpose(-1, -2) @ k * scale, dim=-1)
        out = (v @ attn.transpose(-1, -2)).reshape(b, c, h, w)
        return x + self.proj(out)


class Downsample(nn.Module):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, 3, stride=2, padding=1)

    def forward(self, x):
        return self.conv(x)


class Upsample(nn.Module):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv = nn.Conv2d(in_ch, out_ch, 3, padding=1)

    def forward(self, x):
        return self.conv(torch.nn.functional.interpolate(x, scale_factor=2, mode="nearest"))
