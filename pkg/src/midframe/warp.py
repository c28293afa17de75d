"""Hint-guided feature warping.

The block resizes motion hints to a decoder layer's resolution, predicts a
per-pixel (dy, dx) offset map from (target feature, hints, neighbor
feature), backward-warps the neighbor feature bilinearly, and fuses the two
warped neighbors through an occlusion gate plus a residual correction.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from .errors import ShapeError
from .hints import MotionHints
from .nn_blocks import zero_module


def resize_hint_tensor(x: torch.Tensor, out_h: int, out_w: int) -> torch.Tensor:
    """Resize (B, C, H, W) hints: area averaging down, bilinear up."""
    h, w = x.shape[-2:]
    if (h, w) == (out_h, out_w):
        return x
    if out_h <= h and out_w <= w:
        return F.adaptive_avg_pool2d(x, (out_h, out_w))
    return F.interpolate(x, size=(out_h, out_w), mode="bilinear", align_corners=False)


def resize_hints(hints: MotionHints, out_h: int, out_w: int) -> tuple[np.ndarray, np.ndarray]:
    """Resize both hint volumes to (out_h, out_w); returns numpy arrays."""
    out = []
    for vol in (hints.forward, hints.backward):
        t = torch.from_numpy(np.ascontiguousarray(vol.transpose(2, 0, 1)))[None].float()
        r = resize_hint_tensor(t, out_h, out_w)[0]
        out.append(r.permute(1, 2, 0).numpy())
    return out[0], out[1]


def backward_warp(feature: torch.Tensor, offsets: torch.Tensor) -> torch.Tensor:
    """Bilinear backward warp with border-clamped sampling.

    output(y, x) samples feature at (y + dy, x + dx). Implemented with
    explicit gathers so that zero offsets reproduce the input bit-exactly
    and gradients flow to both the feature and the offsets.
    """
    if feature.shape[-2:] != offsets.shape[-2:] or offsets.shape[1] != 2:
        raise ShapeError(
            f"offsets {tuple(offsets.shape)} incompatible with feature {tuple(feature.shape)}"
        )
    if not torch.isfinite(offsets).all():
        raise ValueError("non-finite offsets")
    b, c, h, w = feature.shape
    offsets = offsets.to(feature.dtype)

    base_y = torch.arange(h, dtype=feature.dtype, device=feature.device).view(1, h, 1)
    base_x = torch.arange(w, dtype=feature.dtype, device=feature.device).view(1, 1, w)
    sy = (base_y + offsets[:, 0]).clamp(0, h - 1)
    sx = (base_x + offsets[:, 1]).clamp(0, w - 1)

    y0f = sy.floor()
    x0f = sx.floor()
    fy = (sy - y0f).unsqueeze(1)
    fx = (sx - x0f).unsqueeze(1)
    y0 = y0f.long()
    x0 = x0f.long()
    y1 = (y0 + 1).clamp(max=h - 1)
    x1 = (x0 + 1).clamp(max=w - 1)

    flat = feature.reshape(b, c, h * w)

    def gather(yi, xi):
        idx = (yi * w + xi).view(b, 1, h * w).expand(b, c, h * w)
        return flat.gather(2, idx).view(b, c, h, w)

    v00 = gather(y0, x0)
    v01 = gather(y0, x1)
    v10 = gather(y1, x0)
    v11 = gather(y1, x1)
    return (
        (1 - fy) * (1 - fx) * v00
        + (1 - fy) * fx * v01
        + fy * (1 - fx) * v10
        + fy * fx * v11
    )


def blend(gate: torch.Tensor, warped_prev: torch.Tensor, warped_next: torch.Tensor,
          residual: torch.Tensor) -> torch.Tensor:
    """gate * warped_prev + (1 - gate) * warped_next + residual."""
    return gate * warped_prev + (1.0 - gate) * warped_next + residual


def _conv_stack(in_ch: int, hidden: int, out_ch: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_ch, hidden, 3, padding=1),
        nn.ReLU(),
        nn.Conv2d(hidden, hidden, 3, padding=1),
        nn.ReLU(),
        zero_module(nn.Conv2d(hidden, out_ch, 3, padding=1)),
    )


class GuidedWarp(nn.Module):
    """Offset prediction, backward warp, and gated fusion for one layer.

    The offset network is shared between the prev and next directions. All
    three heads end in zero-initialized convolutions, so an untrained block
    predicts zero offsets (identity warp), a 0.5 gate, and a zero residual;
    its output is then the plain average of the two neighbor features and is
    invariant to hint contents.
    """

    def __init__(self, channels: int, hint_channels: int):
        super().__init__()
        self.channels = channels
        self.hint_channels = hint_channels
        self.offset_net = _conv_stack(2 * channels + hint_channels, channels, 2)
        self.gate_net = _conv_stack(2 * channels, channels, 1)
        self.residual_net = _conv_stack(channels, channels, channels)

    def predict_offsets(self, h: torch.Tensor, m: torch.Tensor, phi: torch.Tensor) -> torch.Tensor:
        return self.offset_net(torch.cat([h, m, phi], dim=1))

    def gate(self, warped_prev: torch.Tensor, warped_next: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.gate_net(torch.cat([warped_prev, warped_next], dim=1)))

    def residual(self, h: torch.Tensor) -> torch.Tensor:
        return self.residual_net(h)

    def fuse(
        self,
        h: torch.Tensor,
        warped_prev: torch.Tensor,
        warped_next: torch.Tensor,
        gate_override: torch.Tensor | None = None,
        residual_override: torch.Tensor | None = None,
    ) -> torch.Tensor:
        if h.shape != warped_prev.shape or h.shape != warped_next.shape:
            raise ShapeError("fuse inputs must share shapes")
        g = gate_override if gate_override is not None else self.gate(warped_prev, warped_next)
        d = residual_override if residual_override is not None else self.residual(h)
        return blend(g, warped_prev, warped_next, d)

    def forward(
        self,
        h: torch.Tensor,
        phi_prev: torch.Tensor,
        phi_next: torch.Tensor,
        m_prev: torch.Tensor,
        m_next: torch.Tensor,
    ) -> torch.Tensor:
        u, v = h.shape[-2:]
        m_prev = resize_hint_tensor(m_prev, u, v).to(h.dtype)
        m_next = resize_hint_tensor(m_next, u, v).to(h.dtype)
        off_prev = self.predict_offsets(h, m_prev, phi_prev)
        off_next = self.predict_offsets(h, m_next, phi_next)
        warped_prev = backward_warp(phi_prev, off_prev)
        warped_next = backward_warp(phi_next, off_next)
        return self.fuse(h, warped_prev, warped_next)
