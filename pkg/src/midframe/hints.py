"""Motion-hint extraction with pluggable backends.

A hint backend maps an ordered frame pair (a, b) to a dense H x W x (2*B)
array. Event-style backends (threshold simulator, learned image-to-event
network) produce non-negative event volumes; the block-matching flow
backend produces a signed 2-channel displacement map zero-padded to 2*B
channels so downstream shapes stay uniform.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np
import torch
from torch import nn

from .errors import ConfigError, ShapeError
from .events import DEFAULT_B, build_volume_from_arrays, simulate_event_arrays, to_gray


class HintSource(str, Enum):
    SIMULATOR = "simulator"
    LEARNED_I2E = "learned_i2e"
    FLOW = "flow"
    EMPTY = "empty"


@dataclass
class MotionHints:
    """Forward (prev->mid) and backward (mid->next) hint volumes."""

    forward: np.ndarray
    backward: np.ndarray
    source_tag: HintSource

    def __post_init__(self):
        if self.forward.shape != self.backward.shape:
            raise ShapeError(
                f"hint volumes differ: {self.forward.shape} vs {self.backward.shape}"
            )

    @property
    def b_channels(self) -> int:
        return self.forward.shape[2] // 2

    @property
    def mass(self) -> tuple[float, float]:
        return float(np.abs(self.forward).sum()), float(np.abs(self.backward).sum())


HintBackend = Callable[[np.ndarray, np.ndarray], np.ndarray]


def empty_hints(height: int, width: int, b_channels: int = DEFAULT_B) -> MotionHints:
    """All-zero hints (the initialization used at the first sampling step)."""
    if height < 1 or width < 1 or b_channels < 2:
        raise ConfigError(f"invalid hint dimensions ({height}, {width}, B={b_channels})")
    shape = (height, width, 2 * b_channels)
    return MotionHints(
        forward=np.zeros(shape, dtype=np.float32),
        backward=np.zeros(shape, dtype=np.float32),
        source_tag=HintSource.EMPTY,
    )


def simulator_volume(
    frame_a: np.ndarray,
    frame_b: np.ndarray,
    b_channels: int = DEFAULT_B,
    contrast_threshold: float = 0.2,
) -> np.ndarray:
    """Threshold-simulated events between two frames, scattered to a volume."""
    xs, ys, ts, ps = simulate_event_arrays(frame_a, frame_b, contrast_threshold)
    h, w = frame_a.shape[:2]
    vol = build_volume_from_arrays(xs, ys, ts, ps, b_channels, h, w)
    return vol.astype(np.float32)


def block_matching_flow(
    frame_a: np.ndarray,
    frame_b: np.ndarray,
    block_size: int = 8,
    search_radius: int = 8,
) -> np.ndarray:
    """Exhaustive block-matching displacement from frame_a to frame_b.

    Sum-of-absolute-differences cost over a square search window; ties are
    broken by smallest displacement magnitude, then lexicographically by
    (dy, dx). Every pixel of a block receives the block's displacement.
    Returns an (H, W, 2) array ordered (dy, dx).
    """
    if frame_a.shape != frame_b.shape:
        raise ShapeError(f"frame shapes differ: {frame_a.shape} vs {frame_b.shape}")
    a = to_gray(frame_a)
    b = to_gray(frame_b)
    h, w = a.shape
    flow = np.zeros((h, w, 2), dtype=np.float32)

    for by in range(0, h, block_size):
        for bx in range(0, w, block_size):
            y1 = min(by + block_size, h)
            x1 = min(bx + block_size, w)
            block = a[by:y1, bx:x1]
            best = None
            for dy in range(-search_radius, search_radius + 1):
                ty0, ty1 = by + dy, y1 + dy
                if ty0 < 0 or ty1 > h:
                    continue
                for dx in range(-search_radius, search_radius + 1):
                    tx0, tx1 = bx + dx, x1 + dx
                    if tx0 < 0 or tx1 > w:
                        continue
                    cost = float(np.abs(block - b[ty0:ty1, tx0:tx1]).sum())
                    key = (cost, dy * dy + dx * dx, dy, dx)
                    if best is None or key < best:
                        best = key
            if best is not None:
                flow[by:y1, bx:x1, 0] = best[2]
                flow[by:y1, bx:x1, 1] = best[3]
    return flow


def flow_volume(
    frame_a: np.ndarray,
    frame_b: np.ndarray,
    b_channels: int = DEFAULT_B,
    block_size: int = 8,
    search_radius: int = 8,
) -> np.ndarray:
    """Block-matching flow zero-padded to the 2*B hint channel layout."""
    flow = block_matching_flow(frame_a, frame_b, block_size, search_radius)
    h, w = flow.shape[:2]
    out = np.zeros((h, w, 2 * b_channels), dtype=np.float32)
    out[:, :, :2] = flow
    return out


class ImageToEvents(nn.Module):
    """Small convolutional stand-in for a pretrained image-to-event model.

    Trained by regressing the threshold simulator's volumes (see
    :func:`train_i2e`); the softplus output keeps volumes non-negative.
    """

    def __init__(self, b_channels: int = DEFAULT_B, width: int = 32):
        super().__init__()
        self.b_channels = b_channels
        self.net = nn.Sequential(
            nn.Conv2d(2, width, 3, padding=1),
            nn.ReLU(),
            nn.Conv2d(width, width, 3, padding=1),
            nn.ReLU(),
            nn.Conv2d(width, 2 * b_channels, 3, padding=1),
            nn.Softplus(),
        )

    def forward(self, pair: torch.Tensor) -> torch.Tensor:
        return self.net(pair)

    @torch.no_grad()
    def predict_volume(self, frame_a: np.ndarray, frame_b: np.ndarray) -> np.ndarray:
        if frame_a.shape != frame_b.shape:
            raise ShapeError(f"frame shapes differ: {frame_a.shape} vs {frame_b.shape}")
        a = to_gray(frame_a).astype(np.float32)
        b = to_gray(frame_b).astype(np.float32)
        pair = torch.from_numpy(np.stack([a, b])[None])
        out = self.forward(pair)[0]
        return out.permute(1, 2, 0).numpy()


def train_i2e(
    frame_pairs: list[tuple[np.ndarray, np.ndarray]],
    b_channels: int = DEFAULT_B,
    contrast_threshold: float = 0.2,
    width: int = 32,
    steps: int = 500,
    batch_size: int = 8,
    lr: float = 1e-3,
    seed: int = 0,
) -> tuple[ImageToEvents, list[float]]:
    """Distill the threshold simulator into a small convolutional network."""
    gen = torch.Generator().manual_seed(seed)
    model = ImageToEvents(b_channels=b_channels, width=width)
    from .nn_blocks import seed_parameters

    seed_parameters(model, seed)
    opt = torch.optim.Adam(model.parameters(), lr=lr)

    inputs, targets = [], []
    for a, b in frame_pairs:
        ga = to_gray(a).astype(np.float32)
        gb = to_gray(b).astype(np.float32)
        inputs.append(np.stack([ga, gb]))
        targets.append(
            simulator_volume(a, b, b_channels, contrast_threshold).transpose(2, 0, 1)
        )
    x_all = torch.from_numpy(np.stack(inputs))
    y_all = torch.from_numpy(np.stack(targets))

    losses = []
    for _ in range(steps):
        idx = torch.randint(0, x_all.shape[0], (batch_size,), generator=gen)
        pred = model(x_all[idx])
        loss = torch.nn.functional.l1_loss(pred, y_all[idx])
        opt.zero_grad()
        loss.backward()
        opt.step()
        losses.append(loss.item())
    model.eval()
    return model, losses


def make_hint_backend(
    kind: str | HintSource,
    b_channels: int = DEFAULT_B,
    contrast_threshold: float = 0.2,
    i2e_model: ImageToEvents | None = None,
    block_size: int = 8,
    search_radius: int = 8,
) -> tuple[HintBackend, HintSource]:
    """Resolve a backend name into a (callable, source_tag) pair."""
    kind = HintSource(kind)
    if kind == HintSource.SIMULATOR:
        return (
            lambda a, b: simulator_volume(a, b, b_channels, contrast_threshold),
            kind,
        )
    if kind == HintSource.LEARNED_I2E:
        if i2e_model is None:
            raise ConfigError("learned_i2e backend requires a trained ImageToEvents model")
        if i2e_model.b_channels != b_channels:
            raise ConfigError(
                f"i2e model has B={i2e_model.b_channels}, expected {b_channels}"
            )
        return i2e_model.predict_volume, kind
    if kind == HintSource.FLOW:
        return (
            lambda a, b: flow_volume(a, b, b_channels, block_size, search_radius),
            kind,
        )
    if kind == HintSource.EMPTY:
        return (
            lambda a, b: np.zeros(
                (a.shape[0], a.shape[1], 2 * b_channels), dtype=np.float32
            ),
            kind,
        )
    raise ConfigError(f"unknown hint backend {kind!r}")


def extract_motion_hints(
    frame_prev: np.ndarray,
    frame_mid: np.ndarray,
    frame_next: np.ndarray,
    backend: str | HintSource | tuple[HintBackend, HintSource] = HintSource.SIMULATOR,
    **backend_kwargs,
) -> MotionHints:
    """Extract forward (prev->mid) and backward (mid->next) motion hints."""
    if frame_prev.shape != frame_mid.shape or frame_mid.shape != frame_next.shape:
        raise ShapeError(
            f"frame shapes differ: {frame_prev.shape}, {frame_mid.shape}, {frame_next.shape}"
        )
    if isinstance(backend, tuple):
        fn, tag = backend
    else:
        fn, tag = make_hint_backend(backend, **backend_kwargs)
    return MotionHints(
        forward=fn(frame_prev, frame_mid),
        backward=fn(frame_mid, frame_next),
        source_tag=tag,
    )


def hints_to_tensor(hints: MotionHints, dtype=torch.float32) -> torch.Tensor:
    """Stack forward+backward volumes into a (1, 4*B, H, W) tensor."""
    stacked = np.concatenate([hints.forward, hints.backward], axis=2)
    return torch.from_numpy(np.ascontiguousarray(stacked.transpose(2, 0, 1)))[None].to(dtype)
