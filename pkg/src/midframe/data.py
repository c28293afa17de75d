"""Synthetic moving-shapes dataset, triplet IO, and augmentation.

Scenes contain flat or checker-textured shapes moving at constant velocity
over a static background. The neighbor frames are one frame interval apart
and the middle frame is the exact temporal midpoint, so it is perfect
ground truth for interpolation. Rasterization is anti-aliased by 4x
supersampling, which keeps integer-pixel translations exact (a shape moved
by a whole pixel reproduces the shifted rendering bit for bit).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ConfigError, ShapeError

SUPERSAMPLE = 4

TIER_SPEEDS = {
    "easy": (0.5, 1.5),
    "medium": (1.5, 3.0),
    "hard": (3.0, 6.0),
}


@dataclass
class FrameTriplet:
    prev: np.ndarray
    mid: np.ndarray
    next: np.ndarray
    motion_magnitude: float = 0.0
    id: str = ""
    tier: str = ""

    def __post_init__(self):
        if not (self.prev.shape == self.mid.shape == self.next.shape):
            raise ShapeError("triplet frames must share shapes")

    @property
    def frames(self):
        return (self.prev, self.mid, self.next)


@dataclass
class ShapeSpec:
    kind: str           # "square" or "circle"
    size: float         # half-extent in pixels
    center: tuple       # (cy, cx) at t=0
    velocity: tuple     # (vy, vx) pixels per frame
    value: float
    texture: str = "flat"


@dataclass
class SceneSpec:
    height: int = 64
    width: int = 64
    channels: int = 1
    motion_tier: str = "hard"
    n_shapes: tuple = (1, 3)
    kinds: tuple = ("square", "circle")
    size_range: tuple = (4.0, 10.0)
    speed_range: tuple | None = None    # defaults to the tier's speeds
    value_range: tuple = (0.3, 1.0)
    textures: tuple = ("flat", "checker")
    background: str = "flat"            # "flat" or "gradient"
    background_range: tuple = (0.0, 0.2)

    def __post_init__(self):
        if self.motion_tier not in TIER_SPEEDS:
            raise ConfigError(f"unknown motion tier {self.motion_tier!r}")
        if self.speed_range is None:
            self.speed_range = TIER_SPEEDS[self.motion_tier]
        if 2 * self.size_range[1] >= min(self.height, self.width):
            raise ConfigError(
                f"max shape extent {2 * self.size_range[1]} does not fit the "
                f"{self.height}x{self.width} canvas"
            )

    def to_dict(self) -> dict:
        return asdict(self)


def _render(shapes: list[ShapeSpec], offset_steps: float, spec: SceneSpec,
            background: np.ndarray) -> np.ndarray:
    """Rasterize shapes displaced by offset_steps * velocity over background."""
    ss = SUPERSAMPLE
    h, w = spec.height, spec.width
    ys = (np.arange(h * ss, dtype=np.float64) + 0.5) / ss
    xs = (np.arange(w * ss, dtype=np.float64) + 0.5) / ss
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    canvas = np.repeat(np.repeat(background, ss, axis=0), ss, axis=1)

    for shape in shapes:
        cy = shape.center[0] + offset_steps * shape.velocity[0]
        cx = shape.center[1] + offset_steps * shape.velocity[1]
        dy = yy - cy
        dx = xx - cx
        if shape.kind == "square":
            mask = (np.abs(dy) <= shape.size) & (np.abs(dx) <= shape.size)
        elif shape.kind == "circle":
            mask = dy * dy + dx * dx <= shape.size * shape.size
        else:
            raise ConfigError(f"unknown shape kind {shape.kind!r}")
        if shape.texture == "checker":
            parity = (np.floor(dy / 2.0) + np.floor(dx / 2.0)) % 2
            values = np.where(parity > 0, shape.value, shape.value * 0.5)
        else:
            values = shape.value
        canvas = np.where(mask, values, canvas)

    pooled = canvas.reshape(h, ss, w, ss).mean(axis=(1, 3))
    img = pooled.astype(np.float32)[:, :, None]
    if spec.channels == 3:
        img = np.repeat(img, 3, axis=2)
    return img


def _sample_scene(spec: SceneSpec, rng: np.random.Generator) -> list[ShapeSpec]:
    n = int(rng.integers(spec.n_shapes[0], spec.n_shapes[1] + 1))
    shapes = []
    for _ in range(n):
        kind = spec.kinds[int(rng.integers(len(spec.kinds)))]
        size = float(rng.uniform(*spec.size_range))
        speed = float(rng.uniform(*spec.speed_range))
        angle = float(rng.uniform(0.0, 2.0 * np.pi))
        vy, vx = speed * np.sin(angle), speed * np.cos(angle)
        # keep the shape fully inside the canvas at offsets -1/2, 0, +1/2
        margin_y = size + abs(vy) / 2.0 + 1.0
        margin_x = size + abs(vx) / 2.0 + 1.0
        if margin_y * 2 >= spec.height or margin_x * 2 >= spec.width:
            speed = 0.0
            vy = vx = 0.0
            margin_y = margin_x = size + 1.0
        cy = float(rng.uniform(margin_y, spec.height - margin_y))
        cx = float(rng.uniform(margin_x, spec.width - margin_x))
        value = float(rng.uniform(*spec.value_range))
        texture = spec.textures[int(rng.integers(len(spec.textures)))]
        shapes.append(ShapeSpec(kind, size, (cy, cx), (vy, vx), value, texture))
    return shapes


def _background(spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    lo, hi = spec.background_range
    if spec.background == "gradient":
        ramp = np.linspace(lo, hi, spec.width, dtype=np.float64)
        return np.tile(ramp, (spec.height, 1))
    return np.full((spec.height, spec.width), float(rng.uniform(lo, hi)), dtype=np.float64)


def generate_synthetic(
    spec: SceneSpec,
    count: int,
    seed: int = 0,
    start_id: int = 0,
) -> list[FrameTriplet]:
    """Deterministically generate `count` triplets from (spec, seed)."""
    rng = np.random.default_rng(seed)
    triplets = []
    for i in range(count):
        shapes = _sample_scene(spec, rng)
        background = _background(spec, rng)
        # neighbor frames are one frame interval apart; the middle frame is
        # the exact temporal midpoint
        frames = [_render(shapes, s, spec, background) for s in (-0.5, 0.0, 0.5)]
        speed = max(
            (float(np.hypot(*s.velocity)) for s in shapes), default=0.0
        )
        triplets.append(
            FrameTriplet(
                prev=frames[0], mid=frames[1], next=frames[2],
                motion_magnitude=speed,
                id=f"{start_id + i:05d}",
                tier=spec.motion_tier,
            )
        )
    return triplets


def augment(triplet: FrameTriplet, seed: int, crop: int | None = None) -> FrameTriplet:
    """Shared random crop, horizontal/vertical flips, temporal reversal.

    All three frames receive the identical crop and flips; a temporal
    reversal swaps the neighbor frames. Deterministic per (triplet, seed).
    """
    h, w = triplet.mid.shape[:2]
    c = crop if crop is not None else min(64, h, w)
    if c > h or c > w:
        raise ConfigError(f"crop {c} larger than frame {h}x{w}")
    rng = np.random.default_rng(seed)
    oy = int(rng.integers(0, h - c + 1))
    ox = int(rng.integers(0, w - c + 1))
    hflip = bool(rng.random() < 0.5)
    vflip = bool(rng.random() < 0.5)
    reverse = bool(rng.random() < 0.5)

    def apply(img: np.ndarray) -> np.ndarray:
        out = img[oy:oy + c, ox:ox + c]
        if hflip:
            out = out[:, ::-1]
        if vflip:
            out = out[::-1, :]
        return np.ascontiguousarray(out)

    prev, mid, nxt = (apply(f) for f in triplet.frames)
    if reverse:
        prev, nxt = nxt, prev
    return FrameTriplet(
        prev=prev, mid=mid, next=nxt,
        motion_magnitude=triplet.motion_magnitude,
        id=triplet.id, tier=triplet.tier,
    )


def save_image(path, image: np.ndarray) -> None:
    """Save an (H, W, C) float image in [0, 1] as an 8-bit PNG."""
    arr = np.clip(np.round(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    mode = "L" if arr.ndim == 2 else "RGB"
    Image.fromarray(arr, mode=mode).save(path)


def load_image(path) -> np.ndarray:
    img = Image.open(path)
    arr = np.asarray(img, dtype=np.float32) / 255.0
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr


def save_triplets(root, split: str, triplets: list[FrameTriplet]) -> None:
    base = Path(root) / split
    for tri in triplets:
        d = base / tri.id
        d.mkdir(parents=True, exist_ok=True)
        save_image(d / "prev.png", tri.prev)
        save_image(d / "mid.png", tri.mid)
        save_image(d / "next.png", tri.next)
        meta = {
            "id": tri.id,
            "motion_magnitude": tri.motion_magnitude,
            "tier": tri.tier,
        }
        (d / "meta.json").write_text(json.dumps(meta, indent=2))


def load_triplets(root, split: str, tier: str | None = None) -> list[FrameTriplet]:
    base = Path(root) / split
    if not base.is_dir():
        raise FileNotFoundError(f"no dataset split at {base}")
    triplets = []
    for d in sorted(base.iterdir()):
        if not d.is_dir():
            continue
        meta = json.loads((d / "meta.json").read_text())
        if tier is not None and meta.get("tier") != tier:
            continue
        triplets.append(
            FrameTriplet(
                prev=load_image(d / "prev.png"),
                mid=load_image(d / "mid.png"),
                next=load_image(d / "next.png"),
                motion_magnitude=float(meta.get("motion_magnitude", 0.0)),
                id=meta["id"],
                tier=meta.get("tier", ""),
            )
        )
    return triplets


def build_dataset(
    root,
    seed: int,
    train_count: int,
    eval_count: int,
    tiers: tuple = ("easy", "medium", "hard"),
    height: int = 64,
    width: int = 64,
    channels: int = 1,
) -> dict:
    """Generate disjoint train/eval splits (id-range partition) per tier."""
    seeds = np.random.SeedSequence(seed).generate_state(2 * len(tiers))
    summary = {"train": 0, "eval": 0}
    next_id = 0
    for k, tier in enumerate(tiers):
        spec = SceneSpec(
            height=height, width=width, channels=channels, motion_tier=tier
        )
        train = generate_synthetic(spec, train_count, int(seeds[2 * k]), start_id=next_id)
        next_id += train_count
        evals = generate_synthetic(spec, eval_count, int(seeds[2 * k + 1]), start_id=next_id)
        next_id += eval_count
        save_triplets(root, "train", train)
        save_triplets(root, "eval", evals)
        summary["train"] += len(train)
        summary["eval"] += len(evals)
    return summary
