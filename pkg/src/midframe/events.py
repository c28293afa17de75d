"""Event-volume construction and a threshold-based event simulator.

Brightness-change events (x, y, t, p) are scattered into a fixed-size
spatio-temporal volume of shape H x W x (2*B): B temporal channels for
positive polarity followed by B channels for negative polarity. Each
event lands on its normalized timestamp with a linear kernel, so the
total mass per polarity equals the event count of that polarity.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, EventBoundsError, ShapeError

DEFAULT_B = 9
LOG_EPS = 1e-3


@dataclass(frozen=True)
class Event:
    """A single brightness-change event."""

    x: int
    y: int
    t: float
    p: int  # +1 or -1


@dataclass
class EventVolume:
    """Non-negative spatio-temporal event histogram, H x W x (2*B)."""

    data: np.ndarray
    b_channels: int

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def mass(self) -> float:
        return float(self.data.sum())


def _events_to_arrays(events: Iterable[Event]):
    events = list(events)
    if not events:
        empty = np.empty(0)
        return empty.astype(np.int64), empty.astype(np.int64), empty, empty.astype(np.int64)
    xs = np.array([e.x for e in events], dtype=np.int64)
    ys = np.array([e.y for e in events], dtype=np.int64)
    ts = np.array([e.t for e in events], dtype=np.float64)
    ps = np.array([e.p for e in events], dtype=np.int64)
    return xs, ys, ts, ps


def build_volume_from_arrays(
    xs: np.ndarray,
    ys: np.ndarray,
    ts: np.ndarray,
    ps: np.ndarray,
    b_channels: int,
    height: int,
    width: int,
) -> np.ndarray:
    """Scatter event arrays into an H x W x (2*B) volume.

    Normalized timestamps t* = (B-1) * (t - t1) / (tN - t1) are computed over
    the full event list, both polarities pooled. A degenerate time range
    (tN == t1, including a single event) maps every event to t* = 0 so that
    total mass is still preserved.
    """
    if b_channels < 2:
        raise ConfigError(f"b_channels must be >= 2, got {b_channels}")
    vol = np.zeros((height, width, 2 * b_channels), dtype=np.float64)
    n = xs.shape[0]
    if n == 0:
        return vol

    oob = (xs < 0) | (xs >= width) | (ys < 0) | (ys >= height)
    if oob.any():
        idx = int(np.argmax(oob))
        raise EventBoundsError(
            idx,
            f"event {idx} at (x={xs[idx]}, y={ys[idx]}) outside {height}x{width} sensor",
        )
    if not np.isin(ps, (-1, 1)).all():
        bad = int(np.argmax(~np.isin(ps, (-1, 1))))
        raise EventBoundsError(bad, f"event {bad} has polarity {ps[bad]}, expected +1/-1")

    t1 = ts.min()
    tn = ts.max()
    if tn > t1:
        tstar = (b_channels - 1) * (ts - t1) / (tn - t1)
    else:
        tstar = np.zeros_like(ts, dtype=np.float64)
    tstar = np.clip(tstar, 0.0, float(b_channels - 1))

    lo = np.floor(tstar).astype(np.int64)
    frac = tstar - lo
    pol_base = np.where(ps > 0, 0, b_channels)

    np.add.at(vol, (ys, xs, pol_base + lo), 1.0 - frac)
    hi = lo + 1
    has_hi = hi <= b_channels - 1
    np.add.at(
        vol,
        (ys[has_hi], xs[has_hi], pol_base[has_hi] + hi[has_hi]),
        frac[has_hi],
    )
    return vol


def build_event_volume(
    events: Sequence[Event],
    b_channels: int = DEFAULT_B,
    height: int = 0,
    width: int = 0,
) -> EventVolume:
    """Build an EventVolume from a list of events."""
    xs, ys, ts, ps = _events_to_arrays(events)
    data = build_volume_from_arrays(xs, ys, ts, ps, b_channels, height, width)
    return EventVolume(data=data, b_channels=b_channels)


def to_gray(image: np.ndarray) -> np.ndarray:
    """Collapse an (H, W[, C]) image in [0, 1] to a single luma channel."""
    if image.ndim == 2:
        return image.astype(np.float64)
    if image.ndim == 3 and image.shape[2] == 1:
        return image[:, :, 0].astype(np.float64)
    if image.ndim == 3 and image.shape[2] == 3:
        weights = np.array([0.299, 0.587, 0.114], dtype=np.float64)
        return image.astype(np.float64) @ weights
    raise ShapeError(f"expected (H, W), (H, W, 1) or (H, W, 3) image, got {image.shape}")


def simulate_event_arrays(
    frame_a: np.ndarray,
    frame_b: np.ndarray,
    contrast_threshold: float,
):
    """Vectorized event simulation between two frames.

    Per pixel the log-intensity difference d = log(Lb + eps) - log(La + eps)
    yields floor(|d| / C) events of polarity sign(d) with timestamps spaced
    linearly over (0, 1]. Returns (xs, ys, ts, ps) arrays ordered by pixel
    (row-major) and then by timestamp.
    """
    if frame_a.shape != frame_b.shape:
        raise ShapeError(f"frame shapes differ: {frame_a.shape} vs {frame_b.shape}")
    if contrast_threshold <= 0:
        raise ConfigError(f"contrast_threshold must be positive, got {contrast_threshold}")

    la = to_gray(frame_a)
    lb = to_gray(frame_b)
    d = np.log(lb + LOG_EPS) - np.log(la + LOG_EPS)
    counts = np.floor(np.abs(d) / contrast_threshold).astype(np.int64)
    active = counts > 0
    if not active.any():
        empty = np.empty(0)
        return (
            empty.astype(np.int64),
            empty.astype(np.int64),
            empty.astype(np.float64),
            empty.astype(np.int64),
        )

    ys_a, xs_a = np.nonzero(active)
    n_per = counts[ys_a, xs_a]
    xs = np.repeat(xs_a, n_per)
    ys = np.repeat(ys_a, n_per)
    ps = np.repeat(np.where(d[ys_a, xs_a] > 0, 1, -1).astype(np.int64), n_per)
    # timestamps k/n for k = 1..n per pixel
    total = int(n_per.sum())
    k = np.arange(total, dtype=np.int64) - np.repeat(np.cumsum(n_per) - n_per, n_per) + 1
    ts = k.astype(np.float64) / np.repeat(n_per, n_per).astype(np.float64)
    return xs, ys, ts, ps


def simulate_events(
    frame_a: np.ndarray,
    frame_b: np.ndarray,
    contrast_threshold: float,
) -> list[Event]:
    """Simulate events between two grayscale frames in [0, 1]."""
    xs, ys, ts, ps = simulate_event_arrays(frame_a, frame_b, contrast_threshold)
    return [
        Event(x=int(x), y=int(y), t=float(t), p=int(p))
        for x, y, t, p in zip(xs, ys, ts, ps)
    ]


def write_event_file(path, events: Sequence[Event]) -> None:
    """Write events as text, one 'x y t p' line per event."""
    with open(path, "w", encoding="utf-8") as fh:
        for e in events:
            fh.write(f"{e.x} {e.y} {e.t!r} {e.p}\n")


def read_event_file(path) -> list[Event]:
    events = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise ValueError(f"{path}:{line_no + 1}: expected 'x y t p', got {line!r}")
            events.append(
                Event(x=int(parts[0]), y=int(parts[1]), t=float(parts[2]), p=int(parts[3]))
            )
    return events
