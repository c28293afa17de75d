"""Image quality metrics and machine-readable evaluation reports."""

from __future__ import annotations

import json
import math

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ShapeError

PSNR_CAP = 99.0  # sentinel for identical images
_SSIM_SIGMA = 1.5
_SSIM_TRUNCATE = 3.5  # 11x11 window
_C1 = 0.01 ** 2
_C2 = 0.03 ** 2


def _check_pair(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise ShapeError(f"image shapes differ: {a.shape} vs {b.shape}")
    return np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)


def mse(a: np.ndarray, b: np.ndarray) -> float:
    a, b = _check_pair(a, b)
    return float(np.mean((a - b) ** 2))


def l1(a: np.ndarray, b: np.ndarray) -> float:
    a, b = _check_pair(a, b)
    return float(np.mean(np.abs(a - b)))


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """10 * log10(1 / MSE) for images in [0, 1], capped at 99 dB."""
    err = mse(a, b)
    if err <= 0.0:
        return PSNR_CAP
    return min(10.0 * math.log10(1.0 / err), PSNR_CAP)


def _ssim_single(a: np.ndarray, b: np.ndarray) -> float:
    filt = lambda x: gaussian_filter(x, sigma=_SSIM_SIGMA, truncate=_SSIM_TRUNCATE, mode="nearest")
    mu_a = filt(a)
    mu_b = filt(b)
    var_a = filt(a * a) - mu_a * mu_a
    var_b = filt(b * b) - mu_b * mu_b
    cov = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + _C1) * (2 * cov + _C2)
    den = (mu_a ** 2 + mu_b ** 2 + _C1) * (var_a + var_b + _C2)
    smap = num / den
    pad = int(_SSIM_TRUNCATE * _SSIM_SIGMA + 0.5)  # drop windows touching the border
    smap = smap[pad:-pad, pad:-pad]
    return float(smap.mean())


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Gaussian-weighted SSIM (11x11 window, sigma 1.5) for [0, 1] images."""
    a, b = _check_pair(a, b)
    if min(a.shape[0], a.shape[1]) < 12:
        raise ShapeError(f"image {a.shape} too small for an 11x11 SSIM window")
    if a.ndim == 2:
        return _ssim_single(a, b)
    return float(np.mean([_ssim_single(a[..., c], b[..., c]) for c in range(a.shape[2])]))


def evaluate_pair(pred: np.ndarray, target: np.ndarray) -> dict:
    return {"psnr": psnr(pred, target), "ssim": ssim(pred, target), "l1": l1(pred, target)}


def build_report(items: list[dict]) -> dict:
    """Aggregate per-item metric dicts (each with an 'id' plus metrics)."""
    metrics = ("psnr", "ssim", "l1")
    aggregate = {}
    for m in metrics:
        values = [item[m] for item in items]
        aggregate[f"{m}_mean"] = float(np.mean(values)) if values else None
        aggregate[f"{m}_median"] = float(np.median(values)) if values else None
    return {
        "n_items": len(items),
        "psnr_cap": PSNR_CAP,
        "items": items,
        "aggregate": aggregate,
    }


def report_to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)


def report_from_json(text: str) -> dict:
    return json.loads(text)
