"""Ablation matrix driver: hint usage in the codec crossed with sampling.

Cells mirror the component study: exp0 trains the codec without hints and
samples with the baseline loop; exp1 adds per-step hint refinement for the
denoiser only; exp2 trains the codec with hints but samples baseline; exp3
is the full method. exp3_global holds a single prev->next hint extraction
fixed across steps, and exp3_flow swaps the event backend for
block-matching flow in both training and sampling.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .codec import train_codec
from .config import codec_config, codec_train_config, denoiser_config, denoiser_train_config, schedule_config
from .denoiser import train_denoiser
from .errors import CheckpointError, ConfigError
from .metrics import evaluate_pair
from .sampling import ModelBundle, sample

CELL_SPECS = {
    "exp0": {"variant": "none", "kind": "baseline_ddim",
             "hint_backend": None, "hint_mode": "none", "targets": ()},
    "exp1": {"variant": "none", "kind": "ma_ddim",
             "hint_backend": "simulator", "hint_mode": "dynamic",
             "targets": ("denoiser",)},
    "exp2": {"variant": "event", "kind": "baseline_ddim",
             "hint_backend": None, "hint_mode": "none", "targets": ()},
    "exp3": {"variant": "event", "kind": "ma_ddim",
             "hint_backend": "simulator", "hint_mode": "dynamic",
             "targets": ("decoder", "denoiser")},
    "exp3_global": {"variant": "event", "kind": "ma_ddim",
                    "hint_backend": "simulator", "hint_mode": "global",
                    "targets": ("decoder", "denoiser")},
    "exp3_flow": {"variant": "flow", "kind": "ma_ddim",
                  "hint_backend": "flow", "hint_mode": "dynamic",
                  "targets": ("decoder", "denoiser")},
}

VARIANTS = {
    "none": {"codec.use_hints": False, "codec.hint_backend": "simulator",
             "denoiser.hint_backend": "simulator"},
    "event": {"codec.use_hints": True, "codec.hint_backend": "simulator",
              "denoiser.hint_backend": "simulator"},
    "flow": {"codec.use_hints": True, "codec.hint_backend": "flow",
             "denoiser.hint_backend": "flow"},
}


def _triplet_seed(seed: int, triplet_id: str) -> int:
    digest = hashlib.sha256(f"{seed}:{triplet_id}".encode()).hexdigest()
    return int(digest[:8], 16)


def train_variant(variant: str, train_triplets, cfg: dict, seed: int) -> ModelBundle:
    """Train one codec+denoiser pair for an ablation variant."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown ablation variant {variant!r}")
    local = dict(cfg)
    local.update(VARIANTS[variant])
    codec_result = train_codec(
        train_triplets, codec_config(local), codec_train_config(local), seed=seed
    )
    schedule = schedule_config(local)
    den_result = train_denoiser(
        train_triplets, codec_result.model, schedule,
        denoiser_config(local), denoiser_train_config(local), seed=seed + 1,
    )
    return ModelBundle(
        codec=codec_result.model,
        denoiser=den_result.model,
        schedule=schedule,
        latent_scale=den_result.latent_scale,
    )


def run_ablation(
    cells: list[str],
    train_triplets,
    eval_triplets,
    seeds: list[int],
    cfg: dict,
    bundles: dict | None = None,
    progress=None,
) -> dict:
    """Train all needed variants per seed, sample every cell, report metrics.

    `bundles` may pre-supply trained ModelBundles keyed by (variant, seed);
    a missing entry for a requested cell is an error when training is
    disabled by passing bundles={} ... anything not supplied is trained here.
    Sampling seeds are paired across cells (same seed per triplet) so cell
    comparisons are paired.
    """
    for cell in cells:
        if cell not in CELL_SPECS:
            raise ConfigError(f"unknown ablation cell {cell!r}")
    if not eval_triplets:
        raise ConfigError("no evaluation triplets supplied")
    sample_steps = int(cfg["ablate.sample_steps"])
    trained = dict(bundles or {})
    train_allowed = bundles is None or train_triplets is not None

    runs = []
    for seed in seeds:
        needed = {CELL_SPECS[c]["variant"] for c in cells}
        for variant in sorted(needed):
            key = (variant, seed)
            if key not in trained:
                if not train_allowed:
                    raise CheckpointError(f"missing trained variant {key}")
                if progress:
                    progress(f"training variant {variant!r} for seed {seed}")
                trained[key] = train_variant(variant, train_triplets, cfg, seed)
        for cell in cells:
            spec = CELL_SPECS[cell]
            models = trained[(spec["variant"], seed)]
            items = []
            for tri in eval_triplets:
                kwargs = {"steps": sample_steps, "seed": _triplet_seed(seed, tri.id)}
                if spec["kind"].startswith("ma"):
                    kwargs.update(
                        hint_backend=spec["hint_backend"],
                        hint_mode=spec["hint_mode"],
                        hint_targets=spec["targets"],
                    )
                result = sample(tri.prev, tri.next, models, spec["kind"], **kwargs)
                entry = {"id": tri.id}
                entry.update(evaluate_pair(result.image, tri.mid))
                items.append(entry)
            run = {
                "cell": cell,
                "seed": seed,
                "items": items,
                "psnr_median": float(np.median([i["psnr"] for i in items])),
                "ssim_median": float(np.median([i["ssim"] for i in items])),
                "l1_median": float(np.median([i["l1"] for i in items])),
            }
            runs.append(run)
            if progress:
                progress(
                    f"seed {seed} {cell}: median PSNR {run['psnr_median']:.2f} dB, "
                    f"SSIM {run['ssim_median']:.4f}"
                )

    per_cell = {}
    for cell in cells:
        cell_runs = [r for r in runs if r["cell"] == cell]
        per_cell[cell] = {
            "per_seed": {str(r["seed"]): {
                "psnr_median": r["psnr_median"],
                "ssim_median": r["ssim_median"],
                "l1_median": r["l1_median"],
            } for r in cell_runs},
            "psnr_median_over_seeds": float(np.median([r["psnr_median"] for r in cell_runs])),
            "ssim_median_over_seeds": float(np.median([r["ssim_median"] for r in cell_runs])),
            "l1_median_over_seeds": float(np.median([r["l1_median"] for r in cell_runs])),
        }

    return {
        "version": 1,
        "cells": per_cell,
        "runs": runs,
        "n_runs": len(runs),
        "seeds": list(seeds),
        "cell_names": list(cells),
        "sample_steps": sample_steps,
        "n_eval_triplets": len(eval_triplets),
    }


def report_to_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
