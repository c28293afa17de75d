"""Command-line interface.

Exit codes: 0 success, 2 configuration/usage error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path

import numpy as np

from . import ablation, checkpoint, config as config_mod, metrics
from .codec import train_codec
from .data import build_dataset, load_image, load_triplets, save_image
from .denoiser import train_denoiser
from .errors import ConfigError, MidframeError
from .events import simulate_events, write_event_file
from .hints import simulator_volume, train_i2e
from .sampling import SampleManifest, replay_manifest, sample

SAMPLER_NAMES = ("baseline-ddpm", "baseline-ddim", "ma-ddpm", "ma-ddim")
HINT_NAMES = ("simulator", "learned", "flow", "empty")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="midframe",
        description="Motion-hinted latent diffusion for middle-frame interpolation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="YAML/JSON config of dotted keys")
        sp.add_argument("--seed", type=int, default=None, help="override config seed")
        sp.add_argument("--out", default=".", help="output directory")

    sp = sub.add_parser("gen-data", help="generate the synthetic triplet dataset")
    common(sp)

    sp = sub.add_parser("simulate-events", help="simulate events between two frames")
    common(sp)
    sp.add_argument("--frame-a", required=True)
    sp.add_argument("--frame-b", required=True)

    sp = sub.add_parser("train-codec", help="train the autoencoder")
    common(sp)
    sp.add_argument("--data", required=True, help="dataset root (from gen-data)")

    sp = sub.add_parser("train-denoiser", help="train the noise predictor")
    common(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--codec", required=True, help="codec checkpoint path")

    sp = sub.add_parser("train-i2e", help="distill the simulator into a small network")
    common(sp)
    sp.add_argument("--data", required=True)

    sp = sub.add_parser("sample", help="interpolate middle frames for a dataset split")
    common(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--codec", required=True)
    sp.add_argument("--denoiser", required=True)
    sp.add_argument("--sampler", choices=SAMPLER_NAMES, default=None)
    sp.add_argument("--steps", type=int, default=None)
    sp.add_argument("--hints", choices=HINT_NAMES, default=None)
    sp.add_argument("--i2e", default=None, help="i2e checkpoint for --hints learned")
    sp.add_argument("--split", default="eval")
    sp.add_argument("--limit", type=int, default=None, help="sample at most N triplets")
    sp.add_argument("--replay", default=None, help="re-run a recorded manifest")

    sp = sub.add_parser("eval", help="PSNR/SSIM/L1 report for prediction vs target dirs")
    common(sp)
    sp.add_argument("--pred", required=True)
    sp.add_argument("--target", required=True)

    sp = sub.add_parser("ablate", help="run the ablation matrix and write a report")
    common(sp)
    sp.add_argument("--data", required=True)

    return parser


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_cfg(args) -> dict:
    overrides = {"seed": args.seed} if args.seed is not None else None
    return config_mod.resolve_config(args.config, overrides)


def cmd_gen_data(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    tiers = tuple(cfg["data.tiers"])
    summary = build_dataset(
        out,
        seed=int(cfg["seed"]),
        train_count=int(cfg["data.train_count"]) // len(tiers),
        eval_count=int(cfg["data.eval_count"]) // len(tiers),
        tiers=tiers,
        height=int(cfg["data.height"]),
        width=int(cfg["data.width"]),
        channels=int(cfg["data.channels"]),
    )
    print(f"wrote {summary['train']} train / {summary['eval']} eval triplets to {out}")
    return 0


def cmd_simulate_events(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    frame_a = load_image(args.frame_a)
    frame_b = load_image(args.frame_b)
    threshold = float(cfg["events.contrast_threshold"])
    b_channels = int(cfg["events.b_channels"])
    events = simulate_events(frame_a, frame_b, threshold)
    write_event_file(out / "events.txt", events)
    np.save(out / "volume.npy", simulator_volume(frame_a, frame_b, b_channels, threshold))
    print(f"{len(events)} events -> {out / 'events.txt'}, volume -> {out / 'volume.npy'}")
    return 0


def cmd_train_codec(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    triplets = load_triplets(args.data, "train")
    result = train_codec(
        triplets, config_mod.codec_config(cfg), config_mod.codec_train_config(cfg),
        seed=int(cfg["seed"]),
    )
    path = out / "codec.pt"
    checkpoint.save_codec_checkpoint(
        path, result, config_echo=cfg, config_hash=config_mod.config_hash(cfg)
    )
    tail = result.history["l1"][-100:]
    print(f"codec trained for {len(result.history['loss'])} steps; "
          f"final L1 {float(np.mean(tail)):.4f}; saved {path}")
    return 0


def cmd_train_denoiser(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    triplets = load_triplets(args.data, "train")
    codec, _ = checkpoint.load_codec_checkpoint(args.codec)
    schedule = config_mod.schedule_config(cfg)
    result = train_denoiser(
        triplets, codec, schedule,
        config_mod.denoiser_config(cfg), config_mod.denoiser_train_config(cfg),
        seed=int(cfg["seed"]),
    )
    path = out / "denoiser.pt"
    checkpoint.save_denoiser_checkpoint(
        path, result, schedule, config_echo=cfg, config_hash=config_mod.config_hash(cfg)
    )
    tail = result.history["loss"][-100:]
    print(f"denoiser trained for {len(result.history['loss'])} steps; "
          f"final loss {float(np.mean(tail)):.4f}; saved {path}")
    return 0


def cmd_train_i2e(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    triplets = load_triplets(args.data, "train")
    pairs = []
    for tri in triplets:
        pairs.append((tri.prev, tri.mid))
        pairs.append((tri.mid, tri.next))
    model, losses = train_i2e(
        pairs,
        b_channels=int(cfg["events.b_channels"]),
        contrast_threshold=float(cfg["events.contrast_threshold"]),
        width=int(cfg["i2e.width"]),
        steps=int(cfg["i2e.steps"]),
        batch_size=int(cfg["i2e.batch_size"]),
        lr=float(cfg["i2e.lr"]),
        seed=int(cfg["seed"]),
    )
    path = out / "i2e.pt"
    checkpoint.save_i2e_checkpoint(path, model, config_echo=cfg,
                                   config_hash=config_mod.config_hash(cfg))
    print(f"i2e trained for {len(losses)} steps; final L1 {losses[-1]:.4f}; saved {path}")
    return 0


def _hint_args(cfg: dict, name: str, i2e_path):
    params = {"b_channels": int(cfg["events.b_channels"])}
    if name == "simulator":
        params["contrast_threshold"] = float(cfg["events.contrast_threshold"])
        return "simulator", params
    if name == "flow":
        params["block_size"] = int(cfg["flow.block_size"])
        params["search_radius"] = int(cfg["flow.search_radius"])
        return "flow", params
    if name == "learned":
        if not i2e_path:
            raise ConfigError("--hints learned requires --i2e CHECKPOINT")
        model, _ = checkpoint.load_i2e_checkpoint(i2e_path)
        params["i2e_model"] = model
        return "learned_i2e", params
    if name == "empty":
        return "empty", params
    raise ConfigError(f"unknown hint backend {name!r}")


def cmd_sample(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    models = checkpoint.load_bundle(args.codec, args.denoiser)
    triplets = load_triplets(args.data, args.split)
    if not triplets:
        raise MidframeError(f"no triplets found under {args.data}/{args.split}")

    if args.replay:
        manifest = SampleManifest.load(args.replay)
        match = [t for t in triplets if t.id == manifest.triplet_id]
        if not match:
            raise MidframeError(f"triplet {manifest.triplet_id!r} not found for replay")
        tri = match[0]
        extra = {}
        if manifest.hint_backend == "learned_i2e":
            _, params = _hint_args(cfg, "learned", args.i2e)
            extra = {"i2e_model": params["i2e_model"]}
        result = replay_manifest(manifest, models, tri.prev, tri.next,
                                 verify=True, extra_backend_params=extra)
        save_image(out / f"{tri.id}_replay.png", result.image)
        print(f"replayed {manifest.sampler} run for triplet {tri.id}: output verified")
        return 0

    if args.limit:
        triplets = triplets[:args.limit]
    kind = (args.sampler or cfg["sample.kind"]).replace("-", "_")
    hints_name = args.hints or cfg["sample.hints"]
    steps = args.steps if args.steps is not None else int(cfg["sample.steps"])
    seed = int(cfg["seed"])
    kwargs = {"steps": steps if kind.endswith("ddim") else None, "seed": seed}
    if kind.startswith("ma"):
        backend, params = _hint_args(cfg, hints_name, args.i2e)
        kwargs.update(
            hint_backend=backend,
            hint_backend_params=params,
            hint_mode=str(cfg["sample.hint_mode"]),
        )
    for tri in triplets:
        result = sample(tri.prev, tri.next, models, kind, **kwargs)
        result.manifest.triplet_id = tri.id
        save_image(out / f"{tri.id}_pred.png", result.image)
        result.manifest.save(out / f"{tri.id}_manifest.json")
    print(f"sampled {len(triplets)} triplets with {kind} -> {out}")
    return 0


def _image_map(directory: Path) -> dict:
    """Map id -> image path for flat dirs or dataset-split dirs."""
    result = {}
    for sub in sorted(directory.iterdir()):
        if sub.is_dir() and (sub / "mid.png").exists():
            result[sub.name] = sub / "mid.png"
        elif sub.suffix.lower() == ".png":
            stem = sub.stem
            if stem.endswith("_pred"):
                stem = stem[: -len("_pred")]
            result[stem] = sub
    return result


def cmd_eval(args) -> int:
    _load_cfg(args)
    out = _out_dir(args)
    preds = _image_map(Path(args.pred))
    targets = _image_map(Path(args.target))
    shared = sorted(set(preds) & set(targets))
    if not shared:
        raise MidframeError(f"no matching image ids between {args.pred} and {args.target}")
    items = []
    for key in shared:
        entry = {"id": key}
        entry.update(metrics.evaluate_pair(load_image(preds[key]), load_image(targets[key])))
        items.append(entry)
    report = metrics.build_report(items)
    path = out / "report.json"
    path.write_text(metrics.report_to_json(report))
    agg = report["aggregate"]
    print(f"{len(items)} pairs: PSNR {agg['psnr_mean']:.2f} dB, "
          f"SSIM {agg['ssim_mean']:.4f} -> {path}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _load_cfg(args)
    out = _out_dir(args)
    train_triplets = load_triplets(args.data, "train")
    eval_triplets = load_triplets(args.data, "eval", tier=str(cfg["ablate.eval_tier"]))
    eval_triplets = eval_triplets[: int(cfg["ablate.eval_count"])]
    report = ablation.run_ablation(
        list(cfg["ablate.cells"]),
        train_triplets,
        eval_triplets,
        [int(s) for s in cfg["ablate.seeds"]],
        cfg,
        progress=print,
    )
    path = out / "ablation_report.json"
    path.write_text(ablation.report_to_json(report))
    for cell, stats in report["cells"].items():
        print(f"{cell}: median PSNR {stats['psnr_median_over_seeds']:.2f} dB "
              f"over seeds {report['seeds']}")
    print(f"report -> {path}")
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "simulate-events": cmd_simulate_events,
    "train-codec": cmd_train_codec,
    "train-denoiser": cmd_train_denoiser,
    "train-i2e": cmd_train_i2e,
    "sample": cmd_sample,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse prints usage itself
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MidframeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except Exception:
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
