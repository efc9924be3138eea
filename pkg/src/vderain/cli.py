"""Command-line surface: train, derain, evaluate, simulate-rain,
fit-generator, demo-data.  Batch jobs in, files out."""

import argparse
import csv
import json
import os
import sys

import numpy as np
import torch

from . import checkpoint as ckpt_io
from .config import (ConfigError, echo_config, load_config, network_configs,
                     rain_recipe, train_config)
from .dataset import (ClipSource, build_dataset, cut_validation_samples,
                      load_sources, make_demo_sources)
from .metrics import psnr_luminance, ssim_luminance
from .rain import procedural_rain
from .tensors import as_video_tensor, tensor_to_clip
from .training import em_train, fit_generator
from .video import (VideoClip, composite_rainy, load_frames_dir, read_clip,
                    save_frames_dir, write_clip)


def _resolve(args):
    overrides = list(args.set or [])
    cfg = load_config(args.config, overrides)
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    return cfg


def _need(cfg, dotted):
    node = cfg
    for part in dotted.split("."):
        node = node[part]
    if node is None:
        raise ConfigError(f"config field '{dotted}' is required for this command")
    return node


def _load_any_clip(path):
    if os.path.isdir(path):
        return load_frames_dir(path)
    return read_clip(path)


def cmd_train(args):
    cfg = _resolve(args)
    data = cfg["data"]
    labeled_dir = _need(cfg, "data.labeled_dir")
    out_dir = _need(cfg, "data.output_dir")
    os.makedirs(out_dir, exist_ok=True)
    echo_config(cfg, os.path.join(out_dir, "config.json"))

    labeled = load_sources(labeled_dir, require_clean=True)
    unlabeled = []
    if data["unlabeled_dir"]:
        unlabeled = [ClipSource(s.name, s.rainy, None)
                     for s in load_sources(data["unlabeled_dir"], require_clean=False)]
    val_samples = []
    if data["val_dir"]:
        val_samples = cut_validation_samples(
            load_sources(data["val_dir"], require_clean=True),
            data["patch_size"], data["chunk_len"], cfg["seed"])

    samples, registry = build_dataset(
        labeled, unlabeled, data["patch_size"], data["chunk_len"],
        data["batch_size"], cfg["seed"])
    resume = ckpt_io.load_checkpoint(args.checkpoint) if args.checkpoint else None

    tcfg = train_config(cfg)
    nets = network_configs(cfg)
    _, rows = em_train(
        samples, registry, tcfg, nets, val_samples=val_samples,
        log_csv=os.path.join(out_dir, "log.csv"),
        checkpoint_path=os.path.join(out_dir, "checkpoint.ckpt"),
        checkpoint_every=cfg["train"]["checkpoint_every"], resume=resume)

    last = rows[-1] if rows else {}
    psnr = last.get("val_psnr")
    print(f"trained {tcfg.epochs} epochs, mode {tcfg.mode}; "
          f"final val PSNR {'n/a' if psnr is None else f'{psnr:.2f} dB'}; "
          f"outputs in {out_dir}")
    return 0


def _derain_clip(clip, net, chunk_len):
    """Chunked inference: full chunks plus the shorter remainder, stitched."""
    outs = []
    start = 0
    dtype = next(net.parameters()).dtype
    while start < clip.frames:
        end = min(start + chunk_len, clip.frames)
        piece = VideoClip(np.ascontiguousarray(clip.data[start:end]))
        with torch.no_grad():
            out = net(as_video_tensor(piece, dtype=dtype))
        outs.append(tensor_to_clip(out, clamp=True).data)
        start = end
    return VideoClip(np.concatenate(outs, axis=0))


def cmd_derain(args):
    if not args.checkpoint:
        raise ConfigError("--checkpoint is required")
    cfg = _resolve(args)
    ckpt = ckpt_io.load_checkpoint(args.checkpoint)
    net = ckpt_io.derainer_from_checkpoint(ckpt)
    clip = _load_any_clip(args.input)
    if clip.channels != net.cfg.channels:
        raise ConfigError(
            f"input has {clip.channels} channels, checkpointed derainer expects "
            f"{net.cfg.channels}")
    derained = _derain_clip(clip, net, cfg["data"]["chunk_len"])
    save_frames_dir(args.output, derained)
    print(f"derained {clip.frames} frames -> {args.output}")
    return 0


def _clip_entries(root):
    out = {}
    for name in sorted(os.listdir(root)):
        p = os.path.join(root, name)
        if os.path.isdir(p):
            out[name] = p
        elif name.endswith(".vt"):
            out[name[:-3]] = p
    return out


def cmd_evaluate(args):
    restored = _clip_entries(args.input)
    reference = _clip_entries(args.reference)
    if set(restored) != set(reference):
        only_a = sorted(set(restored) - set(reference))
        only_b = sorted(set(reference) - set(restored))
        raise ConfigError(
            f"clip sets differ: only in input {only_a}, only in reference {only_b}")
    if not restored:
        raise ConfigError(f"no clips found under {args.input}")
    rows = []
    for name in sorted(restored):
        a = _load_any_clip(restored[name])
        b = _load_any_clip(reference[name])
        rows.append((name, psnr_luminance(a, b), ssim_luminance(a, b)))
    with open(args.output, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["clip", "psnr", "ssim"])
        for name, p, s in rows:
            w.writerow([name, f"{p:.6f}", f"{s:.8f}"])
        w.writerow(["mean",
                    f"{float(np.mean([r[1] for r in rows])):.6f}",
                    f"{float(np.mean([r[2] for r in rows])):.8f}"])
    print(f"evaluated {len(rows)} clips -> {args.output}")
    return 0


def cmd_simulate_rain(args):
    cfg = _resolve(args)
    recipe = rain_recipe(cfg)
    r = cfg["rain"]
    rain = procedural_rain(recipe, r["frames"], r["height"], r["width"])
    os.makedirs(args.output, exist_ok=True)
    write_clip(os.path.join(args.output, "rain.vt"), rain)
    save_frames_dir(os.path.join(args.output, "rain"), rain)
    made = ["rain.vt", "rain/"]
    if args.input:
        clean = _load_any_clip(args.input)
        if clean.shape[0] != rain.frames or clean.shape[2:] != rain.data.shape[2:]:
            rain2 = procedural_rain(recipe, clean.frames, clean.height, clean.width)
        else:
            rain2 = rain
        rainy = composite_rainy(clean, rain2)
        write_clip(os.path.join(args.output, "rainy.vt"), rainy)
        save_frames_dir(os.path.join(args.output, "rainy"), rainy)
        made += ["rainy.vt", "rainy/"]
    print(f"simulated rain ({recipe.density}/kpx, seed {recipe.seed}) -> "
          f"{args.output}: {', '.join(made)}")
    return 0


def cmd_fit_generator(args):
    cfg = _resolve(args)
    rain_clip = _load_any_clip(args.input)
    fit = fit_generator(rain_clip, train_config(cfg), network_configs(cfg),
                        iterations=cfg["fit"]["iterations"])
    os.makedirs(args.output, exist_ok=True)
    write_clip(os.path.join(args.output, "reconstruction.vt"), fit.reconstruction)
    save_frames_dir(os.path.join(args.output, "reconstruction"), fit.reconstruction)
    with open(os.path.join(args.output, "losses.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "loss"])
        for i, v in enumerate(fit.losses, 1):
            w.writerow([i, f"{v:.8e}"])
    psnr = psnr_luminance(fit.reconstruction, rain_clip)
    with open(os.path.join(args.output, "summary.json"), "w") as fh:
        json.dump({"iterations": len(fit.losses), "psnr": psnr}, fh, indent=2)
        fh.write("\n")
    print(f"fitted generator: reconstruction PSNR {psnr:.2f} dB -> {args.output}")
    return 0


def cmd_demo_data(args):
    cfg = _resolve(args)
    labeled, unlabeled, val = make_demo_sources(cfg["seed"])
    for kind, sources in (("labeled", labeled), ("unlabeled", unlabeled), ("val", val)):
        for src in sources:
            d = os.path.join(args.output, kind, src.name)
            os.makedirs(d, exist_ok=True)
            write_clip(os.path.join(d, "rainy.vt"), src.rainy)
            if src.clean is not None and kind != "unlabeled":
                write_clip(os.path.join(d, "clean.vt"), src.clean)
    print(f"demo dataset ({len(labeled)} labeled, {len(unlabeled)} unlabeled, "
          f"{len(val)} val clips) -> {args.output}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="vderain",
        description="Semi-supervised video deraining: EM training of a derainer "
                    "against a learned dynamical rain generator.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True, seed=True):
        if config:
            p.add_argument("--config", help="JSON config file")
            p.add_argument("--set", action="append", metavar="KEY=VALUE",
                           help="dotted config override, repeatable")
        if seed:
            p.add_argument("--seed", type=int, help="override the config seed")

    p = sub.add_parser("train", help="run EM training")
    common(p)
    p.add_argument("--checkpoint", help="resume from this checkpoint")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("derain", help="apply a trained derainer to a video")
    common(p)
    p.add_argument("--checkpoint", required=True, help="trained checkpoint")
    p.add_argument("--input", required=True, help="frames dir or .vt clip")
    p.add_argument("--output", required=True, help="output frames dir")
    p.set_defaults(func=cmd_derain)

    p = sub.add_parser("evaluate", help="luminance PSNR/SSIM over clip pairs")
    p.add_argument("--input", required=True, help="restored clips root")
    p.add_argument("--reference", required=True, help="ground-truth clips root")
    p.add_argument("--output", required=True, help="CSV to write")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate-rain", help="render procedural rain")
    common(p)
    p.add_argument("--input", help="optional clean clip to composite over")
    p.add_argument("--output", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate_rain)

    p = sub.add_parser("fit-generator", help="fit the rain generator to one rain clip")
    common(p)
    p.add_argument("--input", required=True, help="rain layer clip (frames dir or .vt)")
    p.add_argument("--output", required=True, help="output directory")
    p.set_defaults(func=cmd_fit_generator)

    p = sub.add_parser("demo-data", help="materialize the bundled demo dataset")
    common(p)
    p.add_argument("--output", required=True, help="output directory")
    p.set_defaults(func=cmd_demo_data)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        raise
    except Exception as e:   # noqa: BLE001 - CLI boundary, no bare tracebacks
        print(f"vderain {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
