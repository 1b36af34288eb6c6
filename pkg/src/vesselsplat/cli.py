"""Command-line entry points: phantom-gen, train, render, eval, serve, report.

The VESSELSPLAT_LOG environment variable (debug / info / warning / error)
sets log verbosity for the CLI and the frame server.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, read_checkpoint_meta, save_checkpoint
from .datasets import load_dataset, subsample_train
from .imageio import write_image
from .losses import LossWeights
from .optimize import DensityConfig, OptimizerConfig
from .phantom import PhantomSpec, assign_splits, default_phantom, generate_dataset, orbit_rig
from .rasterizer import render
from .server import DEFAULT_FOV_DEG, FrameServer, orbit_camera
from .training import TrainConfig, evaluate, train


def _add_config_flags(parser: argparse.ArgumentParser):
    """One flag per TrainConfig field; nested configs get prefixed flags."""
    skip = {"weights", "optimizer", "density", "bounds"}
    for f in dataclasses.fields(TrainConfig):
        if f.name in skip:
            continue
        flag = "--" + f.name.replace("_", "-")
        if f.type == "bool" or isinstance(f.default, bool):
            parser.add_argument(flag, action="store_true", default=None)
        else:
            parser.add_argument(flag, type=float if "float" in str(f.type) else int, default=None)
    for prefix, cls in (("opt", OptimizerConfig), ("density", DensityConfig), ("loss", LossWeights)):
        for f in dataclasses.fields(cls):
            flag = f"--{prefix}-" + f.name.replace("_", "-")
            if isinstance(f.default, str):
                parser.add_argument(flag, type=str, default=None)
            else:
                parser.add_argument(flag, type=float, default=None)
    parser.add_argument("--bounds", type=str, default=None,
                        help="scene box as 'minx,miny,minz,maxx,maxy,maxz'")


def _config_from_args(args) -> TrainConfig:
    data = {}
    if args.config:
        data = json.loads(Path(args.config).read_text(encoding="utf-8"))
    cfg = TrainConfig.from_dict(data) if data else TrainConfig()
    for f in dataclasses.fields(TrainConfig):
        if f.name in ("weights", "optimizer", "density", "bounds"):
            continue
        val = getattr(args, f.name, None)
        if val is not None:
            caster = type(f.default) if f.default is not None else (lambda v: v)
            setattr(cfg, f.name, caster(val))
    for prefix, obj in (("opt", cfg.optimizer), ("density", cfg.density), ("loss", cfg.weights)):
        for f in dataclasses.fields(obj):
            val = getattr(args, f"{prefix}_{f.name}", None)
            if val is not None:
                setattr(obj, f.name, type(getattr(obj, f.name))(val) if getattr(obj, f.name) is not None else val)
    if args.bounds:
        vals = [float(v) for v in args.bounds.split(",")]
        if len(vals) != 6:
            raise ValueError("--bounds needs 6 comma-separated numbers")
        cfg.bounds = (tuple(vals[:3]), tuple(vals[3:]))
    if args.tr is not None:
        cfg.table_len = int(args.tr)
    for alias, field_name in (("no_table", "disable_table"), ("no_random_prune", "disable_random_prune"),
                              ("no_smooth", "disable_smooth"), ("no_ssim", "disable_ssim")):
        if getattr(args, alias):
            setattr(cfg, field_name, True)
    return cfg


def _cmd_phantom_gen(args) -> int:
    spec = PhantomSpec.load(args.spec) if args.spec else default_phantom(seed=args.seed)
    if args.emit_spec:
        spec.save(args.emit_spec)
        print(f"wrote phantom spec to {args.emit_spec}")
    cams, times = orbit_rig(args.views, width=args.width, height=args.height,
                            fov_deg=args.fov, radius=args.radius)
    splits = assign_splits(args.views, args.train_views)
    ds = generate_dataset(spec, cams, times, mode=args.mode, out_dir=args.out,
                          splits=splits, table_len=args.tr, workers=args.workers)
    n_train = len(ds.train_frames)
    print(f"wrote {len(ds.frames)} frames ({n_train} train / {len(ds.frames) - n_train} test) to {args.out}")
    return 0


def _cmd_train(args) -> int:
    cfg = _config_from_args(args)
    dataset = load_dataset(args.data)
    if args.views is not None:
        dataset = subsample_train(dataset, args.views)
    out = Path(args.out)
    if cfg.total_iterations == 0:
        bounds = np.asarray(cfg.bounds if cfg.bounds is not None else dataset.bounds, dtype=np.float64)
        from .training import init_random_cloud

        cloud = init_random_cloud(cfg.init_count, bounds, cfg.table_len, cfg.seed,
                                  init_opacity=cfg.init_opacity)
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(cloud, out / "model.ckpt", config_hash=cfg.config_hash(), iteration=0)
        print(f"wrote init checkpoint ({cloud.n} Gaussians) to {out / 'model.ckpt'}")
        return 0
    cloud, _ = train(dataset, cfg, out_dir=out, progress=not args.quiet)
    print(f"finished: {cloud.n} Gaussians -> {out / 'model.ckpt'}")
    if dataset.test_frames:
        ev = evaluate(cloud, dataset.test_frames, workers=cfg.workers)
        print(f"test psnr {ev['psnr']:.2f} dB  ssim {ev['ssim']:.4f}")
    return 0


def _parse_vec3(text):
    vals = [float(v) for v in text.split(",")]
    if len(vals) != 3:
        raise ValueError("expected 3 comma-separated numbers")
    return vals


def _cmd_render(args) -> int:
    cloud = load_checkpoint(args.checkpoint)
    if not (0.0 <= args.time <= 1.0):
        raise ValueError(f"time out of range: {args.time} not in [0, 1]")
    if args.camera:
        from .cameras import Camera

        rec = json.loads(Path(args.camera).read_text(encoding="utf-8"))
        cam = Camera.from_record(rec)
        if args.width or args.height:
            cam = cam.resized(args.width or cam.width, args.height or cam.height)
    elif args.orbit:
        az, el, radius = (float(v) for v in args.orbit.split(","))
        params = {"azimuth_deg": az, "elevation_deg": el, "radius": radius,
                  "target": _parse_vec3(args.target)}
        cam = orbit_camera(params, args.width or 512, args.height or 512, args.fov)
    else:
        raise ValueError("provide --camera FILE or --orbit az,el,radius")
    image = render(cloud, cam, args.time, workers=args.workers)
    write_image(args.out, image, bitdepth=args.bitdepth)
    print(f"rendered {cam.width}x{cam.height} at t={args.time} -> {args.out}")
    return 0


def _cmd_eval(args) -> int:
    cloud = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.data)
    frames = dataset.frames if args.split == "all" else dataset.split(args.split)
    if not frames:
        raise ValueError(f"no '{args.split}' frames in {args.data}")
    ev = evaluate(cloud, frames, workers=args.workers)
    if args.per_frame:
        for row in ev["frames"]:
            print(f"{row['name']:>24}  t={row['t']:.3f}  psnr {row['psnr']:6.2f}  ssim {row['ssim']:.4f}")
    print(f"mean psnr {ev['psnr']:.2f} dB  ssim {ev['ssim']:.4f}  ({len(frames)} {args.split} frames)")
    return 0


def _cmd_serve(args) -> int:
    meta = read_checkpoint_meta(args.checkpoint)
    server = FrameServer(args.checkpoint, host=args.host, port=args.port,
                         workers=args.workers, max_size=args.max_size, fov_deg=args.fov)
    extra = f" (config {meta.get('config_hash', '?')}, iter {meta.get('iteration', '?')})" if meta else ""
    print(f"serving {server.cloud.n} Gaussians on {server.host}:{server.port}{extra}", flush=True)
    server.serve_forever()
    return 0


def _cmd_report(args) -> int:
    rows = [json.loads(line) for line in Path(args.log).read_text(encoding="utf-8").splitlines() if line.strip()]
    evals = [r for r in rows if r.get("split") == "test" and "psnr" in r]
    trains = [r for r in rows if r.get("split") == "train" and "loss" in r]
    events = [r for r in rows if "event" in r]
    if trains:
        print(f"{'iter':>8}  {'train loss':>12}  {'test psnr':>10}  {'ssim':>8}  {'gaussians':>10}")
        by_iter = {r["iteration"]: r for r in evals}
        for r in trains:
            ev = by_iter.get(r["iteration"], {})
            print(f"{r['iteration']:>8}  {r['loss']:>12.5f}  "
                  f"{ev.get('psnr', float('nan')):>10.2f}  {ev.get('ssim', float('nan')):>8.4f}  "
                  f"{r.get('gaussians', 0):>10}")
    if events:
        n_densify = sum(1 for e in events if e["event"] == "densify")
        n_random = sum(1 for e in events if e["event"] == "prune_random")
        print(f"{len(events)} density events ({n_densify} densify, {n_random} random prunes); "
              f"final N = {events[-1].get('n_after', '?')}")
    if args.plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax1 = plt.subplots(figsize=(7, 4))
        if evals:
            ax1.plot([r["iteration"] for r in evals], [r["psnr"] for r in evals], "o-", label="test PSNR")
            ax1.set_ylabel("PSNR (dB)")
        ax2 = ax1.twinx()
        if trains:
            ax2.semilogy([r["iteration"] for r in trains], [r["loss"] for r in trains],
                         "s--", color="gray", label="train loss")
            ax2.set_ylabel("train loss")
        ax1.set_xlabel("iteration")
        fig.tight_layout()
        fig.savefig(args.plot, dpi=120)
        print(f"wrote plot to {args.plot}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vesselsplat",
                                     description="Time-resolved Gaussian splatting for angiography")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom-gen", help="synthesize a vessel phantom dataset")
    p.add_argument("--spec", help="phantom spec JSON (default: built-in tree)")
    p.add_argument("--out", required=True)
    p.add_argument("--views", type=int, default=50)
    p.add_argument("--train-views", type=int, default=30)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--height", type=int, default=128)
    p.add_argument("--mode", choices=("oracle", "analytic"), default="oracle")
    p.add_argument("--tr", type=int, default=5, help="temporal resolution (table length)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fov", type=float, default=DEFAULT_FOV_DEG)
    p.add_argument("--radius", type=float, default=3.8)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--emit-spec", help="also write the spec JSON used")
    p.set_defaults(func=_cmd_phantom_gen)

    p = sub.add_parser("train", help="train a cloud on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="TrainConfig JSON; flags override")
    p.add_argument("--out", required=True)
    p.add_argument("--iterations", dest="total_iterations", type=int, default=None,
                   help="alias for --total-iterations")
    p.add_argument("--views", type=int, help="subsample the train split to K views")
    p.add_argument("--tr", type=int, choices=(5, 10), help="temporal resolution")
    p.add_argument("--no-table", action="store_true")
    p.add_argument("--no-random-prune", action="store_true")
    p.add_argument("--no-smooth", action="store_true")
    p.add_argument("--no-ssim", action="store_true")
    p.add_argument("--quiet", action="store_true")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("render", help="render one frame from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--time", type=float, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--camera", help="camera record JSON file")
    p.add_argument("--orbit", help="azimuth_deg,elevation_deg,radius")
    p.add_argument("--target", default="0,0,0")
    p.add_argument("--fov", type=float, default=DEFAULT_FOV_DEG)
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--bitdepth", type=int, default=16, choices=(8, 16))
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("eval", help="score a checkpoint against a dataset split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", choices=("train", "test", "all"), default="test")
    p.add_argument("--per-frame", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("serve", help="serve frames from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--workers", type=int, default=2)
    p.add_argument("--max-size", type=int, default=1024)
    p.add_argument("--fov", type=float, default=DEFAULT_FOV_DEG)
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("report", help="summarize a training log")
    p.add_argument("--log", required=True)
    p.add_argument("--plot", help="write a PSNR/loss plot PNG")
    p.set_defaults(func=_cmd_report)
    return parser


def configure_logging():
    level = os.environ.get("VESSELSPLAT_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def main(argv=None) -> int:
    configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
