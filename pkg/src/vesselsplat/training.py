"""End-to-end optimization loop: random init, per-iteration single-frame
updates, scheduled density control, checkpointing, and evaluation."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .checkpoint import save_checkpoint
from .datasets import Dataset
from .gaussians import GaussianCloud, logit
from .losses import LossWeights, psnr, ssim, total_loss
from .optimize import (AdamState, DensityConfig, OptimizerConfig,
                       accumulate_densify_stats, adam_step, densify,
                       prune_opacity, prune_random)
from .rasterizer import render, render_backward


@dataclass
class TrainConfig:
    total_iterations: int = 30000
    init_count: int = 100000
    table_len: int = 5
    init_opacity: float = 0.1
    weights: LossWeights = field(default_factory=LossWeights)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    density: DensityConfig = field(default_factory=DensityConfig)
    seed: int = 0
    bounds: tuple = None  # ((minx, miny, minz), (maxx, maxy, maxz)); dataset bounds if None
    eval_interval: int = 1000
    checkpoint_interval: int = 5000
    disable_table: bool = False
    disable_random_prune: bool = False
    disable_smooth: bool = False
    disable_ssim: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.init_count < 1:
            raise ValueError("init_count must be >= 1")
        if self.table_len < 1:
            raise ValueError("table_len must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["bounds"] is not None:
            d["bounds"] = np.asarray(d["bounds"], dtype=float).tolist()
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        data = dict(data)
        if "weights" in data and isinstance(data["weights"], dict):
            data["weights"] = LossWeights(**data["weights"])
        if "optimizer" in data and isinstance(data["optimizer"], dict):
            data["optimizer"] = OptimizerConfig(**data["optimizer"])
        if "density" in data and isinstance(data["density"], dict):
            data["density"] = DensityConfig(**data["density"])
        if data.get("bounds") is not None:
            data["bounds"] = tuple(map(tuple, data["bounds"]))
        return cls(**data)

    def config_hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def init_random_cloud(count, bounds, table_len, seed, *, init_opacity=0.1, dtype=np.float32) -> GaussianCloud:
    """Uniform random positions in the scene box; identity rotations; isotropic
    scales from the mean nearest-neighbor distance over a subsample; zero
    offset tables; mid-gray intensity."""
    bounds = np.asarray(bounds, dtype=np.float64)
    lo, hi = bounds[0], bounds[1]
    if np.any(hi <= lo):
        raise ValueError("degenerate scene box")
    rng = np.random.default_rng(seed)
    pos = rng.uniform(lo, hi, size=(count, 3))
    sample = pos if count <= 4096 else pos[rng.choice(count, 4096, replace=False)]
    if len(sample) > 1:
        dists, _ = cKDTree(sample).query(sample, k=2)
        mean_nn = float(np.mean(dists[:, 1]))
    else:
        mean_nn = float(np.linalg.norm(hi - lo)) / 10.0
    mean_nn = max(mean_nn, 1e-7)
    dtype = np.dtype(dtype)
    rotations = np.zeros((count, 4)); rotations[:, 0] = 1.0
    return GaussianCloud(
        positions=pos.astype(dtype),
        rotations=rotations.astype(dtype),
        log_scales=np.full((count, 3), np.log(mean_nn), dtype=dtype),
        opacity_logits=np.full(count, logit(init_opacity), dtype=dtype),
        offset_tables=np.zeros((count, table_len), dtype=dtype),
        intensity_logits=np.zeros(count, dtype=dtype),
    )


def evaluate(cloud: GaussianCloud, frames, *, workers=1) -> dict:
    """Render every frame at its (camera, t) and score against ground truth."""
    if not frames:
        raise ValueError("no frames to evaluate")
    per_frame = []
    for fr in frames:
        img = render(cloud, fr.camera, fr.t, workers=workers)
        target = np.asarray(fr.image, dtype=np.float64)
        s, _ = ssim(np.asarray(img, dtype=np.float64), target)
        per_frame.append({"name": fr.name, "t": fr.t, "psnr": psnr(img, target), "ssim": s})
    return {
        "frames": per_frame,
        "psnr": float(np.mean([f["psnr"] for f in per_frame])),
        "ssim": float(np.mean([f["ssim"] for f in per_frame])),
    }


class TrainLog:
    """Line-delimited JSON records: metric rows and density-control events."""

    def __init__(self, path=None):
        self.records = []
        self.path = Path(path) if path else None
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "w", encoding="utf-8")
        else:
            self._fh = None

    def emit(self, **record):
        self.records.append(record)
        if self._fh:
            self._fh.write(json.dumps(record, sort_keys=True) + "\n")
            self._fh.flush()

    def close(self):
        if self._fh:
            self._fh.close()
            self._fh = None


def _scene_bounds(dataset: Dataset, cfg: TrainConfig) -> np.ndarray:
    if cfg.bounds is not None:
        return np.asarray(cfg.bounds, dtype=np.float64)
    if dataset.bounds is not None:
        return np.asarray(dataset.bounds, dtype=np.float64)
    raise ValueError("no scene bounds in config or dataset metadata")


def train(dataset: Dataset, cfg: TrainConfig, *, out_dir=None, log: TrainLog = None,
          cloud: GaussianCloud = None, progress=False):
    """Run the full training recipe; returns (cloud, log).

    Per iteration: sample one training frame (seeded permutation per epoch),
    render at its camera and timestamp, take one Adam step on the total loss.
    Densify + opacity-prune run at the densify cadence and random pruning every
    ``random_prune_interval`` iterations, both only inside the densify window.
    A non-finite gradient aborts training and returns the last checkpointed
    state.
    """
    frames = dataset.train_frames
    if not frames:
        raise ValueError("training split is empty")
    bounds = _scene_bounds(dataset, cfg)
    extent = float(np.linalg.norm(bounds[1] - bounds[0]))
    weights = LossWeights(
        lambda_ssim=0.0 if cfg.disable_ssim else cfg.weights.lambda_ssim,
        lambda_smooth=0.0 if (cfg.disable_smooth or cfg.disable_table) else cfg.weights.lambda_smooth,
    )
    if log is None:
        log = TrainLog(Path(out_dir) / "train_log.jsonl" if out_dir else None)
    if cloud is None:
        cloud = init_random_cloud(cfg.init_count, bounds, cfg.table_len, cfg.seed,
                                  init_opacity=cfg.init_opacity)
    cloud.adam = AdamState.init(cloud)
    test_frames = dataset.test_frames
    ckpt_dir = Path(out_dir) if out_dir else None
    if ckpt_dir:
        ckpt_dir.mkdir(parents=True, exist_ok=True)
    last_good = cloud.copy()

    perm = np.zeros(0, dtype=np.int64)
    cursor = 0
    epoch = 0
    it = 0
    try:
        for it in range(1, cfg.total_iterations + 1):
            if cursor >= len(perm):
                perm = np.random.default_rng([cfg.seed, 17, epoch]).permutation(len(frames))
                cursor = 0
                epoch += 1
            fr = frames[perm[cursor]]
            cursor += 1

            image = render(cloud, fr.camera, fr.t, workers=cfg.workers)
            loss, d_image, d_tables = total_loss(image, fr.image, cloud, weights)
            grads = render_backward(cloud, fr.camera, fr.t, d_image, workers=cfg.workers)
            grads.offset_tables += d_tables.astype(cloud.dtype)
            if cfg.disable_table:
                grads.offset_tables[:] = 0
            accumulate_densify_stats(cloud, grads)
            adam_step(cloud, grads, cfg.optimizer, it)

            in_window = cfg.density.densify_start <= it <= cfg.density.densify_end
            if in_window and it % cfg.density.densify_interval == 0:
                before = cloud.n
                cloud = densify(cloud, cfg.density, extent,
                                rng=np.random.default_rng([cfg.seed, 29, it]))
                grown = cloud.n
                cloud = prune_opacity(cloud, cfg.density)
                log.emit(iteration=it, event="densify", n_before=before, n_split=grown,
                         n_after=cloud.n)
            if in_window and not cfg.disable_random_prune and it % cfg.density.random_prune_interval == 0:
                before = cloud.n
                cloud = prune_random(cloud, cfg.density.random_prune_fraction,
                                     cfg.seed * 1000003 + it)
                log.emit(iteration=it, event="prune_random", n_before=before, n_after=cloud.n)

            if it % cfg.eval_interval == 0 or it == cfg.total_iterations:
                row = {"iteration": it, "split": "train", "loss": float(loss), "gaussians": cloud.n}
                log.emit(**row)
                if test_frames:
                    ev = evaluate(cloud, test_frames, workers=cfg.workers)
                    log.emit(iteration=it, split="test", psnr=ev["psnr"], ssim=ev["ssim"],
                             gaussians=cloud.n)
                    if progress:
                        print(f"iter {it:6d}  loss {loss:.5f}  N {cloud.n:6d}  "
                              f"test psnr {ev['psnr']:.2f} ssim {ev['ssim']:.4f}", flush=True)
                elif progress:
                    print(f"iter {it:6d}  loss {loss:.5f}  N {cloud.n:6d}", flush=True)

            if it % cfg.checkpoint_interval == 0:
                last_good = cloud.copy()
                if ckpt_dir:
                    save_checkpoint(cloud, ckpt_dir / f"ckpt_{it:06d}.ckpt",
                                    config_hash=cfg.config_hash(), iteration=it)
    except FloatingPointError as err:
        log.emit(iteration=it, event="aborted", error=str(err))
        log.close()
        return last_good, log

    if ckpt_dir:
        save_checkpoint(cloud, ckpt_dir / "model.ckpt",
                        config_hash=cfg.config_hash(), iteration=cfg.total_iterations)
    log.close()
    return cloud, log
