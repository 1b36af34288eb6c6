"""Frame datasets on disk: a directory of grayscale images plus ``meta.json``.

``meta.json`` lists one record per frame (image filename, camera record,
normalized time t, split tag) plus the scene bounds used for initialization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cameras import Camera
from .imageio import read_image, write_image

META_NAME = "meta.json"


@dataclass
class Frame:
    image: np.ndarray  # (H, W) float32 in [0, 1]
    camera: Camera
    t: float
    split: str = "train"
    name: str = ""

    def __post_init__(self):
        if not (0.0 <= self.t <= 1.0):
            raise ValueError(f"frame time {self.t} outside [0, 1]")
        if self.image is not None:
            h, w = self.image.shape
            if (h, w) != (self.camera.height, self.camera.width):
                raise ValueError("frame image dimensions do not match its camera")


@dataclass
class Dataset:
    frames: list
    bounds: np.ndarray = None  # (2, 3) min/max scene box
    root: Path = None

    def __post_init__(self):
        if self.frames:
            shape = self.frames[0].image.shape
            for fr in self.frames:
                if fr.image.shape != shape:
                    raise ValueError("all dataset images must share dimensions")

    def split(self, tag) -> list:
        return [f for f in self.frames if f.split == tag]

    @property
    def train_frames(self):
        return self.split("train")

    @property
    def test_frames(self):
        return self.split("test")


def save_dataset(dataset: Dataset, out_dir, *, bitdepth=16, image_format="png") -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for i, fr in enumerate(dataset.frames):
        name = fr.name or f"frame_{i:04d}.{image_format}"
        write_image(out / name, fr.image, bitdepth=bitdepth)
        records.append({
            "file": name,
            "t": float(fr.t),
            "split": fr.split,
            "camera": fr.camera.to_record(),
        })
    meta = {
        "bounds": np.asarray(dataset.bounds, dtype=float).tolist() if dataset.bounds is not None else None,
        "frames": records,
    }
    (out / META_NAME).write_text(json.dumps(meta, indent=1, sort_keys=True), encoding="utf-8")
    return out


def load_dataset(root) -> Dataset:
    root = Path(root)
    meta_path = root / META_NAME
    if not meta_path.exists():
        raise FileNotFoundError(f"{root}: no {META_NAME} found")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    frames = []
    for rec in meta["frames"]:
        frames.append(Frame(
            image=read_image(root / rec["file"]),
            camera=Camera.from_record(rec["camera"]),
            t=float(rec["t"]),
            split=rec.get("split", "train"),
            name=rec["file"],
        ))
    bounds = np.asarray(meta["bounds"], dtype=np.float64) if meta.get("bounds") else None
    return Dataset(frames=frames, bounds=bounds, root=root)


def subsample_train(dataset: Dataset, count) -> Dataset:
    """Keep ``count`` evenly spaced training views (time coverage preserved);
    test frames are untouched."""
    train = dataset.train_frames
    if count >= len(train):
        return dataset
    idx = set(np.round(np.linspace(0, len(train) - 1, count)).astype(int).tolist())
    kept, seen = [], 0
    for fr in dataset.frames:
        if fr.split != "train":
            kept.append(fr)
            continue
        if seen in idx:
            kept.append(fr)
        seen += 1
    return Dataset(frames=kept, bounds=dataset.bounds, root=dataset.root)
