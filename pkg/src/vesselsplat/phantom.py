"""Synthetic vessel phantom: branching tubes with per-branch time-density curves.

The phantom stands in for clinical rotational angiography: a camera orbit
where each view is captured at its own timestamp while contrast washes in and
out along the tree.  Two rendering modes share the same scene samples:

* ``oracle`` renders with the engine's own rasterizer from an oracle cloud
  whose parameters are known exactly (recovery ground truth);
* ``analytic`` composites closed-form isotropic screen footprints per sample
  with its own projection and compositing code, independent of the rasterizer
  (a cross-validation path).

Per-sample opacity over time is defined as the piecewise-linear interpolation
of the branch's gamma-variate curve sampled at the table knots, so the oracle
cloud reproduces it exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cameras import Camera
from .datasets import Dataset, Frame, save_dataset
from .gaussians import GaussianCloud, logit, table_knots
from .rasterizer import render


def gamma_variate(t, t0, rise, decay, amplitude):
    """Normalized gamma-variate bolus curve, peaking at exactly ``amplitude``.

    Zero for t < t0; afterwards A * (dt/tp)^a * exp(a * (1 - dt/tp)) with
    tp = rise/decay, so the peak sits at t0 + tp.  Accepts scalars or arrays.
    """
    if rise <= 0 or decay <= 0:
        raise ValueError("gamma-variate rise and decay must be positive")
    if amplitude < 0:
        raise ValueError("gamma-variate amplitude must be non-negative")
    t = np.asarray(t, dtype=np.float64)
    tp = rise / decay
    dt = (t - t0) / tp
    with np.errstate(invalid="ignore"):
        val = amplitude * np.power(np.maximum(dt, 0.0), rise) * np.exp(rise * (1.0 - np.maximum(dt, 0.0)))
    out = np.where(t < t0, 0.0, val)
    return float(out) if out.ndim == 0 else out


@dataclass
class Segment:
    start: tuple
    end: tuple
    radius: float
    parent: int = -1


@dataclass
class TDC:
    t0: float
    rise: float
    decay: float
    amplitude: float


@dataclass
class PhantomSpec:
    segments: list           # list[Segment]
    tdcs: list               # list[TDC], one per segment
    density: float = 120.0   # Gaussians per unit length
    seed: int = 0
    base_opacity: float = 0.05
    intensity: float = 0.85
    scale_factor: float = 0.8  # splat sigma = scale_factor * radius

    def __post_init__(self):
        if len(self.segments) != len(self.tdcs):
            raise ValueError("one TDC required per segment")
        seen = set()
        for i, seg in enumerate(self.segments):
            if seg.radius <= 0:
                raise ValueError(f"segment {i} has non-positive radius")
            if seg.parent >= i:
                raise ValueError("segments must be listed parents-first (acyclic)")
            if seg.parent >= 0 and seg.parent not in seen and seg.parent != i:
                pass
            seen.add(i)
        roots = sum(1 for s in self.segments if s.parent < 0)
        if self.segments and roots == 0:
            raise ValueError("vessel tree needs a root segment")
        for tdc in self.tdcs:
            if tdc.amplitude < 0 or tdc.amplitude > 1:
                raise ValueError("TDC amplitudes must lie in [0, 1]")

    def bounding_box(self, inflate=0.0) -> np.ndarray:
        pts = np.array([s.start for s in self.segments] + [s.end for s in self.segments], dtype=np.float64)
        radii = max(s.radius for s in self.segments)
        lo = pts.min(axis=0) - radii
        hi = pts.max(axis=0) + radii
        mid = (lo + hi) / 2
        half = (hi - lo) / 2 * (1.0 + inflate)
        return np.stack([mid - half, mid + half])

    def to_json(self) -> str:
        return json.dumps({
            "density": self.density,
            "seed": self.seed,
            "base_opacity": self.base_opacity,
            "intensity": self.intensity,
            "scale_factor": self.scale_factor,
            "segments": [{"start": list(map(float, s.start)), "end": list(map(float, s.end)),
                          "radius": s.radius, "parent": s.parent} for s in self.segments],
            "tdcs": [{"t0": c.t0, "rise": c.rise, "decay": c.decay, "amplitude": c.amplitude}
                     for c in self.tdcs],
        }, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PhantomSpec":
        data = json.loads(text)
        return cls(
            segments=[Segment(tuple(s["start"]), tuple(s["end"]), s["radius"], s.get("parent", -1))
                      for s in data["segments"]],
            tdcs=[TDC(c["t0"], c["rise"], c["decay"], c["amplitude"]) for c in data["tdcs"]],
            density=data.get("density", 120.0),
            seed=data.get("seed", 0),
            base_opacity=data.get("base_opacity", 0.05),
            intensity=data.get("intensity", 0.85),
            scale_factor=data.get("scale_factor", 0.8),
        )

    @classmethod
    def load(cls, path) -> "PhantomSpec":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def save(self, path):
        Path(path).write_text(self.to_json(), encoding="utf-8")


def default_phantom(seed=0) -> PhantomSpec:
    """Three-level binary branching tree (15 segments) in a roughly unit box,
    with the bolus arriving later and weaker farther down the tree.

    Vessel radii are sized so tubes span several pixels at the default
    128x128 acquisition, mirroring clinical vessel-to-image proportions."""
    rng = np.random.default_rng(seed)
    segments, tdcs = [], []

    def grow(start, direction, length, radius, level, parent, arrival):
        direction = direction / np.linalg.norm(direction)
        end = start + direction * length
        segments.append(Segment(tuple(start), tuple(end), radius, parent))
        tdcs.append(TDC(
            t0=arrival,
            rise=2.5,
            decay=6.0 - 0.5 * level,
            amplitude=float(np.clip(0.85 - 0.12 * level + rng.uniform(-0.04, 0.04), 0.1, 0.95)),
        ))
        idx = len(segments) - 1
        if level >= 3:
            return
        for sign in (-1.0, 1.0):
            axis = np.array([1.0, 0.0, 0.0]) if abs(direction[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
            side = np.cross(direction, axis)
            side /= np.linalg.norm(side)
            tilt = rng.uniform(0.45, 0.75)
            swirl = rng.uniform(-0.35, 0.35)
            third = np.cross(direction, side)
            child_dir = direction + sign * tilt * side + swirl * third
            grow(end, child_dir, length * 0.72, radius * 0.75, level + 1, idx,
                 arrival + rng.uniform(0.08, 0.14))

    grow(np.array([0.0, -0.85, 0.0]), np.array([0.05, 1.0, 0.02]), 0.65, 0.11, 0, -1, 0.02)
    return PhantomSpec(segments=segments, tdcs=tdcs, density=110.0, seed=seed)


@dataclass
class PhantomSamples:
    """Scene samples shared by both rendering modes: points on segment axes with
    isotropic world sigmas and absolute opacity values at the table knots."""

    positions: np.ndarray     # (M, 3)
    sigmas: np.ndarray        # (M,)
    knot_opacity: np.ndarray  # (M, L) absolute opacity at knots, in [0, 1]
    intensity: float
    segment_index: np.ndarray  # (M,) int


def sample_phantom(spec: PhantomSpec, table_len: int) -> PhantomSamples:
    """Deterministic evenly-spaced samples along every segment axis."""
    knots = table_knots(table_len)
    positions, sigmas, knot_vals, seg_idx = [], [], [], []
    for i, (seg, tdc) in enumerate(zip(spec.segments, spec.tdcs)):
        start = np.asarray(seg.start, dtype=np.float64)
        end = np.asarray(seg.end, dtype=np.float64)
        length = float(np.linalg.norm(end - start))
        count = max(1, int(round(spec.density * length)))
        fractions = (np.arange(count) + 0.5) / count
        pts = start[None, :] + fractions[:, None] * (end - start)[None, :]
        curve = np.clip(gamma_variate(knots, tdc.t0, tdc.rise, tdc.decay, tdc.amplitude), 0.0, 1.0)
        positions.append(pts)
        sigmas.append(np.full(count, seg.radius * spec.scale_factor))
        knot_vals.append(np.tile(curve, (count, 1)))
        seg_idx.append(np.full(count, i, dtype=np.int64))
    return PhantomSamples(
        positions=np.concatenate(positions),
        sigmas=np.concatenate(sigmas),
        knot_opacity=np.concatenate(knot_vals),
        intensity=spec.intensity,
        segment_index=np.concatenate(seg_idx),
    )


def build_oracle(spec: PhantomSpec, table_len: int, dtype=np.float32) -> GaussianCloud:
    """Oracle cloud whose opacity trajectory reproduces the phantom exactly:
    offset tables hold the knot opacities minus the activated base opacity."""
    samples = sample_phantom(spec, table_len)
    n = samples.positions.shape[0]
    dtype = np.dtype(dtype)
    base = spec.base_opacity
    tables = samples.knot_opacity - base
    rotations = np.zeros((n, 4)); rotations[:, 0] = 1.0
    return GaussianCloud(
        positions=samples.positions.astype(dtype),
        rotations=rotations.astype(dtype),
        log_scales=np.log(samples.sigmas)[:, None].repeat(3, axis=1).astype(dtype),
        opacity_logits=np.full(n, logit(base)).astype(dtype),
        offset_tables=tables.astype(dtype),
        intensity_logits=np.full(n, logit(spec.intensity)).astype(dtype),
    )


def render_analytic(samples: PhantomSamples, cam: Camera, t) -> np.ndarray:
    """Closed-form splat compositing, independent of the tile rasterizer.

    Each sample projects to an isotropic-source footprint mu = (fx x/z + cx,
    fy y/z + cy), covariance sigma^2 J J^T + 0.3 I with the pinhole Jacobian
    J written out in closed form; samples composite front to back over the
    whole image with the same 0.99 opacity clamp the engine uses.
    """
    if not (0.0 <= t <= 1.0):
        raise ValueError("time out of range")
    length = samples.knot_opacity.shape[1]
    if length == 1:
        alphas = samples.knot_opacity[:, 0].copy()
    else:
        pos = t * (length - 1)
        k0 = min(int(np.floor(pos)), length - 2)
        w1 = pos - k0
        alphas = samples.knot_opacity[:, k0] * (1 - w1) + samples.knot_opacity[:, k0 + 1] * w1

    R, tr = cam.rotation, cam.translation
    p_cam = samples.positions @ R.T + tr
    x, y, z = p_cam[:, 0], p_cam[:, 1], p_cam[:, 2]
    visible = (z > cam.near) & (z < cam.far)
    order = np.lexsort((np.arange(len(z)), z))
    order = order[visible[order]]

    H, W = cam.height, cam.width
    xs = np.arange(W, dtype=np.float64) + 0.5
    ys = np.arange(H, dtype=np.float64) + 0.5
    px = np.broadcast_to(xs[None, :], (H, W))
    py = np.broadcast_to(ys[:, None], (H, W))

    image = np.zeros((H, W), dtype=np.float64)
    trans = np.ones((H, W), dtype=np.float64)
    color = samples.intensity
    for i in order:
        alpha = min(float(alphas[i]), 1.0)
        if alpha <= 0.0:
            continue
        zi = 1.0 / z[i]
        ux = cam.fx * x[i] * zi + cam.cx
        uy = cam.fy * y[i] * zi + cam.cy
        s2 = samples.sigmas[i] ** 2
        # J J^T for J = [[fx/z, 0, -fx x/z^2], [0, fy/z, -fy y/z^2]]
        a = s2 * (cam.fx * zi) ** 2 * (1.0 + (x[i] * zi) ** 2) + 0.3
        b = s2 * cam.fx * cam.fy * x[i] * y[i] * zi ** 4 + 0.0
        c = s2 * (cam.fy * zi) ** 2 * (1.0 + (y[i] * zi) ** 2) + 0.3
        det = a * c - b * b
        ia, ib, ic = c / det, -b / det, a / det
        dx = px - ux
        dy = py - uy
        power = -0.5 * (ia * dx * dx + ic * dy * dy) - ib * dx * dy
        sigma = np.minimum(alpha * np.exp(power), 0.99)
        image += color * sigma * trans
        trans *= 1.0 - sigma
    return image


def orbit_rig(n_views, *, width=128, height=128, fov_deg=40.0, radius=3.8,
              target=(0.0, 0.0, 0.0), elevation_deg=12.0, span_deg=180.0,
              near=0.5, far=20.0):
    """Half-orbit acquisition: one camera per view with time increasing
    linearly 0 to 1 along the orbit (one timestamp per view)."""
    fx = width / (2.0 * np.tan(np.deg2rad(fov_deg) / 2.0))
    cams, times = [], []
    for i in range(n_views):
        frac = i / max(n_views - 1, 1)
        cams.append(Camera.orbit(
            azimuth_deg=-span_deg / 2.0 + span_deg * frac,
            elevation_deg=elevation_deg,
            radius=radius, target=target,
            fx=fx, width=width, height=height, near=near, far=far,
        ))
        times.append(frac)
    return cams, times


def assign_splits(n_views, n_train):
    """Evenly interleaved train/test split tags over the orbit."""
    if n_train >= n_views:
        return ["train"] * n_views
    train_idx = set(np.round(np.linspace(0, n_views - 1, n_train)).astype(int).tolist())
    return ["train" if i in train_idx else "test" for i in range(n_views)]


def generate_dataset(source, cameras, times, *, mode="oracle", out_dir=None,
                     splits=None, table_len=5, workers=1) -> Dataset:
    """Render one frame per (camera, time) pair and optionally write the
    dataset directory.

    ``source`` is a PhantomSpec (either mode) or a pre-built oracle
    GaussianCloud (oracle mode only).  Scene bounds stored with the dataset
    are the phantom bounding box inflated by 10%.
    """
    if len(cameras) != len(times):
        raise ValueError("need exactly one timestamp per view")
    if mode not in ("oracle", "analytic"):
        raise ValueError("mode must be 'oracle' or 'analytic'")
    bounds = None
    if isinstance(source, PhantomSpec):
        bounds = source.bounding_box(inflate=0.10)
        if mode == "oracle":
            scene = build_oracle(source, table_len)
        else:
            scene = sample_phantom(source, table_len)
    else:
        if mode != "oracle":
            raise ValueError("analytic mode needs a PhantomSpec source")
        scene = source
        lo = scene.positions.min(axis=0)
        hi = scene.positions.max(axis=0)
        mid, half = (lo + hi) / 2, (hi - lo) / 2 * 1.10
        bounds = np.stack([mid - half, mid + half])
    splits = splits or ["train"] * len(cameras)
    frames = []
    for i, (cam, t) in enumerate(zip(cameras, times)):
        if mode == "oracle":
            img = render(scene, cam, t, workers=workers)
        else:
            img = render_analytic(scene, cam, t)
        frames.append(Frame(image=np.asarray(img, dtype=np.float32), camera=cam,
                            t=float(t), split=splits[i], name=f"frame_{i:04d}.png"))
    dataset = Dataset(frames=frames, bounds=bounds)
    if out_dir is not None:
        save_dataset(dataset, out_dir)
        dataset.root = Path(out_dir)
    return dataset
