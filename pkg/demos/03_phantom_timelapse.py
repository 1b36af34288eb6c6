"""Render the synthetic vessel phantom through the contrast-bolus passage.

Builds the default branching-tree phantom, then renders a fixed viewpoint at
a sweep of timestamps: the bolus washes in along the tree and fades out.

Run:  python3 demos/03_phantom_timelapse.py  (writes timelapse.png)
"""

from pathlib import Path

import numpy as np

from vesselsplat import Camera, build_oracle, default_phantom, render
from vesselsplat.imageio import write_png

spec = default_phantom(seed=0)
cloud = build_oracle(spec, table_len=5)
print(f"phantom: {len(spec.segments)} segments, {cloud.n} splats")

lo, hi = spec.bounding_box(0.1)
target = (lo + hi) / 2
cam = Camera.orbit(azimuth_deg=25, elevation_deg=12, radius=3.8, target=target,
                   fx=180, width=160, height=160, near=0.5, far=20)

times = np.linspace(0, 1, 8)
frames = [np.asarray(render(cloud, cam, float(t)), dtype=np.float64) for t in times]
for t, frame in zip(times, frames):
    print(f"t={t:.2f}: mean intensity {frame.mean():.4f}")

strip = np.concatenate(frames, axis=1)
out = Path(__file__).parent / "timelapse.png"
write_png(out, strip, bitdepth=8)
print(f"wrote {out} ({strip.shape[1]}x{strip.shape[0]})")
