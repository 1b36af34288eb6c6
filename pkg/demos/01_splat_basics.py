"""A first look at the scene primitives: one Gaussian, its covariance, and the
time-varying opacity table.

Run:  python3 demos/01_splat_basics.py  (writes splat_t*.png next to it)
"""

from pathlib import Path

import numpy as np

from vesselsplat import Camera, GaussianCloud, build_covariance, interp_table, render
from vesselsplat.gaussians import logit
from vesselsplat.imageio import write_png

out_dir = Path(__file__).parent

# A Gaussian is a position, an orientation (quaternion), per-axis log-scales,
# an opacity logit, an intensity logit, and an opacity offset table.
rotation = np.array([np.cos(np.pi / 8), 0.0, 0.0, np.sin(np.pi / 8)])  # 45 deg about z
log_scale = np.log([0.5, 0.15, 0.15])
print("world covariance:\n", build_covariance(rotation, log_scale).round(4))

# The offset table stores opacity deltas at uniform time knots; between knots
# the delta is linearly interpolated.  Here: transparent, wash-in, wash-out.
table = np.array([-0.4, 0.1, 0.5, 0.3, -0.1])
for t in (0.0, 0.125, 0.5, 1.0):
    print(f"  delta alpha at t={t}: {interp_table(table, t):+.3f}")

cloud = GaussianCloud(
    positions=np.zeros((1, 3), dtype=np.float32),
    rotations=rotation[None].astype(np.float32),
    log_scales=log_scale[None].astype(np.float32),
    opacity_logits=np.array([logit(0.45)], dtype=np.float32),
    offset_tables=table[None].astype(np.float32),
    intensity_logits=np.array([logit(0.9)], dtype=np.float32),
)

cam = Camera.look_at(eye=(0, 0, -3), target=(0, 0, 0), fx=220, width=128, height=128,
                     near=0.1, far=10)

# Rendering the same splat at different times only changes its opacity: at
# t=0 the summed opacity clamps to zero (invisible), by t=0.5 it is near peak.
for t in (0.0, 0.25, 0.5, 1.0):
    image = render(cloud, cam, t)
    write_png(out_dir / f"splat_t{t:.2f}.png", image, bitdepth=8)
    print(f"t={t:.2f}: peak intensity {image.max():.3f}")
