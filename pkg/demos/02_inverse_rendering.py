"""Inverse rendering in a few dozen lines: recover a scene by gradient descent
through the rasterizer.

A 6-splat scene renders a target image; a perturbed copy is then optimized
back to it using the analytic backward pass and Adam.

Run:  python3 demos/02_inverse_rendering.py
"""

import numpy as np

from vesselsplat import AdamState, Camera, OptimizerConfig, adam_step, psnr, recon_loss, render, render_backward
from vesselsplat.gaussians import GaussianCloud, logit

rng = np.random.default_rng(4)
n = 6


def make_scene(jitter=0.0):
    cloud = GaussianCloud(
        positions=(rng_scene.uniform(-0.5, 0.5, (n, 3)) + jitter * rng.normal(size=(n, 3)) * 0.15).astype(np.float32),
        rotations=rng_scene.normal(size=(n, 4)).astype(np.float32),
        log_scales=rng_scene.uniform(np.log(0.1), np.log(0.3), (n, 3)).astype(np.float32),
        opacity_logits=rng_scene.uniform(logit(0.3), logit(0.7), n).astype(np.float32),
        offset_tables=np.zeros((n, 5), dtype=np.float32),
        intensity_logits=rng_scene.uniform(logit(0.4), logit(0.9), n).astype(np.float32),
    )
    return cloud


cam = Camera.look_at(eye=(0, 0, -3.2), target=(0, 0, 0), fx=120, width=96, height=96,
                     near=0.2, far=10)

rng_scene = np.random.default_rng(11)
target_cloud = make_scene()
target = render(target_cloud, cam, 0.5)

rng_scene = np.random.default_rng(11)  # same base scene, jittered start
cloud = make_scene(jitter=1.0)
cloud.adam = AdamState.init(cloud)

opt = OptimizerConfig(lr_position=0.01, lr_position_final=0.001, lr_position_max_steps=400)
print(f"start: psnr {psnr(render(cloud, cam, 0.5), target):.2f} dB")
for it in range(1, 401):
    image = render(cloud, cam, 0.5)
    loss, d_image = recon_loss(image, target)
    grads = render_backward(cloud, cam, 0.5, d_image)
    adam_step(cloud, grads, opt, it)
    if it % 100 == 0:
        print(f"iter {it:4d}: loss {loss:.5f}  psnr {psnr(render(cloud, cam, 0.5), target):.2f} dB")
