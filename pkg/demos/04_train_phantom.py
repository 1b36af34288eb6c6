"""End-to-end training on a small phantom dataset, from random splats to a
reconstruction, with held-out scoring along the way.

This is a scaled-down run (96x96, 3000 iterations, ~2 minutes); the full
recipe lives in the acceptance suite and the `vesselsplat train` CLI.

Run:  python3 demos/04_train_phantom.py
"""

from vesselsplat import TrainConfig, default_phantom, evaluate, generate_dataset, train
from vesselsplat.phantom import assign_splits, orbit_rig

spec = default_phantom(seed=0)
cams, times = orbit_rig(30, width=96, height=96)
dataset = generate_dataset(spec, cams, times, mode="oracle", splits=assign_splits(30, 20))
print(f"{len(dataset.train_frames)} train / {len(dataset.test_frames)} test views")

cfg = TrainConfig(
    total_iterations=3000,
    init_count=3000,
    eval_interval=500,
    checkpoint_interval=10 ** 9,
    seed=0,
    workers=2,
)
cloud, log = train(dataset, cfg, progress=True)

scores = evaluate(cloud, dataset.test_frames, workers=2)
print(f"\nfinal: {cloud.n} splats, held-out psnr {scores['psnr']:.2f} dB, "
      f"ssim {scores['ssim']:.4f}")
events = [r for r in log.records if "event" in r]
print(f"{len(events)} density-control events during training")
