import numpy as np
import pytest

from vesselsplat.cameras import Camera
from vesselsplat.gaussians import GaussianCloud


def make_cloud(seed=0, n=20, table_len=5, dtype=np.float32, *,
               pos_range=0.8, alpha_logit=(-2.5, -0.5), table_range=0.15,
               scale_range=(0.05, 0.25)):
    """Random but well-conditioned test cloud: opacities and overlap bounded so
    compositing stays away from the termination and clamp boundaries (finite
    differences are only meaningful where the renderer is smooth)."""
    rng = np.random.default_rng(seed)
    dtype = np.dtype(dtype)
    return GaussianCloud(
        positions=rng.uniform(-pos_range, pos_range, (n, 3)).astype(dtype),
        rotations=rng.normal(size=(n, 4)).astype(dtype),
        log_scales=rng.uniform(np.log(scale_range[0]), np.log(scale_range[1]), (n, 3)).astype(dtype),
        opacity_logits=rng.uniform(*alpha_logit, n).astype(dtype),
        offset_tables=rng.uniform(-table_range, table_range, (n, table_len)).astype(dtype),
        intensity_logits=rng.uniform(-1.5, 1.5, n).astype(dtype),
    )


def make_camera(width=32, height=32, fx=None, eye=(0.0, 0.0, -4.0), target=(0.0, 0.0, 0.0),
                near=0.1, far=20.0):
    return Camera.look_at(eye=eye, target=target, fx=fx if fx is not None else width * 1.4,
                          width=width, height=height, near=near, far=far)


@pytest.fixture(scope="session")
def phantom_dataset():
    """Small shared phantom dataset (64x64, 12 train / 6 test views)."""
    from vesselsplat.phantom import assign_splits, default_phantom, generate_dataset, orbit_rig

    spec = default_phantom(seed=3)
    cams, times = orbit_rig(18, width=64, height=64)
    return generate_dataset(spec, cams, times, mode="oracle",
                            splits=assign_splits(18, 12))
