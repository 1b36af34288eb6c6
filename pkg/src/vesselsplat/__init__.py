"""Differentiable Gaussian splatting for time-resolved (4D) angiography.

Scenes are clouds of anisotropic 3D Gaussians whose only temporal degree of
freedom is opacity: each splat carries a table of opacity offsets at uniform
time knots, linearly interpolated and added to its base opacity.  The package
provides the forward/backward tile rasterizer, training losses and recipe,
adaptive density control, a synthetic vessel phantom with exact ground truth,
and a frame-streaming server for interactive viewing.
"""

from .cameras import Camera, ProjectedGaussians, ewa_jacobian, frustum_cull, project_covariance, world_to_camera
from .checkpoint import load_checkpoint, save_checkpoint
from .datasets import Dataset, Frame, load_dataset, save_dataset
from .gaussians import (Gaussian, GaussianCloud, build_covariance, interp_table,
                        max_opacity, opacity_at, table_knots)
from .losses import LossWeights, psnr, recon_loss, smooth_loss, ssim, total_loss
from .optimize import (AdamState, DensityConfig, OptimizerConfig, accumulate_densify_stats,
                       adam_step, densify, prune_opacity, prune_random)
from .phantom import PhantomSpec, build_oracle, default_phantom, gamma_variate, generate_dataset
from .rasterizer import GradientBuffer, bin_and_sort, composite_pixel, render, render_backward, render_naive
from .server import FrameClient, FrameServer, serve_frames
from .training import TrainConfig, evaluate, init_random_cloud, train

__version__ = "0.1.0"

__all__ = [
    "Camera", "ProjectedGaussians", "ewa_jacobian", "frustum_cull", "project_covariance",
    "world_to_camera", "load_checkpoint", "save_checkpoint", "Dataset", "Frame",
    "load_dataset", "save_dataset", "Gaussian", "GaussianCloud", "build_covariance",
    "interp_table", "max_opacity", "opacity_at", "table_knots", "LossWeights", "psnr",
    "recon_loss", "smooth_loss", "ssim", "total_loss", "AdamState", "DensityConfig",
    "OptimizerConfig", "accumulate_densify_stats", "adam_step", "densify", "prune_opacity",
    "prune_random", "PhantomSpec", "build_oracle", "default_phantom", "gamma_variate",
    "generate_dataset", "GradientBuffer", "bin_and_sort", "composite_pixel", "render",
    "render_backward", "render_naive", "FrameClient", "FrameServer", "serve_frames",
    "TrainConfig", "evaluate", "init_random_cloud", "train",
]
