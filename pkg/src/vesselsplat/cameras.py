"""Pinhole cameras, EWA covariance projection, and frustum culling.

Conventions: world-to-camera rigid transform p_cam = R @ p + t with the
camera looking down +z; pixel coordinates u = fx * x/z + cx, v = fy * y/z + cy
with pixel centers at integer + 0.5.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gaussians import GaussianCloud, build_covariance, table_weights

# Low-pass dilation added to every projected covariance (px^2); keeps the
# screen-space covariance invertible and splats at least ~1 px across.
LOWPASS = 0.3

# Screen-extent cutoff in projected standard deviations used for culling and
# tile binning.  sqrt(2 ln 255) ~ 3.33 is where a unit-peak Gaussian falls
# below 1/255, so 3.5 keeps every splat that could contribute visibly.
CUTOFF_SIGMA = 3.5


@dataclass(frozen=True)
class Camera:
    """Pinhole intrinsics plus a world-to-camera rigid pose."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray    # (3, 3) world-to-camera
    translation: np.ndarray  # (3,)
    near: float = 0.01
    far: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64).reshape(3, 3))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3))
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.near < self.far):
            raise ValueError("require 0 < near < far")
        err = np.abs(self.rotation @ self.rotation.T - np.eye(3)).max()
        if err > 1e-6:
            raise ValueError(f"pose rotation is not orthonormal (max deviation {err:.2e})")

    # -- constructors ----------------------------------------------------
    @classmethod
    def look_at(cls, eye, target, up=(0.0, 1.0, 0.0), *, fx, fy=None, width, height,
                cx=None, cy=None, near=0.01, far=100.0) -> "Camera":
        eye = np.asarray(eye, dtype=np.float64)
        target = np.asarray(target, dtype=np.float64)
        forward = target - eye
        norm = np.linalg.norm(forward)
        if norm == 0:
            raise ValueError("eye and target coincide")
        forward /= norm
        upv = np.asarray(up, dtype=np.float64)
        right = np.cross(forward, upv)
        rn = np.linalg.norm(right)
        if rn < 1e-12:
            upv = np.array([0.0, 0.0, 1.0]) if abs(forward[1]) > 0.9 else np.array([0.0, 1.0, 0.0])
            right = np.cross(forward, upv)
            rn = np.linalg.norm(right)
        right /= rn
        down = np.cross(forward, right)
        R = np.stack([right, down, forward])  # rows: camera axes in world coords
        t = -R @ eye
        return cls(fx=fx, fy=fy if fy is not None else fx,
                   cx=width / 2.0 if cx is None else cx,
                   cy=height / 2.0 if cy is None else cy,
                   width=width, height=height, rotation=R, translation=t,
                   near=near, far=far)

    @classmethod
    def orbit(cls, azimuth_deg, elevation_deg, radius, target=(0.0, 0.0, 0.0), **kwargs) -> "Camera":
        """Camera on a sphere around ``target``, looking at it."""
        if radius <= 0:
            raise ValueError("orbit radius must be positive")
        az = np.deg2rad(azimuth_deg)
        el = np.deg2rad(elevation_deg)
        target = np.asarray(target, dtype=np.float64)
        offset = radius * np.array([np.cos(el) * np.sin(az), np.sin(el), np.cos(el) * np.cos(az)])
        return cls.look_at(target + offset, target, **kwargs)

    # -- serialization ---------------------------------------------------
    def to_record(self) -> dict:
        return {
            "fx": float(self.fx), "fy": float(self.fy),
            "cx": float(self.cx), "cy": float(self.cy),
            "width": int(self.width), "height": int(self.height),
            "rotation": [float(v) for v in self.rotation.reshape(-1)],
            "translation": [float(v) for v in self.translation],
            "near": float(self.near), "far": float(self.far),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Camera":
        return cls(fx=rec["fx"], fy=rec["fy"], cx=rec["cx"], cy=rec["cy"],
                   width=int(rec["width"]), height=int(rec["height"]),
                   rotation=np.asarray(rec["rotation"], dtype=np.float64).reshape(3, 3),
                   translation=np.asarray(rec["translation"], dtype=np.float64),
                   near=rec["near"], far=rec["far"])

    def resized(self, width, height) -> "Camera":
        """Same field of view at a different resolution."""
        sx, sy = width / self.width, height / self.height
        return Camera(fx=self.fx * sx, fy=self.fy * sy, cx=self.cx * sx, cy=self.cy * sy,
                      width=width, height=height, rotation=self.rotation,
                      translation=self.translation, near=self.near, far=self.far)


def world_to_camera(cam: Camera, points):
    """Apply the rigid world-to-camera transform to one point (3,) or many (N, 3)."""
    p = np.asarray(points)
    if p.ndim == 1:
        return cam.rotation.astype(p.dtype) @ p + cam.translation.astype(p.dtype)
    return p @ cam.rotation.T.astype(p.dtype) + cam.translation.astype(p.dtype)


def ewa_jacobian(cam: Camera, p_cam):
    """Jacobian (2, 3) of the pixel projection at a camera-space point."""
    x, y, z = (float(v) for v in np.asarray(p_cam).reshape(3))
    if abs(z) < 1e-8:
        raise ValueError("degenerate depth: |z| < 1e-8")
    return np.array([
        [cam.fx / z, 0.0, -cam.fx * x / (z * z)],
        [0.0, cam.fy / z, -cam.fy * y / (z * z)],
    ])


def project_covariance(cov3, cam: Camera, p_cam):
    """EWA projection of a world covariance to a dilated 2x2 screen covariance.

    Sigma' = J R_w Sigma R_w^T J^T + LOWPASS * I  (symmetric positive definite).
    """
    J = ewa_jacobian(cam, p_cam)
    M = cam.rotation @ np.asarray(cov3, dtype=np.float64) @ cam.rotation.T
    out = J @ M @ J.T + LOWPASS * np.eye(2)
    return 0.5 * (out + out.T)


@dataclass
class ProjectedGaussians:
    """Culled-in splats in screen space, ordered by ascending source index.

    ``covs`` and ``conics`` pack symmetric 2x2 matrices as (a, b, c) for
    [[a, b], [b, c]]; ``conics`` is the inverse of ``covs``.  ``extents`` are
    the per-axis half-widths of the cutoff ellipse's bounding box,
    CUTOFF_SIGMA * sqrt(diag(cov)); ``radii`` the isotropic bound
    CUTOFF_SIGMA * max screen std.
    """

    means: np.ndarray    # (M, 2) pixels
    covs: np.ndarray     # (M, 3) dilated screen covariance
    conics: np.ndarray   # (M, 3)
    depths: np.ndarray   # (M,) camera-space z
    radii: np.ndarray    # (M,)
    extents: np.ndarray  # (M, 2) pixels
    source: np.ndarray   # (M,) int64 indices into the cloud

    def __len__(self):
        return self.means.shape[0]


def _project_cloud(cloud: GaussianCloud, cam: Camera):
    """Vectorized projection of every Gaussian; returns screen quantities plus
    the intermediates the backward pass reuses."""
    dt = cloud.dtype
    R_w = cam.rotation.astype(dt)
    t_w = cam.translation.astype(dt)
    p_cam = cloud.positions @ R_w.T + t_w
    x, y, z = p_cam[:, 0], p_cam[:, 1], p_cam[:, 2]

    quat = cloud.unit_rotations()
    from .gaussians import quaternions_to_matrices

    Rq = quaternions_to_matrices(quat)
    s = np.exp(cloud.log_scales)
    B = Rq * s[:, None, :]
    cov3 = B @ np.swapaxes(B, 1, 2)
    M3 = np.einsum("ij,njk,lk->nil", R_w, cov3, R_w, optimize=True)

    fx = dt.type(cam.fx)
    fy = dt.type(cam.fy)
    with np.errstate(divide="ignore", invalid="ignore"):
        zi = np.where(z != 0, 1.0 / z, 0.0).astype(dt)
    # J rows: [fx/z, 0, -fx*x/z^2], [0, fy/z, -fy*y/z^2]
    j00 = fx * zi
    j02 = -fx * x * zi * zi
    j11 = fy * zi
    j12 = -fy * y * zi * zi

    # cov2d = J M3 J^T, expanded for the sparse J structure
    m00, m01, m02 = M3[:, 0, 0], M3[:, 0, 1], M3[:, 0, 2]
    m11, m12, m22 = M3[:, 1, 1], M3[:, 1, 2], M3[:, 2, 2]
    a = j00 * (j00 * m00 + j02 * m02) + j02 * (j00 * m02 + j02 * m22) + dt.type(LOWPASS)
    b = j11 * (j00 * m01 + j02 * m12) + j12 * (j00 * m02 + j02 * m22)
    c = j11 * (j11 * m11 + j12 * m12) + j12 * (j11 * m12 + j12 * m22) + dt.type(LOWPASS)

    means = np.stack([fx * x * zi + dt.type(cam.cx), fy * y * zi + dt.type(cam.cy)], axis=1)

    det = a * c - b * b
    mid = (a + c) * dt.type(0.5)
    lam_max = mid + np.sqrt(np.maximum(mid * mid - det, 0))
    radii = dt.type(CUTOFF_SIGMA) * np.sqrt(np.maximum(lam_max, 0))

    return {
        "p_cam": p_cam, "means": means, "cov2d": np.stack([a, b, c], axis=1),
        "det": det, "radii": radii, "M3": M3, "cov3": cov3, "B": B, "Rq": Rq,
        "s": s, "quat": quat, "j": (j00, j02, j11, j12), "zi": zi,
    }


def frustum_cull(cloud: GaussianCloud, cam: Camera, t) -> ProjectedGaussians:
    """Project all Gaussians and keep those with depth in (near, far) whose screen
    mean lies inside the image rectangle expanded by CUTOFF_SIGMA screen stds.

    ``t`` is validated against [0, 1] but does not affect visibility (opacity
    plays no part in culling).  Output is ordered by ascending source index.
    """
    table_weights(t, cloud.table_len, cloud.dtype)  # range check only
    pr = _project_cloud(cloud, cam)
    z = pr["p_cam"][:, 2]
    mx, my = pr["means"][:, 0], pr["means"][:, 1]
    cov2d = pr["cov2d"]
    cut = cloud.dtype.type(CUTOFF_SIGMA)
    ex = cut * np.sqrt(np.maximum(cov2d[:, 0], 0))
    ey = cut * np.sqrt(np.maximum(cov2d[:, 2], 0))
    keep = (
        (z > cloud.dtype.type(cam.near)) & (z < cloud.dtype.type(cam.far))
        & (mx >= -ex) & (mx <= cloud.dtype.type(cam.width) + ex)
        & (my >= -ey) & (my <= cloud.dtype.type(cam.height) + ey)
    )
    idx = np.flatnonzero(keep)
    covs = cov2d[idx]
    det = pr["det"][idx]
    if np.any(det <= 0):
        raise AssertionError("singular screen covariance despite low-pass dilation")
    inv = np.empty_like(covs)
    inv[:, 0] = covs[:, 2] / det
    inv[:, 1] = -covs[:, 1] / det
    inv[:, 2] = covs[:, 0] / det
    return ProjectedGaussians(
        means=pr["means"][idx],
        covs=covs,
        conics=inv,
        depths=z[idx],
        radii=pr["radii"][idx],
        extents=np.stack([ex[idx], ey[idx]], axis=1),
        source=idx.astype(np.int64),
    )
