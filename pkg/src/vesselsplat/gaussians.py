"""Gaussian scene primitives: raw parameters, activations, covariance, temporal opacity.

Raw parameters are unconstrained reals; activations map them to their valid
ranges (sigmoid for opacity/intensity, exp for scale, renormalization for
rotation quaternions).  Time-dependent opacity is a per-Gaussian table of
offsets at uniform knots t_k = k/(L-1), linearly interpolated and added to
the base opacity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Columnar parameter groups of a cloud, in checkpoint serialization order.
PARAM_GROUPS = (
    "positions",
    "rotations",
    "log_scales",
    "opacity_logits",
    "offset_tables",
    "intensity_logits",
)


def sigmoid(x):
    x = np.asarray(x)
    out = np.empty_like(x, dtype=x.dtype if x.dtype.kind == "f" else np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else out[()]


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p / (1.0 - p)) if p.ndim else float(np.log(p / (1.0 - p)))


def normalize_quaternions(q):
    """Renormalize quaternions (w, x, y, z); zero-norm input is an error."""
    q = np.asarray(q)
    norms = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norms == 0):
        raise ValueError("degenerate rotation: zero quaternion")
    return q / norms


def quaternions_to_matrices(q):
    """Unit quaternions (..., 4) in (w, x, y, z) order to rotation matrices (..., 3, 3)."""
    q = normalize_quaternions(q)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3), dtype=q.dtype)
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def build_covariance(rotation, log_scale):
    """World-space 3x3 covariance from a quaternion and per-axis log standard deviations.

    Sigma = (R S)(R S)^T with S = diag(exp(log_scale)); symmetric PSD by
    construction.  Also works batched on (..., 4) / (..., 3) inputs.
    """
    R = quaternions_to_matrices(np.asarray(rotation))
    s = np.exp(np.asarray(log_scale))
    B = R * s[..., None, :]
    return B @ np.swapaxes(B, -1, -2)


def table_knots(length, dtype=np.float64):
    """Uniform interpolation knots t_k = k/(L-1); a single knot at 0 for L == 1."""
    if length < 1:
        raise ValueError("offset table must have at least one entry")
    if length == 1:
        return np.zeros(1, dtype=dtype)
    d = np.dtype(dtype).type
    return np.array([d(k) / d(length - 1) for k in range(length)], dtype=dtype)


def table_weights(t, length, dtype=np.float64):
    """Interpolation stencil (k0, k1, w0, w1) for time t over L uniform knots.

    Times that equal a knot value bit-exactly in the working dtype snap to
    that knot (k0 == k1, w0 == 1), so knot lookups are exact and their
    gradient touches a single entry.
    """
    d = np.dtype(dtype).type
    t = d(t)
    if not (0.0 <= t <= 1.0):
        raise ValueError(f"time out of range: {t!r} not in [0, 1]")
    if length == 1:
        return 0, 0, d(1), d(0)
    pos = t * d(length - 1)
    k = int(np.rint(float(pos)))
    if 0 <= k <= length - 1 and d(k) / d(length - 1) == t:
        return k, k, d(1), d(0)
    k0 = min(max(int(np.floor(float(pos))), 0), length - 2)
    w1 = pos - d(k0)
    return k0, k0 + 1, d(1) - w1, w1


def interp_table(table, t):
    """Piecewise-linear interpolation of an offset table at t in [0, 1].

    Works on a single table (L,) or a batch (N, L); no extrapolation.
    """
    table = np.asarray(table)
    if table.size == 0:
        raise ValueError("offset table must be nonempty")
    length = table.shape[-1]
    k0, k1, w0, w1 = table_weights(t, length, table.dtype if table.dtype.kind == "f" else np.float64)
    return table[..., k0] * w0 + table[..., k1] * w1


def opacity_at(gaussian, t):
    """Activated opacity at time t: clamp(sigmoid(opacity_logit) + interp(table, t), 0, 1)."""
    base = sigmoid(gaussian.opacity_logit)
    return float(np.clip(base + interp_table(gaussian.offset_table, t), 0.0, 1.0))


def max_opacity(gaussian):
    """Un-clamped peak opacity over knots, sigmoid(opacity_logit) + max(table); pruning criterion."""
    return float(sigmoid(gaussian.opacity_logit) + np.max(gaussian.offset_table))


@dataclass
class Gaussian:
    """One splat's raw parameters (see module docstring for activations)."""

    position: np.ndarray
    rotation: np.ndarray
    log_scale: np.ndarray
    opacity_logit: float
    offset_table: np.ndarray
    intensity_logit: float

    def covariance(self):
        return build_covariance(self.rotation, self.log_scale)

    def opacity_at(self, t):
        return opacity_at(self, t)

    def max_opacity(self):
        return max_opacity(self)


@dataclass
class GaussianCloud:
    """Columnar collection of Gaussians plus optimizer and density-control state.

    All columns share length N; the offset tables share a cloud-wide length L.
    Optimizer moment buffers (``adam``) and densification statistics are
    resized in lockstep with every densify/prune via ``select``/``append``.
    """

    positions: np.ndarray       # (N, 3)
    rotations: np.ndarray       # (N, 4) raw quaternions, (w, x, y, z)
    log_scales: np.ndarray      # (N, 3)
    opacity_logits: np.ndarray  # (N,)
    offset_tables: np.ndarray   # (N, L)
    intensity_logits: np.ndarray  # (N,)
    grad_accum: np.ndarray = None        # (N,) accumulated screen-grad norms
    grad_dir_accum: np.ndarray = None    # (N, 3) accumulated world-space position grads
    grad_count: np.ndarray = None        # (N,) int64
    adam: object = None  # optimizer moment buffers (optimize.AdamState) or None

    def __post_init__(self):
        n = self.positions.shape[0]
        if self.grad_accum is None:
            self.grad_accum = np.zeros(n, dtype=self.dtype)
        if self.grad_dir_accum is None:
            self.grad_dir_accum = np.zeros((n, 3), dtype=self.dtype)
        if self.grad_count is None:
            self.grad_count = np.zeros(n, dtype=np.int64)
        self.validate()

    # -- shape and dtype -------------------------------------------------
    @property
    def n(self) -> int:
        return self.positions.shape[0]

    def __len__(self) -> int:
        return self.n

    @property
    def table_len(self) -> int:
        return self.offset_tables.shape[1]

    @property
    def dtype(self):
        return self.positions.dtype

    def validate(self):
        n = self.n
        shapes = {
            "positions": (n, 3),
            "rotations": (n, 4),
            "log_scales": (n, 3),
            "opacity_logits": (n,),
            "offset_tables": (n, self.offset_tables.shape[1]),
            "intensity_logits": (n,),
        }
        for name, shape in shapes.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"column {name} has shape {arr.shape}, expected {shape}")
        if self.offset_tables.shape[1] < 1:
            raise ValueError("offset table length must be >= 1")
        if self.grad_accum.shape != (n,) or self.grad_count.shape != (n,) or self.grad_dir_accum.shape != (n, 3):
            raise ValueError("densification stats out of lockstep with columns")
        if self.adam is not None:
            self.adam.check_shapes(self)

    # -- activated views -------------------------------------------------
    def opacities(self):
        return sigmoid(self.opacity_logits)

    def intensities(self):
        return sigmoid(self.intensity_logits)

    def scales(self):
        return np.exp(self.log_scales)

    def unit_rotations(self):
        return normalize_quaternions(self.rotations)

    def covariances(self):
        return build_covariance(self.rotations, self.log_scales)

    def alphas_at(self, t):
        """Clamped per-Gaussian opacity at time t, shape (N,)."""
        base = sigmoid(self.opacity_logits)
        k0, k1, w0, w1 = table_weights(t, self.table_len, self.dtype)
        delta = self.offset_tables[:, k0] * w0 + self.offset_tables[:, k1] * w1
        return np.clip(base + delta, self.dtype.type(0), self.dtype.type(1))

    def max_opacities(self):
        return sigmoid(self.opacity_logits) + self.offset_tables.max(axis=1)

    def mean_opacities(self):
        return sigmoid(self.opacity_logits) + self.offset_tables.mean(axis=1)

    def gaussian(self, i) -> Gaussian:
        """Per-splat view (copies) for inspection and tests."""
        return Gaussian(
            position=self.positions[i].copy(),
            rotation=self.rotations[i].copy(),
            log_scale=self.log_scales[i].copy(),
            opacity_logit=float(self.opacity_logits[i]),
            offset_table=self.offset_tables[i].copy(),
            intensity_logit=float(self.intensity_logits[i]),
        )

    # -- structural mutation ----------------------------------------------
    def select(self, keep) -> "GaussianCloud":
        """Compacted copy keeping rows ``keep`` (mask or index array), stable order.

        Optimizer moments and densification stats are carried along row-wise.
        """
        keep = np.asarray(keep)
        if keep.dtype == bool:
            keep = np.flatnonzero(keep)
        return GaussianCloud(
            positions=self.positions[keep].copy(),
            rotations=self.rotations[keep].copy(),
            log_scales=self.log_scales[keep].copy(),
            opacity_logits=self.opacity_logits[keep].copy(),
            offset_tables=self.offset_tables[keep].copy(),
            intensity_logits=self.intensity_logits[keep].copy(),
            grad_accum=self.grad_accum[keep].copy(),
            grad_dir_accum=self.grad_dir_accum[keep].copy(),
            grad_count=self.grad_count[keep].copy(),
            adam=self.adam.select(keep) if self.adam is not None else None,
        )

    def append(self, other: "GaussianCloud") -> "GaussianCloud":
        """Concatenated copy; the new rows get zero-initialized moments and stats."""
        if other.table_len != self.table_len:
            raise ValueError("offset table lengths differ")
        m = other.n
        return GaussianCloud(
            positions=np.concatenate([self.positions, other.positions]),
            rotations=np.concatenate([self.rotations, other.rotations]),
            log_scales=np.concatenate([self.log_scales, other.log_scales]),
            opacity_logits=np.concatenate([self.opacity_logits, other.opacity_logits]),
            offset_tables=np.concatenate([self.offset_tables, other.offset_tables]),
            intensity_logits=np.concatenate([self.intensity_logits, other.intensity_logits]),
            grad_accum=np.concatenate([self.grad_accum, np.zeros(m, dtype=self.dtype)]),
            grad_dir_accum=np.concatenate([self.grad_dir_accum, np.zeros((m, 3), dtype=self.dtype)]),
            grad_count=np.concatenate([self.grad_count, np.zeros(m, dtype=np.int64)]),
            adam=self.adam.append_zeros(m, self) if self.adam is not None else None,
        )

    def reset_densify_stats(self):
        self.grad_accum[:] = 0
        self.grad_dir_accum[:] = 0
        self.grad_count[:] = 0

    def copy(self) -> "GaussianCloud":
        return self.select(np.arange(self.n))

    def astype(self, dtype) -> "GaussianCloud":
        dtype = np.dtype(dtype)
        c = self.copy()
        for name in PARAM_GROUPS + ("grad_accum", "grad_dir_accum"):
            setattr(c, name, getattr(c, name).astype(dtype))
        if c.adam is not None:
            c.adam = c.adam.astype(dtype)
        return c

    @classmethod
    def empty(cls, table_len, dtype=np.float32) -> "GaussianCloud":
        dtype = np.dtype(dtype)
        return cls(
            positions=np.zeros((0, 3), dtype=dtype),
            rotations=np.zeros((0, 4), dtype=dtype),
            log_scales=np.zeros((0, 3), dtype=dtype),
            opacity_logits=np.zeros(0, dtype=dtype),
            offset_tables=np.zeros((0, table_len), dtype=dtype),
            intensity_logits=np.zeros(0, dtype=dtype),
        )
