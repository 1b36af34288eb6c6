"""Tile-binned depth-sorted alpha compositing and its analytic backward pass.

Images are plain row-major float arrays of shape (height, width) with
intensities in [0, 1]; the background renders to 0.  Per pixel, contributors
are composited front to back,

    C = sum_i c_i * sigma_i * prod_{j<i} (1 - sigma_j),
    sigma_i = alpha_i(t) * exp(-0.5 * d^T conic d),  d = pixel - mean_i,

with sigma clamped to SIGMA_MAX and compositing stopping once the running
transmittance falls below TERMINATION.  A splat's footprint ends at its
CUTOFF_SIGMA ellipse (the same surface culling and binning use): beyond it
sigma is zero by definition, which also bounds the work per contributor.
The gradient is zero through both clamps, outside the cutoff, and for
contributors skipped by early termination.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .cameras import CUTOFF_SIGMA, Camera, ProjectedGaussians, _project_cloud, frustum_cull
from .gaussians import GaussianCloud, quaternions_to_matrices, sigmoid, table_weights

TILE_SIZE = 16
TERMINATION = 1e-4
SIGMA_MAX = 0.99
POWER_CUTOFF = -0.5 * CUTOFF_SIGMA ** 2


def _consts(dtype):
    d = np.dtype(dtype).type
    return d(1.0), d(-0.5), d(TERMINATION), d(SIGMA_MAX), d(POWER_CUTOFF)


def _pixel_centers(width, height, dtype):
    d = np.dtype(dtype)
    xs = (np.arange(width, dtype=d) + d.type(0.5)).astype(d)
    ys = (np.arange(height, dtype=d) + d.type(0.5)).astype(d)
    return xs, ys


def _tile_ranges(means, extents, width, height, tile_size):
    """Inclusive tile index ranges covered by each splat's cutoff-ellipse box.

    Integer arithmetic, so any caller computes identical ranges.  Boxes fully
    off-image produce an empty range (max < min).
    """
    ntx = (width + tile_size - 1) // tile_size
    nty = (height + tile_size - 1) // tile_size
    x0 = np.floor((means[:, 0] - extents[:, 0]) / tile_size).astype(np.int64)
    x1 = np.floor((means[:, 0] + extents[:, 0]) / tile_size).astype(np.int64)
    y0 = np.floor((means[:, 1] - extents[:, 1]) / tile_size).astype(np.int64)
    y1 = np.floor((means[:, 1] + extents[:, 1]) / tile_size).astype(np.int64)
    empty = (x1 < 0) | (x0 >= ntx) | (y1 < 0) | (y0 >= nty)
    x0 = np.clip(x0, 0, ntx - 1)
    x1 = np.clip(x1, 0, ntx - 1)
    y0 = np.clip(y0, 0, nty - 1)
    y1 = np.clip(y1, 0, nty - 1)
    x1[empty] = -1
    x0[empty] = 0
    y1[empty] = -1
    y0[empty] = 0
    return x0, x1, y0, y1, ntx, nty


@dataclass
class TileBins:
    """CSR layout of per-tile contributor lists, each sorted by (depth, source)."""

    offsets: np.ndarray  # (ntx*nty + 1,) int64
    items: np.ndarray    # (total,) int64 indices into the projected batch
    ntx: int
    nty: int
    tile_size: int

    @property
    def n_tiles(self):
        return self.ntx * self.nty

    def tile(self, tx, ty):
        i = ty * self.ntx + tx
        return self.items[self.offsets[i]:self.offsets[i + 1]]

    def per_tile(self):
        return [self.items[self.offsets[i]:self.offsets[i + 1]] for i in range(self.n_tiles)]


def bin_and_sort(projected: ProjectedGaussians, width, height, tile_size=TILE_SIZE) -> TileBins:
    """Bin projected splats into tiles their cutoff box touches.

    Each tile's list is sorted by ascending view depth, ties broken by
    ascending source index.
    """
    if tile_size < 1:
        raise ValueError("tile_size must be >= 1")
    order = np.lexsort((projected.source, projected.depths))
    x0, x1, y0, y1, ntx, nty = _tile_ranges(projected.means, projected.extents, width, height, tile_size)
    counts = np.zeros(ntx * nty, dtype=np.int64)
    if len(projected):
        _kernels.count_tiles(order, x0, x1, y0, y1, ntx, counts)
    offsets = np.zeros(ntx * nty + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    items = np.empty(int(offsets[-1]), dtype=np.int64)
    if len(projected):
        cursor = np.zeros(ntx * nty, dtype=np.int64)
        _kernels.fill_tiles(order, x0, x1, y0, y1, ntx, offsets, cursor, items)
    return TileBins(offsets=offsets, items=items, ntx=ntx, nty=nty, tile_size=tile_size)


def composite_pixel(means, conics, alphas, colors, pixel, t=None):
    """Reference front-to-back compositing of one pixel.

    Contributors must already be depth-sorted.  Returns (intensity, final
    transmittance, aux) where aux carries per-contributor sigma, the
    transmittance in front of each contributor, and the number processed
    before early termination.  Arithmetic runs in the arrays' dtype with the
    same operation order as the compiled kernels.
    """
    means = np.atleast_2d(np.asarray(means))
    conics = np.atleast_2d(np.asarray(conics))
    alphas = np.atleast_1d(np.asarray(alphas))
    colors = np.atleast_1d(np.asarray(colors))
    dt = means.dtype if means.size else np.dtype(np.float64)
    one, neg_half, term, smax, pcut = _consts(dt)
    zero = one - one
    px = dt.type(pixel[0])
    py = dt.type(pixel[1])
    n = means.shape[0]
    sigmas = np.zeros(n, dtype=dt)
    t_before = np.ones(n, dtype=dt)
    tcur = one
    cacc = zero
    processed = 0
    for i in range(n):
        if tcur < term:
            break
        processed = i + 1
        dx = px - means[i, 0]
        dy = py - means[i, 1]
        power = neg_half * (conics[i, 0] * dx * dx + conics[i, 2] * dy * dy) - conics[i, 1] * dx * dy
        t_before[i] = tcur
        if power > zero or power < pcut:
            continue
        gval = np.exp(power)
        sigma = alphas[i] * gval
        if sigma > smax:
            sigma = smax
        sigmas[i] = sigma
        contrib = sigma * tcur
        cacc = cacc + colors[i] * contrib
        tcur = tcur * (one - sigma)
    aux = {"sigmas": sigmas, "t_before": t_before, "processed": processed}
    return cacc, tcur, aux


def _prepare(cloud: GaussianCloud, cam: Camera, t):
    alphas = cloud.alphas_at(t)
    proj = frustum_cull(cloud, cam, t)
    return proj, alphas[proj.source], cloud.intensities()[proj.source].astype(cloud.dtype)


def _tile_chunks(n_tiles, workers):
    workers = max(1, int(workers))
    step = (n_tiles + workers - 1) // workers
    return [(lo, min(lo + step, n_tiles)) for lo in range(0, n_tiles, step)]


def render(cloud: GaussianCloud, cam: Camera, t, *, workers=1) -> np.ndarray:
    """Render the cloud at time t: cull, project, bin, and composite every pixel.

    Deterministic and independent of ``workers``: tiles own disjoint pixels
    and each tile's compositing order is fixed by the deterministic sort.
    """
    image = np.zeros((cam.height, cam.width), dtype=cloud.dtype)
    proj, alphas, colors = _prepare(cloud, cam, t)
    if len(proj) == 0:
        return image
    bins = bin_and_sort(proj, cam.width, cam.height)
    xs, ys = _pixel_centers(cam.width, cam.height, cloud.dtype)
    one, neg_half, term, smax, pcut = _consts(cloud.dtype)
    means = np.ascontiguousarray(proj.means)
    conics = np.ascontiguousarray(proj.conics)

    def run(lo, hi):
        _kernels.forward_tiles(lo, hi, bins.ntx, bins.tile_size, cam.height, cam.width,
                               xs, ys, means, conics, alphas, colors,
                               bins.offsets, bins.items, image,
                               one, neg_half, term, smax, pcut)

    chunks = _tile_chunks(bins.n_tiles, workers)
    if len(chunks) == 1:
        run(*chunks[0])
    else:
        with ThreadPoolExecutor(len(chunks)) as ex:
            list(ex.map(lambda c: run(*c), chunks))
    return image


def render_naive(cloud: GaussianCloud, cam: Camera, t) -> np.ndarray:
    """Reference renderer: per pixel, walk a single global depth sort of all
    culled-in splats (no tile binning).  Slow; exists to validate ``render``."""
    image = np.zeros((cam.height, cam.width), dtype=cloud.dtype)
    proj, alphas, colors = _prepare(cloud, cam, t)
    if len(proj) == 0:
        return image
    order = np.lexsort((proj.source, proj.depths))
    x0, x1, y0, y1, _, _ = _tile_ranges(proj.means, proj.extents, cam.width, cam.height, TILE_SIZE)
    xs, ys = _pixel_centers(cam.width, cam.height, cloud.dtype)
    one, neg_half, term, smax, pcut = _consts(cloud.dtype)
    _kernels.forward_naive(cam.height, cam.width, TILE_SIZE,
                           xs, ys, np.ascontiguousarray(proj.means),
                           np.ascontiguousarray(proj.conics), alphas, colors,
                           order, x0, x1, y0, y1, image,
                           one, neg_half, term, smax, pcut)
    return image


@dataclass
class GradientBuffer:
    """Per-Gaussian loss gradients mirroring every cloud column, plus the
    screen-space mean gradient used by density control.

    ``screen_means`` is expressed per half-image unit (pixel gradient times
    width/2 resp. height/2), the unit the densification threshold is
    calibrated in, so thresholds transfer across resolutions."""

    positions: np.ndarray
    rotations: np.ndarray
    log_scales: np.ndarray
    opacity_logits: np.ndarray
    offset_tables: np.ndarray
    intensity_logits: np.ndarray
    screen_means: np.ndarray  # (N, 2)
    visible: np.ndarray       # (M,) cloud indices that survived culling

    @classmethod
    def zeros(cls, cloud: GaussianCloud) -> "GradientBuffer":
        dt = cloud.dtype
        return cls(
            positions=np.zeros((cloud.n, 3), dtype=dt),
            rotations=np.zeros((cloud.n, 4), dtype=dt),
            log_scales=np.zeros((cloud.n, 3), dtype=dt),
            opacity_logits=np.zeros(cloud.n, dtype=dt),
            offset_tables=np.zeros((cloud.n, cloud.table_len), dtype=dt),
            intensity_logits=np.zeros(cloud.n, dtype=dt),
            screen_means=np.zeros((cloud.n, 2), dtype=dt),
            visible=np.zeros(0, dtype=np.int64),
        )


def render_backward(cloud: GaussianCloud, cam: Camera, t, dL_dimage, *, workers=1) -> GradientBuffer:
    """Analytic gradients of sum(dL_dimage * render(cloud, cam, t)) for every
    raw Gaussian parameter.

    Offset-table gradients distribute over the interpolation stencil of t;
    clamped opacities and sigmas propagate zero; contributors skipped by early
    termination receive zero.  Results are independent of ``workers``: each
    (tile, contributor) gradient slot is written by exactly one tile and the
    slots merge in fixed order.
    """
    dL = np.asarray(dL_dimage)
    if dL.shape != (cam.height, cam.width):
        raise ValueError(f"dL_dimage shape {dL.shape} does not match camera ({cam.height}, {cam.width})")
    if not np.all(np.isfinite(dL)):
        raise ValueError("dL_dimage contains non-finite values")
    dL = np.ascontiguousarray(dL, dtype=cloud.dtype)

    buf = GradientBuffer.zeros(cloud)
    proj, alphas, colors = _prepare(cloud, cam, t)
    if len(proj) == 0:
        return buf
    bins = bin_and_sort(proj, cam.width, cam.height)
    xs, ys = _pixel_centers(cam.width, cam.height, cloud.dtype)
    one, neg_half, term, smax, pcut = _consts(cloud.dtype)
    means = np.ascontiguousarray(proj.means)
    conics = np.ascontiguousarray(proj.conics)
    slot_grads = np.zeros((len(bins.items), 7), dtype=cloud.dtype)

    def run(lo, hi):
        _kernels.backward_tiles(lo, hi, bins.ntx, bins.tile_size, cam.height, cam.width,
                                xs, ys, means, conics, alphas, colors,
                                bins.offsets, bins.items, dL, slot_grads,
                                one, neg_half, term, smax, pcut)

    chunks = _tile_chunks(bins.n_tiles, workers)
    if len(chunks) == 1:
        run(*chunks[0])
    else:
        with ThreadPoolExecutor(len(chunks)) as ex:
            list(ex.map(lambda c: run(*c), chunks))

    # Merge slots to per-splat screen gradients in fixed (tile, rank) order.
    g = np.zeros((len(proj), 7), dtype=cloud.dtype)
    for col in range(7):
        g[:, col] = np.bincount(bins.items, weights=slot_grads[:, col].astype(np.float64),
                                minlength=len(proj)).astype(cloud.dtype)
    _backward_chain(cloud, cam, t, proj, g, buf)
    buf.visible = proj.source
    return buf


def _backward_chain(cloud, cam, t, proj, g, buf):
    """Chain screen-space gradients back to raw cloud parameters (vectorized)."""
    src = proj.source
    dt = cloud.dtype
    pr = _project_cloud(cloud, cam)
    g_mean = g[:, 0:2]
    g_conic = g[:, 2:5]
    g_alpha = g[:, 5]
    g_color = g[:, 6]

    # conic = inv(cov2d): dL/dcov2d = -A G_A A with symmetric 2x2 matrices
    A = np.empty((len(src), 2, 2), dtype=dt)
    A[:, 0, 0] = proj.conics[:, 0]
    A[:, 0, 1] = A[:, 1, 0] = proj.conics[:, 1]
    A[:, 1, 1] = proj.conics[:, 2]
    GA = np.empty_like(A)
    GA[:, 0, 0] = g_conic[:, 0]
    GA[:, 0, 1] = GA[:, 1, 0] = g_conic[:, 1] * dt.type(0.5)
    GA[:, 1, 1] = g_conic[:, 2]
    Gs = -np.einsum("nij,njk,nkl->nil", A, GA, A, optimize=True)

    # cov2d = J M3 J^T (+ const): gradients to M3 and to J
    j00, j02, j11, j12 = (arr[src] for arr in pr["j"])
    J = np.zeros((len(src), 2, 3), dtype=dt)
    J[:, 0, 0] = j00
    J[:, 0, 2] = j02
    J[:, 1, 1] = j11
    J[:, 1, 2] = j12
    M3 = pr["M3"][src]
    G_M3 = np.einsum("nji,njk,nkl->nil", J, Gs, J, optimize=True)
    G_J = 2.0 * np.einsum("nij,njk,nkl->nil", Gs, J, M3, optimize=True)

    # J and the projected mean both depend on the camera-space point
    p_cam = pr["p_cam"][src]
    zi = pr["zi"][src]
    x, y = p_cam[:, 0], p_cam[:, 1]
    fx = dt.type(cam.fx)
    fy = dt.type(cam.fy)
    zi2 = zi * zi
    g_pcam = np.empty((len(src), 3), dtype=dt)
    g_pcam[:, 0] = G_J[:, 0, 2] * (-fx * zi2) + g_mean[:, 0] * (fx * zi)
    g_pcam[:, 1] = G_J[:, 1, 2] * (-fy * zi2) + g_mean[:, 1] * (fy * zi)
    g_pcam[:, 2] = (
        G_J[:, 0, 0] * (-fx * zi2)
        + G_J[:, 1, 1] * (-fy * zi2)
        + G_J[:, 0, 2] * (2.0 * fx * x * zi2 * zi)
        + G_J[:, 1, 2] * (2.0 * fy * y * zi2 * zi)
        + g_mean[:, 0] * (-fx * x * zi2)
        + g_mean[:, 1] * (-fy * y * zi2)
    )

    R_w = cam.rotation.astype(dt)
    buf.positions[src] = g_pcam @ R_w
    buf.screen_means[src, 0] = g_mean[:, 0] * dt.type(cam.width * 0.5)
    buf.screen_means[src, 1] = g_mean[:, 1] * dt.type(cam.height * 0.5)

    # M3 = R_w cov3 R_w^T ; cov3 = B B^T ; B = R(q) diag(exp(log_scale))
    G_cov3 = np.einsum("ji,njk,kl->nil", R_w, G_M3, R_w, optimize=True)
    B = pr["B"][src]
    G_B = 2.0 * np.einsum("nij,njk->nik", G_cov3, B)
    Rq = pr["Rq"][src]
    s = pr["s"][src]
    g_s = np.einsum("nij,nij->nj", G_B, Rq)
    buf.log_scales[src] = g_s * s
    G_R = G_B * s[:, None, :]

    # rotation matrix partials w.r.t. the unit quaternion (w, x, y, z)
    qn = pr["quat"][src]
    w_, x_, y_, z_ = qn[:, 0], qn[:, 1], qn[:, 2], qn[:, 3]
    zeros = np.zeros_like(w_)

    def stack3(rows):
        return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)

    dRdq = [
        2.0 * stack3([[zeros, -z_, y_], [z_, zeros, -x_], [-y_, x_, zeros]]),
        2.0 * stack3([[zeros, y_, z_], [y_, -2 * x_, -w_], [z_, w_, -2 * x_]]),
        2.0 * stack3([[-2 * y_, x_, w_], [x_, zeros, z_], [-w_, z_, -2 * y_]]),
        2.0 * stack3([[-2 * z_, -w_, x_], [w_, -2 * z_, y_], [x_, y_, zeros]]),
    ]
    g_qn = np.stack([np.einsum("nij,nij->n", G_R, d) for d in dRdq], axis=1).astype(dt)
    q_raw = cloud.rotations[src]
    norm = np.linalg.norm(q_raw, axis=1, keepdims=True)
    buf.rotations[src] = (g_qn - qn * np.sum(qn * g_qn, axis=1, keepdims=True)) / norm

    # opacity: alpha_t = clamp(base + interp(table, t), 0, 1)
    base = sigmoid(cloud.opacity_logits[src])
    k0, k1, w0, w1 = table_weights(t, cloud.table_len, dt)
    pre = base + cloud.offset_tables[src, k0] * w0 + cloud.offset_tables[src, k1] * w1
    inside = ((pre > 0) & (pre < 1)).astype(dt)
    g_pre = g_alpha * inside
    buf.opacity_logits[src] = g_pre * base * (1 - base)
    buf.offset_tables[src, k0] = g_pre * w0
    buf.offset_tables[src, k1] += g_pre * w1

    color = sigmoid(cloud.intensity_logits[src])
    buf.intensity_logits[src] = g_color * color * (1 - color)
