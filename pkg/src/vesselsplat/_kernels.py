"""Compiled per-pixel kernels for the tile rasterizer and its naive reference.

Every kernel is dtype-generic (numba specializes on the array dtypes) and the
floating-point constants arrive as pre-cast scalar arguments so f32 and f64
modes run the exact arithmetic they advertise.

The forward compositing statements in ``forward_tiles`` and ``forward_naive``
are mirrored operation-for-operation: per pixel, both walk the same
depth-sorted contributor subsequence and perform the identical IEEE ops, so
the two renderers agree bit-for-bit.  Do not "simplify" one without the other.
"""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def forward_tiles(tile_lo, tile_hi, ntx, tile_size, height, width,
                  xs, ys, means, conics, alphas, colors,
                  offsets, items, image,
                  one, neg_half, term, smax, pcut):
    # Contributor-outer sweep with per-row cutoff-ellipse spans.  Per pixel the
    # operation sequence is exactly the pixel-outer/naive one (same contributor
    # order, same tests, same arithmetic): the span merely skips pixels the
    # `power < pcut` test would reject, so results stay bit-identical.
    zero = one - one
    tbuf = np.empty(tile_size * tile_size, dtype=image.dtype)
    cbuf = np.empty(tile_size * tile_size, dtype=image.dtype)
    for tile in range(tile_lo, tile_hi):
        k0 = offsets[tile]
        k1 = offsets[tile + 1]
        ty0 = (tile // ntx) * tile_size
        tx0 = (tile % ntx) * tile_size
        py1 = min(ty0 + tile_size, height)
        px1 = min(tx0 + tile_size, width)
        nx = px1 - tx0
        npx = (py1 - ty0) * nx
        if k0 == k1:
            for py in range(ty0, py1):
                for px in range(tx0, px1):
                    image[py, px] = zero
            continue
        for i in range(npx):
            tbuf[i] = one
            cbuf[i] = zero
        alive = npx
        for idx in range(k0, k1):
            if alive == 0:
                break
            g = items[idx]
            mx = means[g, 0]
            my = means[g, 1]
            ca = conics[g, 0]
            cb = conics[g, 1]
            cc = conics[g, 2]
            al = alphas[g]
            col = colors[g]
            for py in range(ty0, py1):
                dy = ys[py] - my
                # dx range where power >= pcut: roots of
                # 0.5*ca*dx^2 + cb*dy*dx + (0.5*cc*dy^2 + pcut) <= 0
                bterm = cb * dy
                disc = bterm * bterm - ca * (cc * dy * dy + pcut + pcut)
                if disc <= zero:
                    continue
                sq = np.sqrt(disc)
                x_lo = mx + (-bterm - sq) / ca
                x_hi = mx + (-bterm + sq) / ca
                pa = max(int(np.floor(x_lo)) - 1, tx0)
                pb = min(int(np.ceil(x_hi)) + 1, px1 - 1)
                row = (py - ty0) * nx - tx0
                for px in range(pa, pb + 1):
                    tcur = tbuf[row + px]
                    if tcur < term:
                        continue
                    dx = xs[px] - mx
                    power = neg_half * (ca * dx * dx + cc * dy * dy) - cb * dx * dy
                    if power > zero or power < pcut:
                        continue
                    gval = np.exp(power)
                    sigma = al * gval
                    if sigma > smax:
                        sigma = smax
                    contrib = sigma * tcur
                    cbuf[row + px] = cbuf[row + px] + col * contrib
                    tnew = tcur * (one - sigma)
                    tbuf[row + px] = tnew
                    if tnew < term:
                        alive -= 1
        i = 0
        for py in range(ty0, py1):
            for px in range(tx0, px1):
                image[py, px] = cbuf[i]
                i += 1


@njit(cache=True, nogil=True)
def forward_naive(height, width, tile_size,
                  xs, ys, means, conics, alphas, colors,
                  order, txmin, txmax, tymin, tymax, image,
                  one, neg_half, term, smax, pcut):
    # Full-sort reference: every pixel walks the global depth order and keeps
    # the contributors whose tile range covers its tile.
    zero = one - one
    n = order.shape[0]
    for py in range(height):
        fy = ys[py]
        ty = py // tile_size
        for px in range(width):
            fx = xs[px]
            tx = px // tile_size
            tcur = one
            cacc = zero
            for oi in range(n):
                if tcur < term:
                    break
                g = order[oi]
                if tx < txmin[g] or tx > txmax[g] or ty < tymin[g] or ty > tymax[g]:
                    continue
                dx = fx - means[g, 0]
                dy = fy - means[g, 1]
                power = neg_half * (conics[g, 0] * dx * dx + conics[g, 2] * dy * dy) - conics[g, 1] * dx * dy
                if power > zero or power < pcut:
                    continue
                gval = np.exp(power)
                sigma = alphas[g] * gval
                if sigma > smax:
                    sigma = smax
                contrib = sigma * tcur
                cacc = cacc + colors[g] * contrib
                tcur = tcur * (one - sigma)
            image[py, px] = cacc


@njit(cache=True, nogil=True)
def backward_tiles(tile_lo, tile_hi, ntx, tile_size, height, width,
                   xs, ys, means, conics, alphas, colors,
                   offsets, items, dL, grads,
                   one, neg_half, term, smax, pcut):
    """Accumulate per-(tile, contributor) screen-space gradients.

    ``grads`` has one row per entry of ``items`` with columns
    (d mean_x, d mean_y, d conic_a, d conic_b, d conic_c, d alpha, d color).
    Two contributor-outer sweeps per tile (same row spans as the forward): a
    replay recording each pixel's final transmittance and stop index, then a
    back-to-front sweep recovering the running transmittance by division
    (sigma is clamped at ``smax``, so the divisor stays >= 1 - smax) while a
    per-pixel suffix sum supplies the occlusion term.
    """
    zero = one - one
    npx_max = tile_size * tile_size
    tbuf = np.empty(npx_max, dtype=dL.dtype)     # running, then final transmittance
    sbuf = np.empty(npx_max, dtype=dL.dtype)     # suffix sums in the reverse sweep
    nend = np.empty(npx_max, dtype=np.int64)     # exclusive stop index per pixel
    for tile in range(tile_lo, tile_hi):
        k0 = offsets[tile]
        k1 = offsets[tile + 1]
        if k0 == k1:
            continue
        ty0 = (tile // ntx) * tile_size
        tx0 = (tile % ntx) * tile_size
        py1 = min(ty0 + tile_size, height)
        px1 = min(tx0 + tile_size, width)
        nx = px1 - tx0
        alive = 0
        for py in range(ty0, py1):
            for px in range(tx0, px1):
                i = (py - ty0) * nx + (px - tx0)
                tbuf[i] = one
                sbuf[i] = zero
                if dL[py, px] == zero:
                    nend[i] = k0  # nothing to do for this pixel
                else:
                    nend[i] = k1
                    alive += 1

        # replay: final transmittance and stop index per contributing pixel
        max_nend = k0
        for idx in range(k0, k1):
            if alive == 0:
                break
            g = items[idx]
            mx = means[g, 0]
            my = means[g, 1]
            ca = conics[g, 0]
            cb = conics[g, 1]
            cc = conics[g, 2]
            al = alphas[g]
            for py in range(ty0, py1):
                dy = ys[py] - my
                bterm = cb * dy
                disc = bterm * bterm - ca * (cc * dy * dy + pcut + pcut)
                if disc <= zero:
                    continue
                sq = np.sqrt(disc)
                pa = max(int(np.floor(mx + (-bterm - sq) / ca)) - 1, tx0)
                pb = min(int(np.ceil(mx + (-bterm + sq) / ca)) + 1, px1 - 1)
                row = (py - ty0) * nx - tx0
                for px in range(pa, pb + 1):
                    i = row + px
                    if nend[i] != k1:
                        continue  # inactive pixel or already terminated
                    tcur = tbuf[i]
                    if tcur < term:
                        nend[i] = idx
                        alive -= 1
                        continue
                    dx = xs[px] - mx
                    power = neg_half * (ca * dx * dx + cc * dy * dy) - cb * dx * dy
                    if power > zero or power < pcut:
                        continue
                    gval = np.exp(power)
                    sigma = al * gval
                    if sigma > smax:
                        sigma = smax
                    tbuf[i] = tcur * (one - sigma)

        # back-to-front over contributors; nothing past the deepest stop index
        # received a contribution, so the sweep starts there
        npx = (py1 - ty0) * nx
        for i in range(npx):
            if nend[i] > max_nend:
                max_nend = nend[i]
        for idx in range(max_nend - 1, k0 - 1, -1):
            g = items[idx]
            mx = means[g, 0]
            my = means[g, 1]
            ca = conics[g, 0]
            cb = conics[g, 1]
            cc = conics[g, 2]
            al = alphas[g]
            col = colors[g]
            for py in range(ty0, py1):
                dy = ys[py] - my
                bterm = cb * dy
                disc = bterm * bterm - ca * (cc * dy * dy + pcut + pcut)
                if disc <= zero:
                    continue
                sq = np.sqrt(disc)
                pa = max(int(np.floor(mx + (-bterm - sq) / ca)) - 1, tx0)
                pb = min(int(np.ceil(mx + (-bterm + sq) / ca)) + 1, px1 - 1)
                row = (py - ty0) * nx - tx0
                for px in range(pa, pb + 1):
                    i = row + px
                    if idx >= nend[i]:
                        continue  # skipped by early termination (or inactive)
                    dx = xs[px] - mx
                    power = neg_half * (ca * dx * dx + cc * dy * dy) - cb * dx * dy
                    if power > zero or power < pcut:
                        continue
                    w = dL[py, px]
                    gval = np.exp(power)
                    sigma_raw = al * gval
                    clamped = sigma_raw > smax
                    sigma = smax if clamped else sigma_raw
                    inv = one / (one - sigma)
                    t_before = tbuf[i] * inv
                    d_c_d_sigma = col * t_before - sbuf[i] * inv
                    grads[idx, 6] += w * (sigma * t_before)
                    if not clamped:
                        gs = w * d_c_d_sigma
                        grads[idx, 5] += gs * gval
                        gp = gs * al * gval
                        grads[idx, 2] += gp * (neg_half * (dx * dx))
                        grads[idx, 3] += gp * (-(dx * dy))
                        grads[idx, 4] += gp * (neg_half * (dy * dy))
                        grads[idx, 0] += gp * (ca * dx + cb * dy)
                        grads[idx, 1] += gp * (cb * dx + cc * dy)
                    sbuf[i] = sbuf[i] + col * (sigma * t_before)
                    tbuf[i] = t_before


@njit(cache=True)
def count_tiles(order, txmin, txmax, tymin, tymax, ntx, counts):
    for oi in range(order.shape[0]):
        g = order[oi]
        for ty in range(tymin[g], tymax[g] + 1):
            base = ty * ntx
            for tx in range(txmin[g], txmax[g] + 1):
                counts[base + tx] += 1


@njit(cache=True)
def fill_tiles(order, txmin, txmax, tymin, tymax, ntx, offsets, cursor, items):
    # Visiting in global (depth, index) order keeps every per-tile list sorted.
    for oi in range(order.shape[0]):
        g = order[oi]
        for ty in range(tymin[g], tymax[g] + 1):
            base = ty * ntx
            for tx in range(txmin[g], txmax[g] + 1):
                tile = base + tx
                items[offsets[tile] + cursor[tile]] = g
                cursor[tile] += 1
