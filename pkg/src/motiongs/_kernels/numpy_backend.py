"""Pure-numpy rasterization kernels (fallback when the compiled extension is
unavailable). Vectorized over pixels within each tile; splat traversal is
sequential front-to-back, matching the compiled kernel's semantics:

- per-splat weight w = min(alpha * g, W_CAP), dropped below W_MIN
- early termination once transmittance falls below T_EPS
- background composited under the residual transmittance
"""

from __future__ import annotations

import math

import numpy as np

T_EPS = 1e-4
W_MIN = 1e-5
W_CAP = 0.99

BACKEND_NAME = "numpy"

# libm exp, applied elementwise: np.exp may differ from the compiled kernel's
# exp in the last ulp, and the forward pass is kept bit-identical across
# backends so renders are reproducible regardless of which one is active
_exp = np.frompyfunc(math.exp, 1, 1)


def _exp_f64(x):
    return _exp(x).astype(np.float64)


def _tile_pixels(tx, ty, tile, h, w):
    y0, x0 = ty * tile, tx * tile
    ys = np.arange(y0, min(y0 + tile, h))
    xs = np.arange(x0, min(x0 + tile, w))
    px, py = np.meshgrid(xs, ys)
    return px.ravel().astype(np.float64), py.ravel().astype(np.float64), ys, xs


def _weights(mean2d, cov2d, alpha, px, py):
    """(K, P) clamped splat weights at the given pixel centers."""
    a, b, c = cov2d[:, 0:1], cov2d[:, 1:2], cov2d[:, 2:3]
    det = a * c - b * b
    ca, cb, cc = c / det, b / det, a / det   # per-splat conic, as in the
    dx = px[None, :] - mean2d[:, 0:1]        # compiled kernel
    dy = py[None, :] - mean2d[:, 1:2]
    power = -0.5 * (ca * dx * dx - 2.0 * cb * dx * dy + cc * dy * dy)
    g = np.exp(np.minimum(power, 0.0))
    w = np.minimum(alpha[:, None] * g, W_CAP)
    w[w < W_MIN] = 0.0
    return w, g, dx, dy, det


def forward(mean2d, cov2d, rgb, alpha, background, h, w,
            tile_ids, tile_offsets, tile_size):
    """Composite depth-sorted splats; returns (img, alpha_map).

    Vectorized over pixels but sequential over splats, so every per-pixel
    accumulation happens in the same order (and with the same exp) as in the
    compiled kernel: the two backends produce bit-identical images.
    """
    img = np.zeros((h, w, 3))
    alpha_map = np.zeros((h, w))
    ntx = (w + tile_size - 1) // tile_size
    nty = (h + tile_size - 1) // tile_size
    for ty in range(nty):
        for tx in range(ntx):
            t = ty * ntx + tx
            ids = tile_ids[tile_offsets[t]:tile_offsets[t + 1]]
            px, py, ys, xs = _tile_pixels(tx, ty, tile_size, h, w)
            if len(ids) == 0:
                img[np.ix_(ys, xs)] = background
                continue
            m, cv, al = mean2d[ids], cov2d[ids], alpha[ids]
            a, b, c = cv[:, 0:1], cv[:, 1:2], cv[:, 2:3]
            det = a * c - b * b
            ca, cb, cc = c / det, b / det, a / det
            dx = px[None, :] - m[:, 0:1]
            dy = py[None, :] - m[:, 1:2]
            power = -0.5 * (ca * dx * dx - 2.0 * cb * dx * dy + cc * dy * dy)
            p = len(px)
            T = np.ones(p)
            acc = np.zeros((p, 3))
            amap = np.zeros(p)
            for i in range(len(ids)):
                wgt = np.minimum(al[i] * _exp_f64(np.minimum(power[i], 0.0)), W_CAP)
                weff = np.where((wgt >= W_MIN) & (T >= T_EPS), wgt, 0.0)
                wt = weff * T
                acc += wt[:, None] * rgb[ids[i]][None, :]
                amap += wt
                T = T * (1.0 - weff)
            tile_img = acc + T[:, None] * background[None, :]
            img[np.ix_(ys, xs)] = tile_img.reshape(len(ys), len(xs), 3)
            alpha_map[np.ix_(ys, xs)] = amap.reshape(len(ys), len(xs))
    return img, alpha_map


def backward(mean2d, cov2d, rgb, alpha, background, h, w,
             tile_ids, tile_offsets, tile_size, grad_img, grad_alpha):
    """Analytic gradients of the compositing expression."""
    gmean = np.zeros_like(mean2d)
    gcov = np.zeros_like(cov2d)
    grgb = np.zeros_like(rgb)
    galpha = np.zeros_like(alpha)
    ntx = (w + tile_size - 1) // tile_size
    nty = (h + tile_size - 1) // tile_size
    for ty in range(nty):
        for tx in range(ntx):
            t = ty * ntx + tx
            ids = tile_ids[tile_offsets[t]:tile_offsets[t + 1]]
            if len(ids) == 0:
                continue
            px, py, ys, xs = _tile_pixels(tx, ty, tile_size, h, w)
            m, cv, al = mean2d[ids], cov2d[ids], alpha[ids]
            wmat, g, dx, dy, det = _weights(m, cv, al, px, py)
            k, p = wmat.shape
            t_before = np.cumprod(np.vstack([np.ones(p), 1.0 - wmat[:-1]]), axis=0)
            live = t_before >= T_EPS
            weff = wmat * live
            gi = grad_img[np.ix_(ys, xs)].reshape(p, 3)
            ga = grad_alpha[np.ix_(ys, xs)].reshape(p)
            # suffix "behind" accumulators: color and alpha-channel variants
            s_col = np.broadcast_to(background, (p, 3)).copy()
            s_alp = np.zeros(p)
            dldw = np.zeros((k, p))
            for i in range(k - 1, -1, -1):
                wi = weff[i][:, None]
                dldw[i] = (gi * (rgb[ids[i]][None, :] - s_col)).sum(axis=1) \
                    + ga * (1.0 - s_alp)
                dldw[i] *= t_before[i]
                s_col = wi * rgb[ids[i]][None, :] + (1.0 - wi) * s_col
                s_alp = weff[i] + (1.0 - weff[i]) * s_alp
            dldw *= live
            # rgb gradient
            wt = weff * t_before
            np.add.at(grgb, ids, wt @ gi)
            # through the clamp: w = min(alpha * g, W_CAP); dead where clamped/dropped
            active = (wmat > 0.0) & (wmat < W_CAP)
            dldag = dldw * active
            np.add.at(galpha, ids, (dldag * g).sum(axis=1))
            dldg = dldag * al[:, None]
            dldpow = dldg * g
            a, b, c = cv[:, 0:1], cv[:, 1:2], cv[:, 2:3]
            con_a, con_b, con_c = c / det, -b / det, a / det
            np.add.at(gmean, ids, np.stack([
                (dldpow * (con_a * dx + con_b * dy)).sum(axis=1),
                (dldpow * (con_b * dx + con_c * dy)).sum(axis=1),
            ], axis=1))
            u = c * dx * dx - 2.0 * b * dx * dy + a * dy * dy
            dpow_da = -0.5 * (dy * dy * det - u * c) / (det * det)
            dpow_db = -0.5 * (-2.0 * dx * dy * det - u * (-2.0 * b)) / (det * det)
            dpow_dc = -0.5 * (dx * dx * det - u * a) / (det * det)
            np.add.at(gcov, ids, np.stack([
                (dldpow * dpow_da).sum(axis=1),
                (dldpow * dpow_db).sum(axis=1),
                (dldpow * dpow_dc).sum(axis=1),
            ], axis=1))
    return gmean, gcov, grgb, galpha
