"""Differentiable splatting: perspective projection of 3D Gaussians (EWA
Jacobian conjugation) and tile-based alpha compositing.

Projection runs on the tape; the per-pixel compositing loop is a custom op
backed by the compiled kernel (or its numpy twin).
"""

from __future__ import annotations

import numpy as np

from . import _kernels
from . import autodiff as ad
from .autodiff import Tensor
from .gaussians import GaussianCloud, build_covariance

TILE_SIZE = 16
COV_DILATION = 0.3


def project(positions: Tensor, cov: Tensor, cam, dilation=COV_DILATION):
    """Project observation-space Gaussians to screen space.

    Returns a dict with tape tensors `mean2d` (N,2) and `cov2d` (N,3 packed
    a,b,c including dilation), plus numpy `depth`, `radius`, and the `valid`
    cull mask (in front of near plane, 3-sigma footprint touching the image).
    """
    R = Tensor(cam.rotation)
    t = Tensor(cam.translation)
    x_cam = positions @ R.swapaxes(0, 1) + t          # (N, 3)
    x, y, z = x_cam[:, 0], x_cam[:, 1], x_cam[:, 2]
    zs = z.data
    safe = np.where(np.abs(zs) > 1e-9, 1.0, np.inf)  # culled rows; keep math finite
    zg = ad.where(np.abs(zs) > 1e-9, z, Tensor(np.ones_like(zs)))
    u = x / zg * cam.fx + cam.cx
    v = y / zg * cam.fy + cam.cy
    mean2d = ad.stack([u, v], axis=-1)

    inv_z = 1.0 / zg
    zero = Tensor(np.zeros_like(zs))
    j_row0 = ad.stack([inv_z * cam.fx, zero, x * inv_z * inv_z * (-cam.fx)], axis=-1)
    j_row1 = ad.stack([zero, inv_z * cam.fy, y * inv_z * inv_z * (-cam.fy)], axis=-1)
    J = ad.stack([j_row0, j_row1], axis=-2)            # (N, 2, 3)
    cov_cam = R @ cov @ R.swapaxes(0, 1)
    cov2 = J @ cov_cam @ J.swapaxes(-1, -2)            # (N, 2, 2)
    a = cov2[:, 0, 0] + dilation
    b = cov2[:, 0, 1]
    c = cov2[:, 1, 1] + dilation
    cov2d = ad.stack([a, b, c], axis=-1)

    ad_, bd, cd = a.data, b.data, c.data
    lam_max = 0.5 * (ad_ + cd) + np.sqrt(np.maximum(0.25 * (ad_ - cd) ** 2 + bd * bd, 0.0))
    radius = 3.0 * np.sqrt(np.maximum(lam_max, 0.0)) + 1.0
    um, vm = u.data, v.data
    valid = (zs > cam.near) & (zs < cam.far) \
        & (um + radius > 0) & (um - radius < cam.width) \
        & (vm + radius > 0) & (vm - radius < cam.height)
    _ = safe
    return {"mean2d": mean2d, "cov2d": cov2d, "depth": zs.copy(),
            "radius": radius, "valid": valid}


def bin_tiles(mean2d: np.ndarray, radius: np.ndarray, width, height, tile=TILE_SIZE):
    """CSR tile lists over splats given in traversal (depth) order."""
    ntx = (width + tile - 1) // tile
    nty = (height + tile - 1) // tile
    x0 = np.clip(((mean2d[:, 0] - radius) // tile).astype(int), 0, ntx - 1)
    x1 = np.clip(((mean2d[:, 0] + radius) // tile).astype(int), 0, ntx - 1)
    y0 = np.clip(((mean2d[:, 1] - radius) // tile).astype(int), 0, nty - 1)
    y1 = np.clip(((mean2d[:, 1] + radius) // tile).astype(int), 0, nty - 1)
    buckets = [[] for _ in range(ntx * nty)]
    for i in range(len(mean2d)):
        for ty in range(y0[i], y1[i] + 1):
            base = ty * ntx
            for tx in range(x0[i], x1[i] + 1):
                buckets[base + tx].append(i)
    offsets = np.zeros(ntx * nty + 1, dtype=np.int64)
    for t, bucket in enumerate(buckets):
        offsets[t + 1] = offsets[t] + len(bucket)
    ids = np.fromiter((i for b in buckets for i in b), dtype=np.int64, count=offsets[-1])
    return ids, offsets


def rasterize(mean2d: Tensor, cov2d: Tensor, rgb: Tensor, alpha: Tensor,
              depth: np.ndarray, valid: np.ndarray, cam, background=None,
              backend=None):
    """Depth-sorted alpha compositing; returns (img, alpha_map) tape tensors.

    Splats are traversed front-to-back per tile; equal depths tie-break by
    splat index so renders are bit-reproducible.
    """
    if backend is None:
        impl = _kernels
    elif isinstance(backend, str):
        impl = _kernels.get_backend(backend)
    else:
        impl = backend
    bg = np.zeros(3) if background is None else np.asarray(background, dtype=np.float64)
    h, w = cam.height, cam.width
    idx = np.nonzero(valid)[0]
    if len(idx) == 0:
        img = Tensor(np.broadcast_to(bg, (h, w, 3)).copy())
        return img, Tensor(np.zeros((h, w)))
    order = idx[np.argsort(depth[idx], kind="stable")]
    m = mean2d[order]
    cv = cov2d[order]
    col = rgb[order]
    al = alpha[order]
    a, b, c = cv.data[:, 0], cv.data[:, 1], cv.data[:, 2]
    if np.any(a <= 0) or np.any(c <= 0) or np.any(a * c - b * b <= 0):
        raise ValueError("non-positive-definite projected covariance")
    lam = 0.5 * (a + c) + np.sqrt(np.maximum(0.25 * (a - c) ** 2 + b * b, 0.0))
    radius = 3.0 * np.sqrt(lam) + 1.0
    tile_ids, tile_offsets = bin_tiles(m.data, radius, w, h)
    img_np, alpha_np = impl.forward(
        np.ascontiguousarray(m.data), np.ascontiguousarray(cv.data),
        np.ascontiguousarray(col.data), np.ascontiguousarray(al.data),
        bg, h, w, tile_ids, tile_offsets, TILE_SIZE)

    def backward_fn(out_grads):
        g_img, g_alpha = out_grads
        gm, gc, gcol, gal = impl.backward(
            np.ascontiguousarray(m.data), np.ascontiguousarray(cv.data),
            np.ascontiguousarray(col.data), np.ascontiguousarray(al.data),
            bg, h, w, tile_ids, tile_offsets, TILE_SIZE,
            np.ascontiguousarray(g_img), np.ascontiguousarray(g_alpha))
        return gm, gc, gcol, gal

    img, alpha_map = ad.custom_op([m, cv, col, al], [img_np, alpha_np], backward_fn)
    return img, alpha_map


def render_cloud(cloud: GaussianCloud, cam, rgb: np.ndarray, background=None,
                 positions=None, backend=None):
    """Forward-only render of a cloud with explicit per-Gaussian colors.

    Used for ground-truth baking and quick previews; `positions` may override
    the cloud's canonical positions (e.g. posed points).
    """
    pos = cloud.positions if positions is None else positions
    cov = build_covariance(cloud.quats, cloud.log_scales)
    proj = project(Tensor(pos), Tensor(cov), cam)
    img, alpha = rasterize(proj["mean2d"], proj["cov2d"], Tensor(rgb),
                           Tensor(cloud.opacities()), proj["depth"], proj["valid"],
                           cam, background, backend=backend)
    return img.data, alpha.data
