# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled rasterization kernels: tile-sequential front-to-back compositing
and its analytic backward. Semantics match numpy_backend exactly (weight cap,
drop threshold, early termination, background under residual transmittance).
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()

DEF T_EPS = 1e-4
DEF W_MIN = 1e-5
DEF W_CAP = 0.99
# any power below this yields weight < W_MIN for alpha <= 1, with margin to
# spare, so exp() can be skipped without changing which splats are dropped
DEF POW_SKIP = -13.0

BACKEND_NAME = "cython"


def forward(double[:, ::1] mean2d, double[:, ::1] cov2d, double[:, ::1] rgb,
            double[::1] alpha, double[::1] background, int h, int w,
            long[::1] tile_ids, long[::1] tile_offsets, int tile_size):
    cdef cnp.ndarray[double, ndim=3] img_arr = np.zeros((h, w, 3))
    cdef cnp.ndarray[double, ndim=2] alpha_arr = np.zeros((h, w))
    cdef double[:, :, ::1] img = img_arr
    cdef double[:, ::1] amap = alpha_arr
    cdef int ntx = (w + tile_size - 1) // tile_size
    cdef int nty = (h + tile_size - 1) // tile_size
    cdef int tx, ty, t, py, px, y1, x1
    cdef long j, k, s, lo, hi, nloc
    cdef double T, acc0, acc1, acc2, accA
    cdef double dx, dy, power, g, wgt, fx, fy
    cdef double bg0 = background[0], bg1 = background[1], bg2 = background[2]

    # per-tile scratch: conic (inverse covariance), means, alpha, rgb
    cdef long maxk = 0
    for t in range(tile_offsets.shape[0] - 1):
        if tile_offsets[t + 1] - tile_offsets[t] > maxk:
            maxk = tile_offsets[t + 1] - tile_offsets[t]
    if maxk == 0:
        img_arr[:, :, 0] = bg0
        img_arr[:, :, 1] = bg1
        img_arr[:, :, 2] = bg2
        return img_arr, alpha_arr
    cdef cnp.ndarray[double, ndim=2] loc_arr = np.empty((maxk, 9))
    cdef double[:, ::1] L = loc_arr    # ca, cb, cc, mx, my, al, r, g_, b_

    for ty in range(nty):
        for tx in range(ntx):
            t = ty * ntx + tx
            lo = tile_offsets[t]
            hi = tile_offsets[t + 1]
            y1 = min((ty + 1) * tile_size, h)
            x1 = min((tx + 1) * tile_size, w)
            nloc = hi - lo
            for j in range(nloc):
                s = tile_ids[lo + j]
                a = cov2d[s, 0]; b = cov2d[s, 1]; c = cov2d[s, 2]
                det = a * c - b * b
                L[j, 0] = c / det
                L[j, 1] = b / det
                L[j, 2] = a / det
                L[j, 3] = mean2d[s, 0]
                L[j, 4] = mean2d[s, 1]
                L[j, 5] = alpha[s]
                L[j, 6] = rgb[s, 0]
                L[j, 7] = rgb[s, 1]
                L[j, 8] = rgb[s, 2]
            for py in range(ty * tile_size, y1):
                fy = <double> py
                for px in range(tx * tile_size, x1):
                    fx = <double> px
                    T = 1.0
                    acc0 = acc1 = acc2 = accA = 0.0
                    for j in range(nloc):
                        if T < T_EPS:
                            break
                        dx = fx - L[j, 3]
                        dy = fy - L[j, 4]
                        power = -0.5 * (L[j, 0] * dx * dx
                                        - 2.0 * L[j, 1] * dx * dy
                                        + L[j, 2] * dy * dy)
                        if power < POW_SKIP:
                            continue
                        if power > 0.0:
                            power = 0.0
                        wgt = L[j, 5] * exp(power)
                        if wgt > W_CAP:
                            wgt = W_CAP
                        if wgt < W_MIN:
                            continue
                        acc0 += wgt * T * L[j, 6]
                        acc1 += wgt * T * L[j, 7]
                        acc2 += wgt * T * L[j, 8]
                        accA += wgt * T
                        T *= (1.0 - wgt)
                    img[py, px, 0] = acc0 + T * bg0
                    img[py, px, 1] = acc1 + T * bg1
                    img[py, px, 2] = acc2 + T * bg2
                    amap[py, px] = accA
    return img_arr, alpha_arr


def backward(double[:, ::1] mean2d, double[:, ::1] cov2d, double[:, ::1] rgb,
             double[::1] alpha, double[::1] background, int h, int w,
             long[::1] tile_ids, long[::1] tile_offsets, int tile_size,
             double[:, :, ::1] grad_img, double[:, ::1] grad_alpha):
    cdef long n = mean2d.shape[0]
    cdef cnp.ndarray[double, ndim=2] gmean_arr = np.zeros((n, 2))
    cdef cnp.ndarray[double, ndim=2] gcov_arr = np.zeros((n, 3))
    cdef cnp.ndarray[double, ndim=2] grgb_arr = np.zeros((n, 3))
    cdef cnp.ndarray[double, ndim=1] galpha_arr = np.zeros(n)
    cdef double[:, ::1] gmean = gmean_arr
    cdef double[:, ::1] gcov = gcov_arr
    cdef double[:, ::1] grgb = grgb_arr
    cdef double[::1] galpha = galpha_arr

    cdef int ntx = (w + tile_size - 1) // tile_size
    cdef int nty = (h + tile_size - 1) // tile_size
    cdef int tx, ty, t, py, px, y1, x1
    cdef long j, s, lo, hi, cnt, i, nloc
    cdef double T, a, b, c, det, dx, dy, power, g, wgt, fx, fy
    cdef double gi0, gi1, gi2, gia, dldw, dldg, dldpow, u, det2
    cdef double s_col0, s_col1, s_col2, s_alp
    cdef double wT
    cdef double bg0 = background[0], bg1 = background[1], bg2 = background[2]

    cdef long maxk = 0
    for t in range(tile_offsets.shape[0] - 1):
        if tile_offsets[t + 1] - tile_offsets[t] > maxk:
            maxk = tile_offsets[t + 1] - tile_offsets[t]
    if maxk == 0:
        return gmean_arr, gcov_arr, grgb_arr, galpha_arr
    cdef cnp.ndarray[double, ndim=2] loc_arr = np.empty((maxk, 6))
    cdef double[:, ::1] L = loc_arr    # ca, cb, cc, mx, my, al
    # scratch for one pixel's contributing splats: local idx, weight, T, g
    cdef cnp.ndarray[long, ndim=1] sid_arr = np.zeros(maxk, dtype=np.int64)
    cdef cnp.ndarray[double, ndim=2] sw_arr = np.zeros((maxk, 3))
    cdef long[::1] sid = sid_arr
    cdef double[:, ::1] sw = sw_arr

    for ty in range(nty):
        for tx in range(ntx):
            t = ty * ntx + tx
            lo = tile_offsets[t]
            hi = tile_offsets[t + 1]
            if hi == lo:
                continue
            y1 = min((ty + 1) * tile_size, h)
            x1 = min((tx + 1) * tile_size, w)
            nloc = hi - lo
            for j in range(nloc):
                s = tile_ids[lo + j]
                a = cov2d[s, 0]; b = cov2d[s, 1]; c = cov2d[s, 2]
                det = a * c - b * b
                L[j, 0] = c / det
                L[j, 1] = b / det
                L[j, 2] = a / det
                L[j, 3] = mean2d[s, 0]
                L[j, 4] = mean2d[s, 1]
                L[j, 5] = alpha[s]
            for py in range(ty * tile_size, y1):
                fy = <double> py
                for px in range(tx * tile_size, x1):
                    fx = <double> px
                    gi0 = grad_img[py, px, 0]
                    gi1 = grad_img[py, px, 1]
                    gi2 = grad_img[py, px, 2]
                    gia = grad_alpha[py, px]
                    if gi0 == 0.0 and gi1 == 0.0 and gi2 == 0.0 and gia == 0.0:
                        continue
                    # replay the forward traversal, recording contributors
                    T = 1.0
                    cnt = 0
                    for j in range(nloc):
                        if T < T_EPS:
                            break
                        dx = fx - L[j, 3]
                        dy = fy - L[j, 4]
                        power = -0.5 * (L[j, 0] * dx * dx
                                        - 2.0 * L[j, 1] * dx * dy
                                        + L[j, 2] * dy * dy)
                        if power < POW_SKIP:
                            continue
                        if power > 0.0:
                            power = 0.0
                        g = exp(power)
                        wgt = L[j, 5] * g
                        if wgt > W_CAP:
                            wgt = W_CAP
                        if wgt < W_MIN:
                            continue
                        sid[cnt] = j
                        sw[cnt, 0] = wgt
                        sw[cnt, 1] = T
                        sw[cnt, 2] = g
                        cnt += 1
                        T *= (1.0 - wgt)
                    # back-to-front suffix pass
                    s_col0 = bg0; s_col1 = bg1; s_col2 = bg2
                    s_alp = 0.0
                    for i in range(cnt - 1, -1, -1):
                        j = sid[i]
                        s = tile_ids[lo + j]
                        wgt = sw[i, 0]
                        g = sw[i, 2]
                        wT = wgt * sw[i, 1]
                        dldw = sw[i, 1] * (
                            gi0 * (rgb[s, 0] - s_col0)
                            + gi1 * (rgb[s, 1] - s_col1)
                            + gi2 * (rgb[s, 2] - s_col2)
                            + gia * (1.0 - s_alp))
                        grgb[s, 0] += wT * gi0
                        grgb[s, 1] += wT * gi1
                        grgb[s, 2] += wT * gi2
                        s_col0 = wgt * rgb[s, 0] + (1.0 - wgt) * s_col0
                        s_col1 = wgt * rgb[s, 1] + (1.0 - wgt) * s_col1
                        s_col2 = wgt * rgb[s, 2] + (1.0 - wgt) * s_col2
                        s_alp = wgt + (1.0 - wgt) * s_alp
                        if wgt >= W_CAP:
                            continue  # clamped: no gradient into alpha/geometry
                        galpha[s] += dldw * g
                        dldg = dldw * L[j, 5]
                        dldpow = dldg * g
                        a = cov2d[s, 0]; b = cov2d[s, 1]; c = cov2d[s, 2]
                        det = a * c - b * b
                        det2 = det * det
                        dx = fx - L[j, 3]
                        dy = fy - L[j, 4]
                        gmean[s, 0] += dldpow * (L[j, 0] * dx - L[j, 1] * dy)
                        gmean[s, 1] += dldpow * (L[j, 2] * dy - L[j, 1] * dx)
                        u = c * dx * dx - 2.0 * b * dx * dy + a * dy * dy
                        gcov[s, 0] += dldpow * (-0.5) * (dy * dy * det - u * c) / det2
                        gcov[s, 1] += dldpow * (-0.5) * (-2.0 * dx * dy * det + u * 2.0 * b) / det2
                        gcov[s, 2] += dldpow * (-0.5) * (dx * dx * det - u * a) / det2
    return gmean_arr, gcov_arr, grgb_arr, galpha_arr
