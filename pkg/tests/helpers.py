"""Independent oracle implementations used by the unit and acceptance tests.

Everything here is written from the mathematical definitions, deliberately
not sharing code paths with the package (naive loops, homogeneous matrices,
explicit per-pixel compositing), so agreement is meaningful.
"""

from __future__ import annotations

import numpy as np

W_MIN = 1e-5
W_CAP = 0.99
T_EPS = 1e-4


def oracle_lbs(points, weights, bone_ts):
    """Naive per-point LBS: x' = (sum_b w_b B_b) @ [x; 1]."""
    out = np.empty_like(points)
    for i, (x, w) in enumerate(zip(points, weights)):
        T = np.zeros((4, 4))
        for b in range(len(bone_ts)):
            T += w[b] * bone_ts[b]
        h = T @ np.array([x[0], x[1], x[2], 1.0])
        out[i] = h[:3]
    return out


def oracle_blend(weights, bone_ts):
    """Naive blended transform per row of weights."""
    out = np.zeros((len(weights), 4, 4))
    for i, w in enumerate(weights):
        for b in range(len(bone_ts)):
            out[i] += w[b] * bone_ts[b]
    return out


def oracle_rigid(x, cov, weights, bone_ts):
    """Naive rigid transform: positions through the blended affine map,
    covariances conjugated by its linear block."""
    T = oracle_blend(weights, bone_ts)
    n = len(x)
    xo = np.empty((n, 3))
    co = np.empty((n, 3, 3))
    for i in range(n):
        A = T[i, :3, :3]
        xo[i] = A @ x[i] + T[i, :3, 3]
        co[i] = A @ cov[i] @ A.T
    return xo, co


def oracle_fk(parents, heads, pose_rots, root_t):
    """Independent FK: world chains for posed and rest, B = G @ G_rest^-1."""
    from scipy.spatial.transform import Rotation

    B = len(parents)

    def chain(rots, rt):
        G = [None] * B
        for b in range(B):
            R = Rotation.from_rotvec(rots[b]).as_matrix()
            L = np.eye(4)
            L[:3, :3] = R
            p = parents[b]
            if p < 0:
                L[:3, 3] = heads[b] + rt
                G[b] = L
            else:
                L[:3, 3] = heads[b] - heads[p]
                G[b] = G[p] @ L
        return np.array(G)

    G = chain(pose_rots, root_t)
    G0 = chain(np.zeros((B, 3)), np.zeros(3))
    return np.array([G[b] @ np.linalg.inv(G0[b]) for b in range(B)])


def gaussian_weight(px, py, mean, cov_abc, alpha):
    """Clamped splat weight at one pixel, from the definition."""
    a, b, c = cov_abc
    S = np.array([[a, b], [b, c]])
    d = np.array([px - mean[0], py - mean[1]])
    power = -0.5 * d @ np.linalg.inv(S) @ d
    w = alpha * np.exp(min(power, 0.0))
    w = min(w, W_CAP)
    return w if w >= W_MIN else 0.0


def oracle_composite(px, py, means, covs, rgbs, alphas, background):
    """Front-to-back compositing at one pixel, straight from the definition."""
    T = 1.0
    col = np.zeros(3)
    acc_a = 0.0
    for i in range(len(means)):
        if T < T_EPS:
            break
        w = gaussian_weight(px, py, means[i], covs[i], alphas[i])
        if w == 0.0:
            continue
        col += w * T * rgbs[i]
        acc_a += w * T
        T *= 1.0 - w
    return col + T * np.asarray(background), acc_a


def oracle_project_cov(cov3, R, t, fx, fy, dilation):
    """Screen covariance for one Gaussian at camera-space mean, closed form."""
    def jac(xc):
        x, y, z = xc
        return np.array([[fx / z, 0.0, -fx * x / z ** 2],
                         [0.0, fy / z, -fy * y / z ** 2]])

    def f(pos):
        xc = R @ pos + t
        J = jac(xc)
        S = J @ R @ cov3 @ R.T @ J.T
        return S + dilation * np.eye(2)
    return f


def oracle_lstm_step(x, h, c, Wx, Wh, b):
    """One LSTM step from stored gate-stacked parameters, scalar math."""
    H = len(h)
    z = Wx @ x + Wh @ h + b

    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))
    i = sig(z[0:H])
    f = sig(z[H:2 * H])
    g = np.tanh(z[2 * H:3 * H])
    o = sig(z[3 * H:4 * H])
    c2 = f * c + i * g
    h2 = o * np.tanh(c2)
    return h2, c2


def oracle_ssim(pred, gt, size=11, sigma=1.5, k1=0.01, k2=0.03):
    """Sliding-window SSIM with explicit per-window loops."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.ndim == 2:
        pred, gt = pred[..., None], gt[..., None]
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r ** 2) / (2.0 * sigma ** 2))
    win = np.outer(g, g)
    win /= win.sum()
    c1, c2 = k1 ** 2, k2 ** 2
    h, w, nc = pred.shape
    vals = []
    for ch in range(nc):
        x, y = pred[..., ch], gt[..., ch]
        svals = []
        for i in range(h - size + 1):
            for j in range(w - size + 1):
                wx = x[i:i + size, j:j + size]
                wy = y[i:i + size, j:j + size]
                mx = (win * wx).sum()
                my = (win * wy).sum()
                vx = (win * wx * wx).sum() - mx * mx
                vy = (win * wy * wy).sum() - my * my
                cxy = (win * wx * wy).sum() - mx * my
                svals.append(((2 * mx * my + c1) * (2 * cxy + c2))
                             / ((mx * mx + my * my + c1) * (vx + vy + c2)))
        vals.append(np.mean(svals))
    return float(np.mean(vals))


def finite_diff_scalar(f, x, h=1e-6):
    """Central-difference gradient of scalar f at array x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        xp = x.copy(); xp[idx] += h
        xm = x.copy(); xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2.0 * h)
        it.iternext()
    return g


def rel_err(a, b, floor=1e-6):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor))


def random_bone_transforms(rng, n_bones, scale=0.4):
    """Random rigid-ish 4x4 bone transforms (rotation + translation)."""
    from scipy.spatial.transform import Rotation
    out = np.zeros((n_bones, 4, 4))
    for b in range(n_bones):
        out[b] = np.eye(4)
        out[b, :3, :3] = Rotation.from_rotvec(rng.normal(0, scale, 3)).as_matrix()
        out[b, :3, 3] = rng.normal(0, 0.3, 3)
    return out


def random_simplex(rng, n, k):
    w = rng.uniform(0.0, 1.0, (n, k))
    return w / w.sum(axis=1, keepdims=True)
