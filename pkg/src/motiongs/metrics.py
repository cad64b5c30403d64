"""Image quality metrics: PSNR (capped) and SSIM with an 11x11 Gaussian
window and the standard constants."""

from __future__ import annotations

import numpy as np
from scipy.signal import correlate2d

PSNR_CAP = 99.0


def psnr(pred: np.ndarray, gt: np.ndarray) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    mse = float(np.mean((pred - gt) ** 2))
    if mse < 1e-10:
        return PSNR_CAP
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP)


def gaussian_window(size=11, sigma=1.5) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r ** 2) / (2.0 * sigma ** 2))
    k = np.outer(g, g)
    return k / k.sum()


def ssim(pred: np.ndarray, gt: np.ndarray, size=11, sigma=1.5,
         k1=0.01, k2=0.03, data_range=1.0) -> float:
    """Mean SSIM over valid (fully interior) windows; channels averaged."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    if pred.ndim == 2:
        pred, gt = pred[..., None], gt[..., None]
    win = gaussian_window(size, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    vals = []
    for ch in range(pred.shape[2]):
        x, y = pred[..., ch], gt[..., ch]
        mx = correlate2d(x, win, mode="valid")
        my = correlate2d(y, win, mode="valid")
        mxx = correlate2d(x * x, win, mode="valid")
        myy = correlate2d(y * y, win, mode="valid")
        mxy = correlate2d(x * y, win, mode="valid")
        vx = mxx - mx * mx
        vy = myy - my * my
        cxy = mxy - mx * my
        s = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
        vals.append(s.mean())
    return float(np.mean(vals))


def eval_psnr_ssim(pred: np.ndarray, gt: np.ndarray) -> tuple[float, float]:
    if np.any(pred < -1e-9) or np.any(pred > 1 + 1e-9):
        raise ValueError("pred values must be in [0, 1]")
    return psnr(pred, gt), ssim(pred, gt)
