"""Training objective: masked L1, mask loss, fixed random-convolution
perceptual loss, skinning regularizer, and the weighted total.

The perceptual term replaces a pretrained-network feature loss with a frozen,
seeded 3-stage strided convolution stack: multi-scale and structure-sensitive
without external weights.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def _check_shapes(a, b):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def loss_l1(pred: Tensor, gt: np.ndarray, mask: np.ndarray | None = None) -> Tensor:
    """Mean absolute error over foreground pixels (all pixels without mask)."""
    gt = np.asarray(gt, dtype=np.float64)
    _check_shapes(pred.data, gt)
    diff = (pred - Tensor(gt)).abs()
    if mask is None:
        return diff.mean()
    mask = np.asarray(mask, dtype=np.float64)
    m = mask[..., None] if diff.data.ndim == 3 else mask
    m = np.broadcast_to(m, diff.data.shape)
    return (diff * Tensor(m)).sum() * (1.0 / max(float(m.sum()), 1.0))


def loss_mask(pred_alpha: Tensor, gt_mask: np.ndarray) -> Tensor:
    """Mean |rendered alpha - binary mask|."""
    gt_mask = np.asarray(gt_mask, dtype=np.float64)
    _check_shapes(pred_alpha.data, gt_mask)
    return (pred_alpha - Tensor(gt_mask)).abs().mean()


class PerceptualNet:
    """Frozen random conv features: 3 stages of 3x3 stride-2 filters + relu."""

    CHANNELS = (3, 4, 8, 8)

    def __init__(self, seed=1234):
        rng = np.random.default_rng(seed)
        self.kernels = []
        for cin, cout in zip(self.CHANNELS[:-1], self.CHANNELS[1:]):
            scale = np.sqrt(2.0 / (9 * cin))
            self.kernels.append(rng.normal(scale=scale, size=(3, 3, cin, cout)))

    def features(self, img: Tensor) -> list[Tensor]:
        if img.data.shape[0] < 32 or img.data.shape[1] < 32:
            raise ValueError("perceptual loss requires images of at least 32x32")
        feats = []
        x = img
        for k, kernel in enumerate(self.kernels):
            x = _conv2d_fixed(x, kernel, stride=2)
            if k < len(self.kernels) - 1:
                x = x.relu()
            feats.append(x)
        return feats

    def __call__(self, pred: Tensor, gt) -> Tensor:
        gt = ad.as_tensor(gt)
        _check_shapes(pred.data, gt.data)
        total = Tensor(0.0)
        for fp, fg in zip(self.features(pred), self.features(gt)):
            total = total + ((fp - fg) ** 2).mean()
        return total


def _conv2d_fixed(x: Tensor, kernel: np.ndarray, stride=2) -> Tensor:
    """Valid-mode strided convolution with a constant kernel (custom op).

    Implemented as an im2col matmul so the contraction runs through BLAS.
    """
    kh, kw, cin, cout = kernel.shape
    data = x.data
    win = np.lib.stride_tricks.sliding_window_view(data, (kh, kw), axis=(0, 1))
    win = win[::stride, ::stride]                       # (Ho, Wo, C, kh, kw)
    ho, wo = win.shape[:2]
    kmat = kernel.transpose(2, 0, 1, 3).reshape(cin * kh * kw, cout)
    cols = np.ascontiguousarray(win).reshape(ho * wo, cin * kh * kw)
    out = (cols @ kmat).reshape(ho, wo, cout)

    def backward_fn(out_grads):
        gy = out_grads[0]
        gx = np.zeros_like(data)
        gcols = (gy.reshape(ho * wo, cout) @ kmat.T).reshape(ho, wo, cin, kh, kw)
        for i in range(kh):
            for j in range(kw):
                gx[i:i + ho * stride:stride, j:j + wo * stride:stride] += gcols[:, :, :, i, j]
        return [gx]

    return ad.custom_op([x], [out], backward_fn)[0]


def loss_skin(pred_weights: Tensor, gt_weights: np.ndarray) -> Tensor:
    """Mean squared weight-residual norm over the sample batch."""
    gt_weights = np.atleast_2d(np.asarray(gt_weights, dtype=np.float64))
    _check_shapes(pred_weights.data, gt_weights)
    res = pred_weights - Tensor(gt_weights)
    return (res * res).sum(axis=1).mean()


def loss_total(l1: Tensor, mask: Tensor, percep: Tensor, skin: Tensor,
               weights=(0.1, 0.01, 1.0)) -> Tensor:
    """l1 + λ1·mask + λ2·percep + λ3·skin, rejecting non-finite components."""
    parts = {"l1": l1, "mask": mask, "percep": percep, "skin": skin}
    for name, part in parts.items():
        if not np.all(np.isfinite(part.data)):
            raise FloatingPointError(f"non-finite loss component '{name}'")
    lam1, lam2, lam3 = weights
    return l1 + lam1 * mask + lam2 * percep + lam3 * skin
