"""Learned skinning field and rigid transform to observation space.

An MLP maps encoded Gaussian positions to per-bone logits; softmax puts the
weights on the simplex. The blended bone transform is applied to positions
and, as a general (non-orthogonal) linear map, conjugates the covariance.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .motion import pe_dim, positional_encoding
from .nn import MLP, ParamStore


class SkinningNet:
    def __init__(self, store: ParamStore, rng, bone_count=24, hidden=64, pe_bands=4,
                 name="skinning"):
        self.bone_count = bone_count
        self.pe_bands = pe_bands
        self.mlp = MLP(store, name, [pe_dim(3, pe_bands), hidden, hidden, bone_count],
                       acts=["relu", "relu", "identity"], rng=rng)

    def __call__(self, positions: Tensor) -> Tensor:
        """Skinning weights (N, B) on the simplex for positions (N, 3)."""
        if not np.all(np.isfinite(positions.data)):
            raise ValueError("non-finite skinning query positions")
        logits = self.mlp(positional_encoding(positions, self.pe_bands))
        return ad.softmax(logits, axis=-1)


def blend_bone_transforms(weights: Tensor, bone_ts: np.ndarray):
    """Blended linear block (N, 3, 3) and translation (N, 3).

    Computed as I + sum_b w_b (B_b - I) so that identity bone transforms give
    the exact identity map regardless of float round-off in the weight sum.
    """
    bone_ts = np.asarray(bone_ts, dtype=np.float64)
    lin_delta = bone_ts[:, :3, :3] - np.eye(3)       # (B, 3, 3)
    trans = bone_ts[:, :3, 3]                        # (B, 3)
    b = bone_ts.shape[0]
    t_lin = weights @ Tensor(lin_delta.reshape(b, 9))
    t_lin = t_lin.reshape(weights.shape[0], 3, 3) + Tensor(np.eye(3))
    t_off = weights @ Tensor(trans)
    return t_lin, t_off


def rigid_transform(x_e: Tensor, cov_e: Tensor, weights: Tensor, bone_ts: np.ndarray):
    """Map deformed Gaussians to observation space.

    Returns (x_o, cov_o, t_lin): blended-transform positions, transported
    covariances, and the per-Gaussian linear blocks (needed for view-direction
    canonicalization).
    """
    t_lin, t_off = blend_bone_transforms(weights, bone_ts)
    if not (np.all(np.isfinite(t_lin.data)) and np.all(np.isfinite(t_off.data))):
        raise ValueError("non-finite blended bone transform")
    x_o = (t_lin @ x_e.reshape(-1, 3, 1)).reshape(-1, 3) + t_off
    cov_o = t_lin @ cov_e @ t_lin.swapaxes(-1, -2)
    return x_o, cov_o, t_lin
