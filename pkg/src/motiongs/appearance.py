"""View-dependent appearance: SH evaluation in the canonicalized view
direction, per-frame latents, and the color MLP.

The color net consumes per-channel SH dot products, a low-frequency encoding
of the canonicalized direction, the motion feature, and the per-frame latent;
sigmoid output keeps RGB strictly inside (0, 1).
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .motion import FMT_DIM
from .nn import MLP, ParamStore

# real SH constants as used in splatting renderers
_C0 = 0.28209479177387814
_C1 = 0.4886025119029199
_C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
       -1.0925484305920792, 0.5462742152960396)
_C3 = (-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
       0.3731763325901154, -0.4570457994644658, 1.445305721320277,
       -0.5900435899266435)


def sh_basis_t(dirs: Tensor, degree: int) -> Tensor:
    """SH basis values (N, (degree+1)^2) for unit directions (N, 3)."""
    n = dirs.shape[0]
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    one = Tensor(np.ones(n))
    out = [one * _C0]
    if degree >= 1:
        out += [y * -_C1, z * _C1, x * -_C1]
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        out += [
            x * y * _C2[0], y * z * _C2[1],
            (zz * 2.0 - xx - yy) * _C2[2],
            x * z * _C2[3], (xx - yy) * _C2[4],
        ]
    if degree >= 3:
        xx, yy, zz = x * x, y * y, z * z
        out += [
            y * (xx * 3.0 - yy) * _C3[0],
            x * y * z * _C3[1],
            y * (zz * 4.0 - xx - yy) * _C3[2],
            z * (zz * 2.0 - xx * 3.0 - yy * 3.0) * _C3[3],
            x * (zz * 4.0 - xx - yy) * _C3[4],
            z * (xx - yy) * _C3[5],
            x * (xx - yy * 3.0) * _C3[6],
        ]
    return ad.stack(out, axis=-1)


def inverse3_t(m: Tensor) -> Tensor:
    """Batched 3x3 inverse via the adjugate, on the tape; m is (N, 3, 3)."""
    a, b, c = m[:, 0, 0], m[:, 0, 1], m[:, 0, 2]
    d, e, f = m[:, 1, 0], m[:, 1, 1], m[:, 1, 2]
    g, h, i = m[:, 2, 0], m[:, 2, 1], m[:, 2, 2]
    A = e * i - f * h
    B = c * h - b * i
    C = b * f - c * e
    D = f * g - d * i
    E = a * i - c * g
    F = c * d - a * f
    G = d * h - e * g
    H = b * g - a * h
    I = a * e - b * d
    det = a * A + b * D + c * G
    adj = ad.stack([
        ad.stack([A, B, C], axis=-1),
        ad.stack([D, E, F], axis=-1),
        ad.stack([G, H, I], axis=-1),
    ], axis=-2)
    return adj / det.reshape(-1, 1, 1)


def canonicalize_view_dir(d: Tensor, t_lin: Tensor, cond_limit=1e6) -> Tensor:
    """Pull view directions back through the blended linear block.

    Near-singular blocks (condition number above `cond_limit`) fall back to
    the transpose, which is exact for pure rotations.
    """
    if np.any(np.linalg.norm(d.data, axis=-1) < 1e-12):
        raise ValueError("zero view direction")
    cond = np.linalg.cond(t_lin.data)
    ok = (cond < cond_limit)[:, None, None]
    inv = ad.where(ok, inverse3_t(ad.where(ok, t_lin, Tensor(np.broadcast_to(np.eye(3), t_lin.shape)))),
                   t_lin.swapaxes(-1, -2))
    d_hat = (inv @ d.reshape(-1, 3, 1)).reshape(-1, 3)
    return ad.normalize(d_hat, axis=-1)


class FrameLatentTable:
    """Learnable per-training-frame latents; unseen frames use the mean."""

    def __init__(self, store: ParamStore, n_frames: int, dim=8, rng=None,
                 name="frame_latents"):
        rng = rng or np.random.default_rng(0)
        self.dim = dim
        self.n_frames = n_frames
        self.table = store.add(f"{name}/table", rng.normal(scale=0.01, size=(n_frames, dim)))

    def get(self, frame_id) -> Tensor:
        if frame_id is not None and 0 <= frame_id < self.n_frames:
            return self.table[frame_id]
        return self.mean_latent()

    def mean_latent(self) -> Tensor:
        return Tensor(self.table.data.mean(axis=0))


class ColorNet:
    """Single-hidden-layer MLP (64 neurons) from shading features to RGB."""

    def __init__(self, store: ParamStore, rng, sh_degree=1, dir_bands=2,
                 latent_dim=8, hidden=64, name="color"):
        self.sh_degree = sh_degree
        self.dir_bands = dir_bands
        static_dim = 3 + 3 * (1 + 2 * dir_bands)
        in_dim = static_dim + FMT_DIM + latent_dim
        self.mlp = MLP(store, name, [in_dim, hidden, 3], acts=["relu", "identity"], rng=rng)
        # Start shading neutral to the motion feature: zero the first-layer
        # columns that read f_mt. Otherwise every pose-sensitive encoder unit
        # causes shading flicker from step 0, and the cheapest descent
        # direction is to flatten the shared pose encoder — which starves the
        # deformation pathway of its only history signal. With zeroed columns
        # the shading dependence can still grow, but only once it pays.
        store[f"{name}/l0/W"].data[:, static_dim:static_dim + FMT_DIM] = 0.0

    def shade(self, sh: Tensor, d_hat: Tensor, f_mt: Tensor, z_r: Tensor) -> Tensor:
        """Per-Gaussian RGB in (0,1)^3.

        sh: (N, 3, K) coefficients; d_hat: (N, 3) unit canonicalized dirs;
        f_mt: (N, FMT_DIM); z_r: (latent_dim,).
        """
        n = sh.shape[0]
        basis = sh_basis_t(d_hat, self.sh_degree)            # (N, K)
        sh_rgb = (sh * basis.reshape(n, 1, -1)).sum(axis=2)  # (N, 3)
        feats = [sh_rgb, d_hat]
        for k in range(self.dir_bands):
            s = d_hat * (2.0 ** k * np.pi)
            feats.append(s.sin())
            feats.append(s.cos())
        feats.append(f_mt)
        feats.append(z_r.reshape(1, -1) + Tensor(np.zeros((n, z_r.data.size))))
        return self.mlp(ad.concat(feats, axis=1)).sigmoid()
