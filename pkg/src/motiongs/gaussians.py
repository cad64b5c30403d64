"""Canonical Gaussian cloud: quaternion algebra, covariance factorization,
initialization from rig surface samples.

Quaternion and covariance ops exist in two flavors: plain numpy (for ground
truth baking and oracles) and tape ops (for the differentiable pipeline).
Both share the same formulas.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .rig import Rig

GAUSSIAN_PARAM_NAMES = ("positions", "log_scales", "quats", "opacity_logits", "sh")


def sh_basis_size(degree: int) -> int:
    return (degree + 1) ** 2


# -- numpy quaternion / covariance -------------------------------------------

def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    """Unit-quaternion (w, x, y, z) to rotation matrix; accepts (..., 4)."""
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm < 1e-12):
        raise ValueError("zero quaternion")
    q = q / norm
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a ⊗ b; accepts (..., 4)."""
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def build_covariance(q: np.ndarray, ln_s: np.ndarray) -> np.ndarray:
    """Sigma = R S S^T R^T with S = diag(exp(ln_s))."""
    R = quat_to_rotmat(q)
    s2 = np.exp(2.0 * np.asarray(ln_s, dtype=np.float64))
    return np.einsum("...ij,...j,...kj->...ik", R, s2, R)


# -- tape quaternion / covariance --------------------------------------------

def quat_to_rotmat_t(q: Tensor) -> Tensor:
    """Tape version of quat_to_rotmat for q of shape (N, 4)."""
    if np.any(np.linalg.norm(q.data, axis=-1) < 1e-12):
        raise ValueError("zero quaternion")
    q = ad.normalize(q, axis=-1)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    one = Tensor(np.ones_like(w.data))
    rows = [
        ad.stack([one - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1),
        ad.stack([2 * (x * y + w * z), one - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1),
        ad.stack([2 * (x * z - w * y), 2 * (y * z + w * x), one - 2 * (x * x + y * y)], axis=-1),
    ]
    return ad.stack(rows, axis=-2)


def quat_multiply_t(a: Tensor, b: Tensor) -> Tensor:
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return ad.stack([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ], axis=-1)


def build_covariance_t(q: Tensor, ln_s: Tensor) -> Tensor:
    R = quat_to_rotmat_t(q)
    s = ln_s.exp()                               # (N, 3)
    RS = R * s.reshape(s.shape[0], 1, 3)         # R @ diag(s)
    return RS @ RS.swapaxes(-1, -2)


# -- cloud -------------------------------------------------------------------

@dataclass
class GaussianCloud:
    """Per-Gaussian parameters in canonical space (arrays, not tape nodes)."""

    positions: np.ndarray        # (N, 3)
    log_scales: np.ndarray       # (N, 3)
    quats: np.ndarray            # (N, 4), unit
    opacity_logits: np.ndarray   # (N,)
    sh: np.ndarray               # (N, 3, basis)

    def __post_init__(self):
        self.renormalize()

    @property
    def count(self) -> int:
        return len(self.positions)

    @property
    def sh_degree(self) -> int:
        return int(np.sqrt(self.sh.shape[2])) - 1

    def renormalize(self):
        norms = np.linalg.norm(self.quats, axis=-1, keepdims=True)
        if np.any(norms < 1e-12):
            raise ValueError("zero quaternion in cloud")
        self.quats = self.quats / norms

    def opacities(self) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.opacity_logits))

    def as_arrays(self, prefix="gaussians") -> dict[str, np.ndarray]:
        return {f"{prefix}/{n}": getattr(self, n) for n in GAUSSIAN_PARAM_NAMES}

    @classmethod
    def from_arrays(cls, arrays: dict, prefix="gaussians") -> "GaussianCloud":
        return cls(**{n: np.asarray(arrays[f"{prefix}/{n}"]) for n in GAUSSIAN_PARAM_NAMES})


def mean_nn_distance(points: np.ndarray) -> np.ndarray:
    """Per-point nearest-neighbor distance (brute force)."""
    if len(points) == 1:
        return np.array([0.05])
    d2 = ((points[:, None, :] - points[None, :, :]) ** 2).sum(-1)
    np.fill_diagonal(d2, np.inf)
    return np.sqrt(d2.min(axis=1))


def init_from_rig(rig: Rig, n: int, seed=0, sh_degree=1) -> GaussianCloud:
    """Canonical cloud on the rig surface: isotropic scales from NN spacing,
    identity rotations, alpha = 0.5, mid-gray DC color."""
    if n < 1:
        raise ValueError("n must be >= 1")
    samples = rig.sample_surface(n, seed=seed)
    pts = np.array([s.rest_pos for s in samples])
    nn = mean_nn_distance(pts)
    ln_s = np.log(np.maximum(nn, 1e-4))[:, None].repeat(3, axis=1)
    quats = np.zeros((n, 4))
    quats[:, 0] = 1.0
    sh = np.zeros((n, 3, sh_basis_size(sh_degree)))
    sh[:, :, 0] = 0.5
    return GaussianCloud(
        positions=pts,
        log_scales=ln_s,
        quats=quats,
        opacity_logits=np.zeros(n),
        sh=sh,
    )
