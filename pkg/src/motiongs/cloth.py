"""History-dependent cloth proxy: particles chasing their skinned kinematic
targets through damped springs, integrated with symplectic Euler at a fixed
30 Hz step.

The particle state at frame k depends on the whole pose history up to k, so
two pose tracks that agree late but differ early leave the proxy in different
states — the property the temporal model is meant to capture.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rig import Pose, Rig, lbs_transform

DT = 1.0 / 30.0


@dataclass
class ClothParams:
    stiffness: float = 40.0          # 1/s^2
    damping: float = 6.0             # 1/s
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, -9.8, 0.0]))
    max_displacement: float = 1.0    # instability guard, meters

    def __post_init__(self):
        self.gravity = np.asarray(self.gravity, dtype=np.float64)


def skirt_particles(rig: Rig, n: int, seed=0):
    """Rest positions and attachment weights for a skirt-like particle ring.

    Rings of particles around the pelvis between hip and knee height, rigidly
    attached to the pelvis/hip bones so their kinematic targets follow the
    lower torso.
    """
    rng = np.random.default_rng(seed)
    pelvis = rig.heads[0]
    heights = rng.uniform(0.45, 0.88, size=n)
    angles = rng.uniform(0.0, 2.0 * np.pi, size=n)
    radii = 0.16 + 0.14 * (0.88 - heights) / 0.43   # flares toward the hem
    rest = np.stack([
        pelvis[0] + radii * np.cos(angles),
        heights,
        pelvis[2] + radii * np.sin(angles),
    ], axis=1)
    weights = np.zeros((n, rig.bone_count))
    weights[:, 0] = 1.0                               # pelvis-attached
    return rest, weights


def kinematic_targets(rig: Rig, pose: Pose, rest: np.ndarray, weights: np.ndarray):
    return lbs_transform(rest, weights, rig.forward_kinematics(pose))


def simulate(rig: Rig, poses: list[Pose], rest: np.ndarray, weights: np.ndarray,
             params: ClothParams | None = None) -> np.ndarray:
    """Integrate particle states over the track; returns (frames, n, 3)."""
    params = params or ClothParams()
    k, c, g = params.stiffness, params.damping, params.gravity
    x = kinematic_targets(rig, poses[0], rest, weights)
    v = np.zeros_like(x)
    out = np.empty((len(poses), len(rest), 3))
    for f, pose in enumerate(poses):
        target = kinematic_targets(rig, pose, rest, weights)
        acc = k * (target - x) - c * v + g
        v = v + DT * acc
        x = x + DT * v
        disp = np.linalg.norm(x - target, axis=1)
        if np.any(disp > params.max_displacement):
            raise RuntimeError(
                "cloth integration unstable (displacement "
                f"{disp.max():.2f} m); lower stiffness or raise damping "
                "so that k*dt^2 < 1 and c*dt < 1")
        out[f] = x
    return out
