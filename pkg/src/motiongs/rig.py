"""Simplified articulated body: 24-bone capsule rig, FK, LBS, pose partition.

The rig stands in for a full statistical body model: a fixed kinematic tree
whose bones carry capsule radii. Surface samples with analytic skinning
weights are generated from capsule proximity so the skinning regularizer has
a ground truth to pull toward.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

PARTS = ("left-arm", "right-arm", "legs", "torso")

# SMPL-compatible 24-bone tree: parent indices and part assignment.
_PARENTS = [-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21]
_PART_OF = {
    "left-arm": (13, 16, 18, 20, 22),
    "right-arm": (14, 17, 19, 21, 23),
    "legs": (1, 2, 4, 5, 7, 8, 10, 11),
    "torso": (0, 3, 6, 9, 12, 15),
}
_BONE_NAMES = [
    "pelvis", "l_hip", "r_hip", "spine1", "l_knee", "r_knee", "spine2",
    "l_ankle", "r_ankle", "spine3", "l_foot", "r_foot", "neck", "l_collar",
    "r_collar", "head", "l_shoulder", "r_shoulder", "l_elbow", "r_elbow",
    "l_wrist", "r_wrist", "l_hand", "r_hand",
]

# Rest-pose bone head positions in meters (y up, subject facing +z).
_REST_HEADS = np.array([
    [0.00, 0.95, 0.00],   # pelvis
    [0.09, 0.90, 0.00],   # l_hip
    [-0.09, 0.90, 0.00],  # r_hip
    [0.00, 1.05, 0.00],   # spine1
    [0.10, 0.50, 0.00],   # l_knee
    [-0.10, 0.50, 0.00],  # r_knee
    [0.00, 1.15, 0.00],   # spine2
    [0.10, 0.10, 0.00],   # l_ankle
    [-0.10, 0.10, 0.00],  # r_ankle
    [0.00, 1.25, 0.00],   # spine3
    [0.10, 0.03, 0.10],   # l_foot
    [-0.10, 0.03, 0.10],  # r_foot
    [0.00, 1.40, 0.00],   # neck
    [0.08, 1.35, 0.00],   # l_collar
    [-0.08, 1.35, 0.00],  # r_collar
    [0.00, 1.52, 0.00],   # head
    [0.18, 1.38, 0.00],   # l_shoulder
    [-0.18, 1.38, 0.00],  # r_shoulder
    [0.44, 1.38, 0.00],   # l_elbow
    [-0.44, 1.38, 0.00],  # r_elbow
    [0.68, 1.38, 0.00],   # l_wrist
    [-0.68, 1.38, 0.00],  # r_wrist
    [0.78, 1.38, 0.00],   # l_hand
    [-0.78, 1.38, 0.00],  # r_hand
])

_RADII = np.array([
    0.11, 0.07, 0.07, 0.10, 0.06, 0.06, 0.10, 0.045, 0.045, 0.09, 0.04, 0.04,
    0.045, 0.05, 0.05, 0.09, 0.05, 0.05, 0.042, 0.042, 0.035, 0.035, 0.03, 0.03,
])


def axis_angle_to_matrix(aa: np.ndarray) -> np.ndarray:
    """Rodrigues formula; accepts (..., 3)."""
    aa = np.asarray(aa, dtype=np.float64)
    theta = np.linalg.norm(aa, axis=-1, keepdims=True)
    small = theta[..., 0] < 1e-12
    axis = np.where(theta > 1e-12, aa / np.maximum(theta, 1e-12), 0.0)
    x, y, z = axis[..., 0], axis[..., 1], axis[..., 2]
    zeros = np.zeros_like(x)
    K = np.stack([
        np.stack([zeros, -z, y], -1),
        np.stack([z, zeros, -x], -1),
        np.stack([-y, x, zeros], -1),
    ], -2)
    th = theta[..., None]
    eye = np.broadcast_to(np.eye(3), K.shape)
    R = eye + np.sin(th) * K + (1.0 - np.cos(th)) * (K @ K)
    return np.where(small[..., None, None], eye, R)


def matrix_to_axis_angle(R: np.ndarray) -> np.ndarray:
    """Inverse Rodrigues for a single 3x3 rotation."""
    cos = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos)
    if theta < 1e-10:
        return np.zeros(3)
    axis = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    axis = axis / (2.0 * np.sin(theta))
    return axis * theta


@dataclass
class Pose:
    """Per-bone local axis-angle rotations plus a root translation."""

    rots: np.ndarray                 # (B, 3) radians
    root_t: np.ndarray = field(default_factory=lambda: np.zeros(3))
    frame: int = 0

    def __post_init__(self):
        self.rots = np.asarray(self.rots, dtype=np.float64)
        self.root_t = np.asarray(self.root_t, dtype=np.float64)
        if not (np.all(np.isfinite(self.rots)) and np.all(np.isfinite(self.root_t))):
            raise ValueError("pose parameters must be finite")
        if np.any(np.linalg.norm(self.rots, axis=-1) >= 2.0 * np.pi):
            raise ValueError("axis-angle magnitude must be < 2*pi")

    @classmethod
    def rest(cls, bone_count=24, frame=0):
        return cls(np.zeros((bone_count, 3)), np.zeros(3), frame)


@dataclass
class SurfaceSample:
    rest_pos: np.ndarray     # (3,)
    weights: np.ndarray      # (B,) on the simplex


class Rig:
    """Capsule-limb articulated body with a fixed 24-bone tree."""

    def __init__(self, parents=None, heads=None, radii=None, parts=None, names=None):
        self.parents = np.asarray(_PARENTS if parents is None else parents, dtype=int)
        self.heads = np.asarray(_REST_HEADS if heads is None else heads, dtype=np.float64)
        self.radii = np.asarray(_RADII if radii is None else radii, dtype=np.float64)
        self.names = list(_BONE_NAMES if names is None else names)
        self.bone_count = len(self.parents)
        if parts is None:
            parts = {p: list(v) for p, v in _PART_OF.items()}
        self.parts = {p: sorted(parts[p]) for p in PARTS}
        self._validate()
        self._rest_world = self._world_transforms(Pose.rest(self.bone_count))

    def _validate(self):
        if self.parents[0] != -1:
            raise ValueError("bone 0 must be the root")
        seen = np.zeros(self.bone_count, dtype=bool)
        for b in range(self.bone_count):
            p, hops = b, 0
            while p != -1:
                hops += 1
                if hops > self.bone_count:
                    raise ValueError("cyclic bone hierarchy")
                p = self.parents[p]
            seen[b] = True
        assigned = sorted(b for bones in self.parts.values() for b in bones)
        if assigned != list(range(self.bone_count)):
            raise ValueError("part table must cover every bone exactly once")

    # -- kinematics --------------------------------------------------------

    def _world_transforms(self, pose: Pose) -> np.ndarray:
        """World 4x4 transform per bone for the given pose."""
        G = np.zeros((self.bone_count, 4, 4))
        R = axis_angle_to_matrix(pose.rots)
        for b in range(self.bone_count):
            local = np.eye(4)
            p = self.parents[b]
            offset = self.heads[b] - (self.heads[p] if p >= 0 else 0.0)
            local[:3, :3] = R[b]
            local[:3, 3] = offset
            if p < 0:
                local[:3, 3] = self.heads[b] + pose.root_t
                G[b] = local
            else:
                G[b] = G[p] @ local
        return G

    def forward_kinematics(self, pose: Pose) -> np.ndarray:
        """Posed-relative-to-rest bone transforms B_b (B, 4, 4).

        The rest pose yields exact identities for every bone.
        """
        if pose.rots.shape[0] != self.bone_count:
            raise ValueError("pose bone count mismatch")
        if not pose.rots.any() and not pose.root_t.any():
            return np.broadcast_to(np.eye(4), (self.bone_count, 4, 4)).copy()
        G = self._world_transforms(pose)
        return G @ np.linalg.inv(self._rest_world)

    # -- pose partition ----------------------------------------------------

    def partition_pose(self, pose: Pose) -> dict[str, np.ndarray]:
        """Split the pose vector into the four body-part parameter groups.

        The legs group appends the relative rotation between the two upper-leg
        bones as an extra axis-angle triple.
        """
        out = {}
        for part in PARTS:
            vec = pose.rots[self.parts[part]].reshape(-1)
            if part == "legs":
                l_hip, r_hip = self.parts["legs"][0], self.parts["legs"][1]
                Rl = axis_angle_to_matrix(pose.rots[l_hip])
                Rr = axis_angle_to_matrix(pose.rots[r_hip])
                rel = matrix_to_axis_angle(Rl.T @ Rr)
                vec = np.concatenate([vec, rel])
            out[part] = vec
        return out

    def part_dims(self) -> dict[str, int]:
        d = {p: 3 * len(self.parts[p]) for p in PARTS}
        d["legs"] += 3
        return d

    # -- surface sampling --------------------------------------------------

    def _segments(self):
        """Capsule axis segments (start, end) per bone; leaves collapse to a point."""
        starts, ends = [], []
        children = [[] for _ in range(self.bone_count)]
        for b, p in enumerate(self.parents):
            if p >= 0:
                children[p].append(b)
        for b in range(self.bone_count):
            starts.append(self.heads[b])
            if children[b]:
                ends.append(np.mean([self.heads[c] for c in children[b]], axis=0))
            else:
                ends.append(self.heads[b])
        return np.array(starts), np.array(ends)

    def skinning_weights(self, points: np.ndarray, k=4, exponent=2) -> np.ndarray:
        """Inverse-distance-to-segment falloff over the k nearest bones."""
        points = np.atleast_2d(points)
        s, e = self._segments()
        d = _point_segment_distance(points, s, e)    # (n, B)
        w = np.zeros_like(d)
        order = np.argsort(d, axis=1)[:, :k]
        rows = np.arange(len(points))[:, None]
        inv = 1.0 / np.maximum(d[rows, order], 1e-9) ** exponent
        w[rows, order] = inv
        return w / w.sum(axis=1, keepdims=True)

    def sample_surface(self, n: int, seed=0) -> list[SurfaceSample]:
        """Deterministic capsule-surface samples with analytic skinning weights."""
        if n < 1:
            raise ValueError("n must be >= 1")
        rng = np.random.default_rng(seed)
        s, e = self._segments()
        lengths = np.linalg.norm(e - s, axis=1)
        areas = 2.0 * np.pi * self.radii * lengths + 4.0 * np.pi * self.radii ** 2
        probs = areas / areas.sum()
        bones = rng.choice(self.bone_count, size=n, p=probs)
        ts = rng.uniform(0.0, 1.0, size=n)
        dirs = rng.normal(size=(n, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        centers = s[bones] + ts[:, None] * (e[bones] - s[bones])
        pts = centers + dirs * self.radii[bones][:, None]
        weights = self.skinning_weights(pts)
        return [SurfaceSample(p, w) for p, w in zip(pts, weights)]

    # -- file formats ------------------------------------------------------

    def to_json(self) -> dict:
        part_of = {}
        for part, bones in self.parts.items():
            for b in bones:
                part_of[b] = part
        return {"bones": [
            {"name": self.names[b], "parent": int(self.parents[b]),
             "head": self.heads[b].tolist(), "radius": float(self.radii[b]),
             "part": part_of[b]}
            for b in range(self.bone_count)
        ]}

    @classmethod
    def from_json(cls, doc: dict) -> "Rig":
        bones = doc["bones"]
        parts = {p: [] for p in PARTS}
        for i, b in enumerate(bones):
            parts[b["part"]].append(i)
        return cls(
            parents=[b["parent"] for b in bones],
            heads=[b["head"] for b in bones],
            radii=[b["radius"] for b in bones],
            parts=parts,
            names=[b["name"] for b in bones],
        )


def _point_segment_distance(points, starts, ends) -> np.ndarray:
    """Distances from each point to each segment: (n, B)."""
    d = ends - starts                                      # (B, 3)
    l2 = np.maximum((d * d).sum(axis=1), 1e-18)
    diff = points[:, None, :] - starts[None, :, :]          # (n, B, 3)
    t = np.clip((diff * d[None]).sum(axis=2) / l2, 0.0, 1.0)
    proj = starts[None] + t[..., None] * d[None]
    return np.linalg.norm(points[:, None, :] - proj, axis=2)


def lbs_transform(points: np.ndarray, weights: np.ndarray, bone_ts: np.ndarray) -> np.ndarray:
    """Blend-skin points: x_o = sum_b w_b B_b x_c in homogeneous coordinates."""
    points = np.atleast_2d(points)
    weights = np.atleast_2d(weights)
    err = np.abs(weights.sum(axis=1) - 1.0)
    if np.any(err > 1e-6) or np.any(weights < -1e-12):
        raise ValueError("skinning weight rows must lie on the simplex")
    # T = I + sum_b w_b (B_b - I): exact identity when all B_b are identity
    delta = bone_ts - np.eye(4)
    T = np.eye(4) + np.einsum("nb,bij->nij", weights, delta)
    homo = np.concatenate([points, np.ones((len(points), 1))], axis=1)
    out = np.einsum("nij,nj->ni", T, homo)
    return out[:, :3]


def blend_transforms(weights: np.ndarray, bone_ts: np.ndarray) -> np.ndarray:
    """Weight-blended 4x4 transforms, exact identity at identity bones."""
    delta = bone_ts - np.eye(4)
    return np.eye(4) + np.einsum("nb,bij->nij", np.atleast_2d(weights), delta)


# -- pose track file format ---------------------------------------------------

def save_pose_track(path, poses: list[Pose]):
    doc = [{"frame": p.frame, "root_t": p.root_t.tolist(), "rots": p.rots.tolist()}
           for p in poses]
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_pose_track(path) -> list[Pose]:
    with open(path) as fh:
        doc = json.load(fh)
    return [Pose(np.array(d["rots"]), np.array(d["root_t"]), int(d["frame"])) for d in doc]
