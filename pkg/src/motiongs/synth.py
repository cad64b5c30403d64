"""Synthetic multi-view sequence generator.

A scripted pose track (spin / hold / sway / arm-flap segments) drives the
capsule rig; the cloth proxy is simulated over the full track; ground truth
is baked by splatting a known Gaussian configuration (body surface samples +
cloth particles) through the project's own forward renderer.

Dataset layout (per clip directory): poses.json, frames/<cam>/<frame>.png,
masks/<cam>/<frame>.png; shared cameras.json and manifest.json at the root.
"""

from __future__ import annotations

import json
import shutil
from pathlib import Path

import numpy as np

from .camera import look_at, save_mask_png, save_png
from .cloth import ClothParams, simulate, skirt_particles
from .gaussians import GaussianCloud, mean_nn_distance
from .render import render_cloud
from .rig import PARTS, Pose, Rig, lbs_transform, save_pose_track

DATASET_VERSION = 1
FPS = 30


def _wrap_angle(a):
    return (a + np.pi) % (2.0 * np.pi) - np.pi


def _ease(t):
    """Cubic smoothstep on [0, 1]."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _envelope(u, ramp=0.25):
    """Smooth on/off window: 0 at u=0 and u=1 with zero slope, 1 inside."""
    return _ease(u / ramp) * _ease((1.0 - u) / ramp)


def generate_motion(segments: list[dict], frames: int, bone_count=24) -> list[Pose]:
    """Scripted pose track; segment types: hold, spin, sway, arm-flap.

    Segments are consumed in order and must sum to `frames`; explicit
    `start` keys are validated against the running offset. Spin segments
    take either a constant rate `omega` (rad/s; yaw advances by omega/fps
    per frame) or a whole-segment eased `turns` count whose terminal yaw is
    snapped so integer turns land back exactly on the starting yaw.
    Oscillating segments are windowed by a smooth envelope, keeping the
    track C^1-continuous across segment boundaries.
    """
    total = 0
    for seg in segments:
        if "start" in seg and seg["start"] != total:
            raise ValueError(f"overlapping or gapped segment at frame {seg['start']}")
        total += int(seg["frames"])
    if total != frames:
        raise ValueError(f"segment durations sum to {total}, expected {frames}")

    yaw = 0.0
    poses = []
    rots = np.zeros((bone_count, 3))
    root_t = np.zeros(3)
    f_global = 0
    for seg in segments:
        n = int(seg["frames"])
        kind = seg["type"]
        yaw0 = yaw
        spin_profile = None
        if kind == "spin" and "turns" in seg:
            # constant angular speed with smooth ramps at both ends; the
            # normalized cumulative profile reaches 1 exactly at the last frame
            r = int(seg.get("ramp", 10))
            up = _ease(np.minimum((np.arange(n) + 1.0) / max(r, 1), 1.0))
            down = _ease(np.minimum((n - np.arange(n)) / max(r, 1), 1.0))
            w = up * down
            spin_profile = np.cumsum(w) / w.sum()
        for i in range(n):
            u = (i + 1) / n
            if kind == "hold":
                pass
            elif kind == "spin":
                if spin_profile is not None:
                    turns = float(seg["turns"])
                    if i == n - 1:
                        # land exactly on the fractional part so whole-turn
                        # spins restore the starting yaw bit-for-bit
                        yaw = yaw0 + 2.0 * np.pi * (turns - int(turns))
                    else:
                        yaw = yaw0 + 2.0 * np.pi * turns * spin_profile[i]
                else:
                    yaw += float(seg["omega"]) / FPS
            elif kind == "sway":
                amp = float(seg.get("amp", 0.05))
                cycles = float(seg.get("cycles", 1.0))
                off = amp * np.sin(2.0 * np.pi * cycles * u) * _envelope(u)
                root_t = np.array([off, 0.0, 0.0])
            elif kind == "arm-flap":
                amp = float(seg.get("amp", 0.5))
                cycles = float(seg.get("cycles", 1.0))
                ang = amp * np.sin(2.0 * np.pi * cycles * u) * _envelope(u)
                rots = rots.copy()
                rots[16, 2] = ang     # shoulders
                rots[17, 2] = -ang
            else:
                raise ValueError(f"unknown segment type '{kind}'")
            r = rots.copy()
            r[0, 1] = _wrap_angle(yaw)
            poses.append(Pose(r, root_t.copy(), frame=f_global))
            f_global += 1
        if kind == "sway":
            root_t = np.zeros(3)
        if kind == "arm-flap":
            rots = rots.copy()
            rots[16, 2] = 0.0
            rots[17, 2] = 0.0
    return poses


SPINSTOP_CLIPS = {
    # identical first and last segments; the spins differ in speed and
    # direction but cover whole turns, so post-stop poses match across clips
    # bit-exactly while the cloth proxy arrives in very different states
    "clipA": [
        {"type": "hold", "frames": 15},
        {"type": "sway", "frames": 15, "amp": 0.04, "cycles": 1.0},
        {"type": "spin", "frames": 200, "turns": 2.0, "ramp": 8},
        {"type": "hold", "frames": 10},
    ],
    "clipB": [
        {"type": "hold", "frames": 15},
        {"type": "sway", "frames": 15, "amp": 0.04, "cycles": 1.0},
        {"type": "spin", "frames": 200, "turns": -1.0, "ramp": 8},
        {"type": "hold", "frames": 10},
    ],
}
SPINSTOP_FRAMES = 240
# frames (within each clip) whose poses agree across clips but whose cloth
# state does not; windows over them still reach into the differing history
IDENTICAL_TAIL_START = 230


def default_cameras(n=3, width=256, height=256, distance=3.0, elevation_deg=10.0):
    cams = []
    target = np.array([0.0, 1.0, 0.0])
    for i in range(n):
        yaw = 2.0 * np.pi * i / n
        el = np.deg2rad(elevation_deg)
        eye = target + distance * np.array(
            [np.sin(yaw) * np.cos(el), np.sin(el), np.cos(yaw) * np.cos(el)])
        cams.append(look_at(eye, target, width=width, height=height))
    return cams


def _part_palette():
    return {
        "torso": np.array([0.55, 0.55, 0.8]),
        "left-arm": np.array([0.8, 0.6, 0.4]),
        "right-arm": np.array([0.4, 0.7, 0.5]),
        "legs": np.array([0.35, 0.35, 0.45]),
    }


def build_gt_scene(rig: Rig, n_body: int, n_cloth: int, seed=0):
    """Ground-truth Gaussian configuration: body samples + cloth particles.

    Returns (cloud, rgb, body_weights, cloth_rest, cloth_weights); the cloud
    holds rest positions for body and cloth stacked together.
    """
    rng = np.random.default_rng(seed)
    samples = rig.sample_surface(n_body, seed=seed)
    body_pts = np.array([s.rest_pos for s in samples])
    body_w = np.array([s.weights for s in samples])
    cloth_rest, cloth_w = skirt_particles(rig, n_cloth, seed=seed + 1)

    pts = np.vstack([body_pts, cloth_rest])
    nn = mean_nn_distance(pts)
    ln_s = np.log(np.maximum(nn * 0.9, 1e-4))[:, None].repeat(3, axis=1)
    quats = np.zeros((len(pts), 4))
    quats[:, 0] = 1.0
    sh = np.zeros((len(pts), 3, 4))
    cloud = GaussianCloud(pts, ln_s, quats,
                          np.full(len(pts), 2.2), sh)  # alpha ≈ 0.9

    palette = _part_palette()
    part_color = np.zeros((rig.bone_count, 3))
    for part in PARTS:
        for b in rig.parts[part]:
            part_color[b] = palette[part]
    rgb = body_w @ part_color
    rgb += rng.uniform(-0.05, 0.05, size=rgb.shape)          # mild texture
    rgb = np.clip(rgb + 0.15 * np.sin(body_pts[:, 1:2] * 21.0), 0.05, 0.95)
    cloth_rgb = np.tile(np.array([0.85, 0.25, 0.25]), (n_cloth, 1))
    cloth_rgb[:, 1] += 0.3 * (cloth_rest[:, 1] - 0.45)       # vertical shading
    return cloud, np.vstack([rgb, np.clip(cloth_rgb, 0.0, 1.0)]), body_w, cloth_rest, cloth_w


def bake_clip(rig, clip_dir: Path, poses, cams, cloud, rgb, body_w,
              cloth_rest, cloth_w, cloth_params=None):
    """Render and write one clip's ground truth; returns the frame count."""
    clip_dir = Path(clip_dir)
    clip_dir.mkdir(parents=True, exist_ok=True)
    cloth_states = (simulate(rig, poses, cloth_rest, cloth_w, cloth_params)
                    if len(cloth_rest) else np.zeros((len(poses), 0, 3)))
    n_body = len(body_w)
    save_pose_track(clip_dir / "poses.json", poses)
    for c in range(len(cams)):
        (clip_dir / "frames" / f"cam{c}").mkdir(parents=True, exist_ok=True)
        (clip_dir / "masks" / f"cam{c}").mkdir(parents=True, exist_ok=True)
    for f, pose in enumerate(poses):
        bone_ts = rig.forward_kinematics(pose)
        posed_body = lbs_transform(cloud.positions[:n_body], body_w, bone_ts)
        positions = np.vstack([posed_body, cloth_states[f]])
        for c, cam in enumerate(cams):
            img, alpha = render_cloud(cloud, cam, rgb, positions=positions)
            save_png(clip_dir / "frames" / f"cam{c}" / f"{f:04d}.png", img)
            save_mask_png(clip_dir / "masks" / f"cam{c}" / f"{f:04d}.png", alpha > 0.5)
    return len(poses)


def bake_dataset(out_dir, rig: Rig | None = None, clips: dict | None = None,
                 frames=SPINSTOP_FRAMES, n_body=2000, n_cloth=400, n_cams=3,
                 width=256, height=256, seed=0, subject="spinstop",
                 cloth_params: ClothParams | None = None):
    """Bake a complete multi-clip dataset; returns the manifest dict."""
    out = Path(out_dir)
    if out.exists():
        shutil.rmtree(out)
    out.mkdir(parents=True)
    rig = rig or Rig()
    clips = clips if clips is not None else SPINSTOP_CLIPS
    cams = default_cameras(n_cams, width, height)
    cloud, rgb, body_w, cloth_rest, cloth_w = build_gt_scene(rig, n_body, n_cloth, seed)

    manifest = {"version": DATASET_VERSION, "subject": subject, "fps": FPS,
                "cameras": "cameras.json", "rig": "rig.json", "clips": []}
    with open(out / "cameras.json", "w") as fh:
        json.dump([c.to_json() for c in cams], fh)
    with open(out / "rig.json", "w") as fh:
        json.dump(rig.to_json(), fh)
    for name, segments in clips.items():
        poses = generate_motion(segments, frames, rig.bone_count)
        n = bake_clip(rig, out / name, poses, cams, cloud, rgb, body_w,
                      cloth_rest, cloth_w, cloth_params)
        manifest["clips"].append({"name": name, "dir": name, "frames": n})
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1)
    return manifest
