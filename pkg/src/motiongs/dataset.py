"""Dataset access: manifest-driven loading of cameras, rig, pose tracks, and
lazily cached frames/masks.

Frames across all clips share one global id space in manifest order (clip 0
occupies ids [0, n0), clip 1 [n0, n0+n1), ...), which indexes the per-frame
appearance latents during training.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .camera import Camera, srgb_to_linear
from .rig import Pose, Rig, load_pose_track

# decode table for 8-bit sRGB: identical values to srgb_to_linear(v / 255)
_SRGB_LUT = srgb_to_linear(np.arange(256) / 255.0)


@dataclass
class Clip:
    name: str
    dir: Path
    frames: int
    poses: list


class Dataset:
    def __init__(self, root):
        self.root = Path(root)
        manifest_path = self.root / "manifest.json"
        if not manifest_path.exists():
            raise FileNotFoundError(f"no manifest.json under {self.root}")
        with open(manifest_path) as fh:
            self.manifest = json.load(fh)
        with open(self.root / self.manifest.get("cameras", "cameras.json")) as fh:
            self.cameras = [Camera.from_json(d) for d in json.load(fh)]
        rig_file = self.root / self.manifest.get("rig", "rig.json")
        if rig_file.exists():
            with open(rig_file) as fh:
                self.rig = Rig.from_json(json.load(fh))
        else:
            self.rig = Rig()
        self.clips: list[Clip] = []
        for entry in self.manifest["clips"]:
            cdir = self.root / entry["dir"]
            poses = load_pose_track(cdir / "poses.json")
            if len(poses) != entry["frames"]:
                raise ValueError(
                    f"clip '{entry['name']}': {len(poses)} poses but manifest "
                    f"says {entry['frames']} frames")
            self.clips.append(Clip(entry["name"], cdir, entry["frames"], poses))
        self._offsets = np.concatenate([[0], np.cumsum([c.frames for c in self.clips])])
        self._img_cache: dict[tuple, np.ndarray] = {}
        self._mask_cache: dict[tuple, np.ndarray] = {}

    @property
    def n_frames(self) -> int:
        """Total frame count across clips (the global id space)."""
        return int(self._offsets[-1])

    @property
    def n_cameras(self) -> int:
        return len(self.cameras)

    def clip_index(self, name: str) -> int:
        for i, c in enumerate(self.clips):
            if c.name == name:
                return i
        raise KeyError(f"no clip named '{name}'")

    def global_frame(self, clip: int, local: int) -> int:
        if not 0 <= local < self.clips[clip].frames:
            raise IndexError(f"frame {local} outside clip '{self.clips[clip].name}'")
        return int(self._offsets[clip]) + local

    def pose(self, clip: int, local: int) -> Pose:
        return self.clips[clip].poses[local]

    def _frame_path(self, clip: int, cam: int, local: int, kind: str) -> Path:
        return self.clips[clip].dir / kind / f"cam{cam}" / f"{local:04d}.png"

    def image(self, clip: int, cam: int, local: int) -> np.ndarray:
        """Linear-light H×W×3 float image (cached as uint8 sRGB)."""
        key = (clip, cam, local)
        if key not in self._img_cache:
            path = self._frame_path(clip, cam, local, "frames")
            self._img_cache[key] = np.asarray(Image.open(path).convert("RGB"))
        return _SRGB_LUT[self._img_cache[key]]

    def mask(self, clip: int, cam: int, local: int) -> np.ndarray:
        key = (clip, cam, local)
        if key not in self._mask_cache:
            path = self._frame_path(clip, cam, local, "masks")
            arr = np.asarray(Image.open(path).convert("L")) > 127
            self._mask_cache[key] = arr
        return self._mask_cache[key].astype(np.float64)

    def training_views(self, train_cams) -> list[tuple[int, int, int]]:
        """All (clip, local_frame, cam) tuples over the training cameras."""
        views = []
        for ci, clip in enumerate(self.clips):
            for f in range(clip.frames):
                for cam in train_cams:
                    if not 0 <= cam < self.n_cameras:
                        raise IndexError(f"camera {cam} out of range")
                    views.append((ci, f, cam))
        return views
