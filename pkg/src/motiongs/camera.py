"""Pinhole camera model and image file I/O (PNG sRGB, PFM linear)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from PIL import Image


@dataclass
class Camera:
    W: np.ndarray            # world-to-camera 4x4, camera looks down +z
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    near: float = 0.05
    far: float = 50.0

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64).reshape(4, 4)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not self.near < self.far:
            raise ValueError("near plane must be closer than far plane")

    @property
    def rotation(self) -> np.ndarray:
        return self.W[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.W[:3, 3]

    def center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.rotation.T @ self.translation

    def to_json(self) -> dict:
        return {"W": self.W.reshape(-1).tolist(), "fx": self.fx, "fy": self.fy,
                "cx": self.cx, "cy": self.cy, "width": self.width, "height": self.height}

    @classmethod
    def from_json(cls, doc: dict) -> "Camera":
        return cls(np.array(doc["W"]).reshape(4, 4), doc["fx"], doc["fy"],
                   doc["cx"], doc["cy"], int(doc["width"]), int(doc["height"]))


def look_at(eye, target, up=(0.0, 1.0, 0.0), fov_deg=45.0, width=256, height=256) -> Camera:
    """Camera at `eye` looking at `target`; +z is the viewing direction."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    fwd = fwd / np.linalg.norm(fwd)
    right = np.cross(fwd, np.asarray(up, dtype=np.float64))
    right = right / np.linalg.norm(right)
    down = np.cross(fwd, right)
    R = np.stack([right, down, fwd])         # rows: camera axes in world coords
    W = np.eye(4)
    W[:3, :3] = R
    W[:3, 3] = -R @ eye
    f = 0.5 * width / np.tan(np.deg2rad(fov_deg) / 2.0)
    return Camera(W, f, f, width / 2.0, height / 2.0, width, height)


# -- color transfer and file formats ------------------------------------------

def linear_to_srgb(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return np.where(x <= 0.0031308, 12.92 * x, 1.055 * x ** (1.0 / 2.4) - 0.055)


def srgb_to_linear(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return np.where(x <= 0.04045, x / 12.92, ((x + 0.055) / 1.055) ** 2.4)


def save_png(path, img_linear: np.ndarray):
    """Write a linear [0,1] H×W×3 image as 8-bit sRGB PNG."""
    u8 = np.round(linear_to_srgb(img_linear) * 255.0).astype(np.uint8)
    Image.fromarray(u8, mode="RGB").save(path)


def load_png(path) -> np.ndarray:
    """Read an 8-bit sRGB PNG back to linear [0,1] float."""
    u8 = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64)
    return srgb_to_linear(u8 / 255.0)


def save_mask_png(path, mask: np.ndarray):
    Image.fromarray((np.asarray(mask) > 0.5).astype(np.uint8) * 255, mode="L").save(path)


def load_mask_png(path) -> np.ndarray:
    return (np.asarray(Image.open(path).convert("L"), dtype=np.float64) / 255.0 > 0.5).astype(np.float64)


def save_pfm(path, img: np.ndarray):
    """Float PFM, linear values, little-endian, bottom-to-top rows."""
    img = np.asarray(img, dtype=np.float32)
    color = img.ndim == 3
    with open(path, "wb") as fh:
        fh.write(b"PF\n" if color else b"Pf\n")
        fh.write(f"{img.shape[1]} {img.shape[0]}\n".encode())
        fh.write(b"-1.0\n")
        fh.write(np.flipud(img).tobytes())


def load_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        kind = fh.readline().strip()
        w, h = map(int, fh.readline().split())
        scale = float(fh.readline())
        data = np.frombuffer(fh.read(), dtype="<f4" if scale < 0 else ">f4")
    img = data.reshape(h, w, 3) if kind == b"PF" else data.reshape(h, w)
    return np.flipud(img).astype(np.float64)
