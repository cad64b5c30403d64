"""Synthetic sequence generator: segment validation, the exact-whole-turn
terminal-yaw guarantee (identical tails across clips), and the baked dataset
structure consumed through the Dataset loader."""

import json

import numpy as np
import pytest

from motiongs.dataset import Dataset
from motiongs.rig import Rig
from motiongs.synth import (IDENTICAL_TAIL_START, SPINSTOP_CLIPS,
                            SPINSTOP_FRAMES, build_gt_scene, default_cameras,
                            generate_motion)


def test_segment_sum_validated():
    with pytest.raises(ValueError):
        generate_motion([{"type": "hold", "frames": 5}], 10)
    with pytest.raises(ValueError):
        generate_motion([{"type": "hold", "frames": 5},
                         {"type": "hold", "frames": 5, "start": 4}], 10)
    with pytest.raises(ValueError):
        generate_motion([{"type": "warp", "frames": 4}], 4)


def test_hold_is_static():
    poses = generate_motion([{"type": "hold", "frames": 6}], 6)
    for p in poses:
        assert np.array_equal(p.rots, poses[0].rots)
        assert np.array_equal(p.root_t, np.zeros(3))


def test_spin_whole_turns_restores_yaw_exactly():
    """Integer-turn spins land back on the starting yaw bit-for-bit."""
    for turns in (1.0, 2.0, -1.0, 3.0):
        poses = generate_motion([{"type": "hold", "frames": 2},
                                 {"type": "spin", "frames": 30, "turns": turns,
                                  "ramp": 5},
                                 {"type": "hold", "frames": 3}], 35)
        assert poses[-1].rots[0, 1] == poses[0].rots[0, 1] == 0.0


def test_spin_fractional_turns():
    poses = generate_motion([{"type": "spin", "frames": 20, "turns": 1.5,
                              "ramp": 4}], 20)
    assert np.isclose(poses[-1].rots[0, 1], np.pi, atol=1e-12) or \
        np.isclose(poses[-1].rots[0, 1], -np.pi, atol=1e-12)


def test_spin_monotone_during_ramp():
    poses = generate_motion([{"type": "spin", "frames": 40, "turns": 1.0,
                              "ramp": 8}], 40)
    # unwrapped yaw must increase monotonically for a positive spin
    yaw = np.unwrap([p.rots[0, 1] for p in poses])
    assert np.all(np.diff(yaw) > 0)


def test_sway_returns_to_origin():
    poses = generate_motion([{"type": "sway", "frames": 20, "amp": 0.05},
                             {"type": "hold", "frames": 5}], 25)
    assert np.array_equal(poses[-1].root_t, np.zeros(3))
    assert max(abs(p.root_t[0]) for p in poses) > 0.01


def test_spinstop_terminal_tails_bit_identical():
    """The defining dataset property: after the stop, clipA and clipB poses
    agree bit-for-bit even though the spins differed."""
    pa = generate_motion(SPINSTOP_CLIPS["clipA"], SPINSTOP_FRAMES)
    pb = generate_motion(SPINSTOP_CLIPS["clipB"], SPINSTOP_FRAMES)
    assert len(pa) == len(pb) == SPINSTOP_FRAMES
    for f in range(IDENTICAL_TAIL_START, SPINSTOP_FRAMES):
        assert np.array_equal(pa[f].rots, pb[f].rots)
        assert np.array_equal(pa[f].root_t, pb[f].root_t)
    # and the spin phase itself genuinely differs
    mid = SPINSTOP_FRAMES // 2
    assert not np.array_equal(pa[mid].rots, pb[mid].rots)


def test_default_cameras_geometry():
    cams = default_cameras(3, 64, 64)
    target = np.array([0.0, 1.0, 0.0])
    for cam in cams:
        eye = -cam.rotation.T @ cam.translation
        assert np.isclose(np.linalg.norm(eye - target), 3.0, atol=1e-9)
        # optical axis passes through the target
        z = cam.rotation @ (target - eye)
        assert np.allclose(z[:2], 0.0, atol=1e-9) and z[2] > 0


def test_build_gt_scene_shapes(rng):
    rig = Rig()
    cloud, rgb, body_w, cloth_rest, cloth_w = build_gt_scene(rig, 100, 20, seed=0)
    assert cloud.count == 120
    assert rgb.shape == (120, 3)
    assert np.all(rgb >= 0) and np.all(rgb <= 1)
    assert body_w.shape == (100, 24)
    assert cloth_rest.shape == (20, 3)
    assert np.allclose(cloth_w.sum(axis=1), 1.0)


def test_baked_dataset_structure(tiny_dataset_dir):
    root = tiny_dataset_dir
    manifest = json.loads((root / "manifest.json").read_text())
    assert manifest["version"] == 1
    assert {c["name"] for c in manifest["clips"]} == {"clipA", "clipB"}
    for clip in manifest["clips"]:
        cdir = root / clip["dir"]
        assert (cdir / "poses.json").exists()
        for cam in range(2):
            frames = sorted((cdir / "frames" / f"cam{cam}").glob("*.png"))
            masks = sorted((cdir / "masks" / f"cam{cam}").glob("*.png"))
            assert len(frames) == len(masks) == clip["frames"]


def test_dataset_loader_roundtrip(tiny_dataset):
    ds = tiny_dataset
    assert len(ds.clips) == 2
    assert len(ds.cameras) == 2
    assert ds.n_frames == sum(c.frames for c in ds.clips)
    a = ds.clip_index("clipA")
    img = ds.image(a, 0, 0)
    assert img.shape == (48, 48, 3)
    assert img.dtype == np.float64
    assert np.all(img >= 0) and np.all(img <= 1)
    mask = ds.mask(a, 0, 0)
    assert mask.shape == (48, 48)
    assert set(np.unique(mask)) <= {0.0, 1.0}
    assert mask.sum() > 0
    pose = ds.pose(a, 3)
    assert pose.rots.shape == (24, 3)
    # global frame ids are contiguous across clips
    assert ds.global_frame(ds.clip_index("clipB"), 0) == ds.clips[0].frames


def test_masks_cover_foreground(tiny_dataset):
    """Rendered-alpha masks mark the subject: masked pixels differ from the
    background, unmasked ones are the black background."""
    a = tiny_dataset.clip_index("clipA")
    img = tiny_dataset.image(a, 0, 0)
    mask = tiny_dataset.mask(a, 0, 0)
    bg = img[mask == 0]
    assert np.mean(np.abs(bg)) < 0.02
    assert img[mask == 1].mean() > 0.05
