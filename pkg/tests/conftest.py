import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for `helpers`

from motiongs import synth
from motiongs.config import RunConfig
from motiongs.dataset import Dataset

TINY_CLIPS = {
    "clipA": [
        {"type": "hold", "frames": 4},
        {"type": "spin", "frames": 14, "turns": 1.0, "ramp": 3},
        {"type": "hold", "frames": 6},
    ],
    "clipB": [
        {"type": "hold", "frames": 4},
        {"type": "spin", "frames": 14, "turns": -1.0, "ramp": 3},
        {"type": "hold", "frames": 6},
    ],
}
TINY_FRAMES = 24


def tiny_config(iterations=3, n_gaussians=60, seed=0):
    cfg = RunConfig()
    cfg.model.n_gaussians = n_gaussians
    cfg.optim.iterations = iterations
    cfg.optim.seed = seed
    cfg.optim.log_every = 1
    cfg.optim.checkpoint_every = 0
    return cfg


@pytest.fixture(scope="session")
def tiny_dataset_dir(tmp_path_factory) -> Path:
    """Small baked dataset: 2 clips x 24 frames x 2 cams at 48x48."""
    out = tmp_path_factory.mktemp("data") / "tiny"
    synth.bake_dataset(out, clips=TINY_CLIPS, frames=TINY_FRAMES,
                       n_body=120, n_cloth=30, n_cams=2, width=48, height=48,
                       seed=0, subject="tiny")
    return out


@pytest.fixture(scope="session")
def tiny_dataset(tiny_dataset_dir) -> Dataset:
    return Dataset(tiny_dataset_dir)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
