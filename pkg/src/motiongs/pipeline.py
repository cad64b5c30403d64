"""End-to-end avatar model: canonical Gaussians + encoder + motion trend +
learned skinning + appearance, composed into a differentiable render of one
(frame, camera) view.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .appearance import ColorNet, FrameLatentTable, canonicalize_view_dir
from .config import RunConfig
from .encoder import LatentboneEncoder
from .gaussians import build_covariance_t, init_from_rig
from .motion import MotionTrendNet, apply_delta, window_indices
from .nn import ParamStore, load_checkpoint, save_checkpoint
from .render import project, rasterize
from .rig import Pose, Rig
from .skinning import SkinningNet, rigid_transform

_BUILD_ID = None


def build_id() -> str:
    """Version plus git-describe suffix when available; cached per process."""
    global _BUILD_ID
    if _BUILD_ID is None:
        from . import __version__
        tag = __version__
        try:
            import subprocess
            out = subprocess.run(
                ["git", "describe", "--always", "--dirty"],
                capture_output=True, text=True, timeout=5,
                cwd=str(__import__("pathlib").Path(__file__).parent))
            if out.returncode == 0 and out.stdout.strip():
                tag = f"{tag}+{out.stdout.strip()}"
        except Exception:
            pass
        _BUILD_ID = tag
    return _BUILD_ID


class AvatarModel:
    """All trainable state for one subject plus the differentiable forward."""

    def __init__(self, rig: Rig, config: RunConfig, n_frames: int, seed=0):
        self.rig = rig
        self.config = config
        self.n_frames = n_frames
        m, ab = config.model, config.ablation
        rng = np.random.default_rng(seed)
        self.store = ParamStore()

        cloud = init_from_rig(rig, m.n_gaussians, seed=seed, sh_degree=m.sh_degree)
        for name, arr in cloud.as_arrays().items():
            self.store.add(name, arr)

        self.encoder = LatentboneEncoder(
            self.store, rig, rng, latent_dim=m.clothes_latent_dim,
            branch_dim=m.branch_dim, fusion_hidden=m.fusion_hidden,
            out_dim=m.feature_dim, no_part_segmentation=ab.no_part_segmentation,
            no_clothes_latent=ab.no_clothes_latent)
        self.motion = MotionTrendNet(
            self.store, rng, feature_dim=m.feature_dim, hidden_dim=m.lstm_hidden,
            decoder_hidden=m.decoder_hidden, pe_bands=m.pe_bands,
            dx_clamp=m.dx_clamp, no_lstm=ab.no_lstm)
        self.skinning = SkinningNet(
            self.store, rng, bone_count=rig.bone_count, hidden=m.skin_hidden,
            pe_bands=m.pe_bands)
        self.color = ColorNet(
            self.store, rng, sh_degree=m.sh_degree, dir_bands=m.dir_bands,
            latent_dim=m.frame_latent_dim, hidden=m.color_hidden)
        self.latents = FrameLatentTable(
            self.store, n_frames, dim=m.frame_latent_dim, rng=rng)

    # -- parameter groups ---------------------------------------------------

    def lr_for(self, name: str) -> float:
        o = self.config.optim
        if name == "gaussians/positions":
            return o.lr_positions
        if name.startswith("gaussians/"):
            return o.lr_gaussians
        if name == "latentbone/z_c" or name.startswith("frame_latents/"):
            return o.lr_latents
        return o.lr_networks

    # -- forward ------------------------------------------------------------

    def encode_window(self, poses: list[Pose], frame: int) -> list[Tensor]:
        idxs = window_indices(frame, self.config.model.t, self.config.model.s)
        feats = {}
        for i in idxs:
            if i not in feats:
                feats[i] = self.encoder.encode_pose(poses[i])
        return [feats[i] for i in idxs]

    def forward_frame(self, poses: list[Pose], frame: int, cam,
                      global_frame=None, background=None,
                      bypass_deform=False, backend=None):
        """Differentiable render of one view.

        Returns a dict with tape tensors `img`, `alpha`, `weights` (learned
        skinning weights of the deformed Gaussians) plus intermediates.
        With `bypass_deform` the canonical cloud is rendered directly (no
        deformation, no skinning); appearance inputs are computed the same
        way, with identity view-direction canonicalization.
        """
        positions = self.store["gaussians/positions"]
        quats = self.store["gaussians/quats"]
        log_scales = self.store["gaussians/log_scales"]
        opacity = self.store["gaussians/opacity_logits"].sigmoid()
        sh = self.store["gaussians/sh"]

        seq = self.encode_window(poses, frame)
        dx, dq, ds, f_mt = self.motion.predict_delta(seq, positions)

        weights = None
        if bypass_deform:
            x_o, cov_o = positions, build_covariance_t(quats, log_scales)
            t_lin = None
        else:
            x_e, q_e, ln_s_e = apply_delta(positions, quats, log_scales, dx, dq, ds)
            cov_e = build_covariance_t(q_e, ln_s_e)
            weights = self.skinning(x_e)
            bone_ts = self.rig.forward_kinematics(poses[frame])
            x_o, cov_o, t_lin = rigid_transform(x_e, cov_e, weights, bone_ts)

        d_raw = x_o - Tensor(cam.center())
        if t_lin is None:
            d_hat = ad.normalize(d_raw, axis=-1)
        else:
            d_hat = canonicalize_view_dir(d_raw, t_lin)
        z_r = self.latents.get(global_frame)
        rgb = self.color.shade(sh, d_hat, f_mt, z_r)

        proj = project(x_o, cov_o, cam)
        img, alpha = rasterize(proj["mean2d"], proj["cov2d"], rgb, opacity,
                               proj["depth"], proj["valid"], cam,
                               background=background, backend=backend)
        return {"img": img, "alpha": alpha, "weights": weights,
                "rgb": rgb, "f_mt": f_mt, "x_o": x_o,
                "dx": dx, "dq": dq, "ds": ds}

    def render_frame(self, poses, frame, cam, global_frame=None,
                     background=None, backend=None) -> tuple[np.ndarray, np.ndarray]:
        """Forward-only render; returns numpy (image, alpha)."""
        out = self.forward_frame(poses, frame, cam, global_frame=global_frame,
                                 background=background, backend=backend)
        return out["img"].data.copy(), out["alpha"].data.copy()

    # -- checkpointing ------------------------------------------------------

    def save(self, path, step=0, extra_meta=None):
        meta = {"config": self.config.to_dict(), "n_frames": self.n_frames,
                "rig": self.rig.to_json(), "step": step,
                "build_id": build_id(),
                "mean_frame_latent": self.latents.mean_latent().data.tolist()}
        if extra_meta:
            meta.update(extra_meta)
        save_checkpoint(path, self.store.state_arrays(), meta)

    @classmethod
    def load(cls, path) -> tuple["AvatarModel", dict]:
        arrays, meta = load_checkpoint(path)
        config = RunConfig.from_dict(meta["config"])
        rig = Rig.from_json(meta["rig"])
        model = cls(rig, config, int(meta["n_frames"]))
        model.store.load_arrays(arrays)
        return model, meta
