"""Training loop: per-step single-view forward, weighted loss, Adam with
per-group learning rates, CSV logging, periodic checkpoints, and a
non-finite-loss abort that retains the last good checkpoint.
"""

from __future__ import annotations

import time
from pathlib import Path

import numpy as np

from .config import RunConfig
from .dataset import Dataset
from .losses import PerceptualNet, loss_l1, loss_mask, loss_skin, loss_total
from .metrics import psnr, ssim
from .pipeline import AvatarModel

CSV_HEADER = "step,l1,mask,percep,skin,total,psnr"


class TrainAbort(RuntimeError):
    """Raised when a step produces non-finite values; training state at the
    last good checkpoint is preserved on disk."""


def _fmt(x: float) -> str:
    return f"{float(x):.10g}"


def skin_sample_pool(rig, n=4096, seed=0):
    samples = rig.sample_surface(n, seed=seed)
    pts = np.array([s.rest_pos for s in samples])
    w = np.array([s.weights for s in samples])
    return pts, w


def train(dataset: Dataset, config: RunConfig, out_dir=None,
          model: AvatarModel | None = None):
    """Optimize the model on the dataset; returns (model, csv_rows).

    Writes `loss.csv`, periodic `ckpt_<step>.ckpt`, and `final.ckpt` under
    `out_dir` when given. Deterministic for a fixed seed.
    """
    o, lo = config.optim, config.loss
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(o.seed)
    if model is None:
        model = AvatarModel(dataset.rig, config, dataset.n_frames, seed=o.seed)
    views = dataset.training_views(config.data.train_cams)
    pool_pts, pool_w = skin_sample_pool(dataset.rig, seed=o.seed + 1)
    percep = PerceptualNet(lo.percep_seed)
    background = np.asarray(config.output.background, dtype=np.float64)
    decay_at = int(np.ceil(o.iterations * lo.skin_decay_frac))

    rows = [CSV_HEADER]
    t_start = time.monotonic()

    # wall-clock timing goes to a sidecar file, keeping checkpoints
    # byte-deterministic across runs with the same seed
    def checkpoint(path, step):
        model.save(path, step=step)

    if out is not None:
        checkpoint(out / "ckpt_000000.ckpt", 0)
    last_good = 0

    for step in range(1, o.iterations + 1):
        ci, frame, cam = views[rng.integers(len(views))]
        clip = dataset.clips[ci]
        gt_img = dataset.image(ci, cam, frame)
        gt_mask = dataset.mask(ci, cam, frame)
        gfid = dataset.global_frame(ci, frame)
        sel = rng.choice(len(pool_pts), size=lo.skin_samples, replace=False)

        lam3 = lo.lambda_skin * (lo.skin_decay_factor if step > decay_at else 1.0)
        try:
            outs = model.forward_frame(clip.poses, frame, dataset.cameras[cam],
                                       global_frame=gfid, background=background)
            l1 = loss_l1(outs["img"], gt_img, gt_mask if lo.mask_l1 else None)
            lm = loss_mask(outs["alpha"], gt_mask)
            lp = percep(outs["img"], gt_img)
            pred_w = model.skinning(_as_tensor(pool_pts[sel]))
            ls = loss_skin(pred_w, pool_w[sel])
            total = loss_total(l1, lm, lp, ls,
                               weights=(lo.lambda_mask, lo.lambda_percep, lam3))
            if lo.lambda_deform > 0.0:
                # keep static corrections out of the deformation head (see
                # LossConfig.lambda_deform)
                reg = ((outs["dx"] * outs["dx"]).mean()
                       + (outs["dq"] * outs["dq"]).mean()
                       + (outs["ds"] * outs["ds"]).mean())
                total = total + reg * lo.lambda_deform
            total.backward()
            model.store.adam_step(lr=o.lr_networks, beta1=o.beta1, beta2=o.beta2,
                                  lr_for=model.lr_for)
        except FloatingPointError as exc:
            if out is not None:
                with open(out / "loss.csv", "w") as fh:
                    fh.write("\n".join(rows) + "\n")
            raise TrainAbort(
                f"non-finite value at step {step} (last good checkpoint at "
                f"step {last_good}): {exc}") from exc

        if step % o.log_every == 0 or step == o.iterations:
            p = psnr(np.clip(outs["img"].data, 0.0, 1.0), gt_img)
            rows.append(",".join([str(step)] + [_fmt(v) for v in (
                l1.data, lm.data, lp.data, ls.data, total.data, p)]))
        if out is not None and o.checkpoint_every > 0 and step % o.checkpoint_every == 0:
            checkpoint(out / f"ckpt_{step:06d}.ckpt", step)
            last_good = step

    if out is not None:
        checkpoint(out / "final.ckpt", o.iterations)
        with open(out / "loss.csv", "w") as fh:
            fh.write("\n".join(rows) + "\n")
        import json
        with open(out / "timing.json", "w") as fh:
            json.dump({"iterations": o.iterations,
                       "elapsed_s": round(time.monotonic() - t_start, 3)}, fh)
    return model, rows


def _as_tensor(x):
    from .autodiff import Tensor
    return Tensor(np.asarray(x, dtype=np.float64))


def evaluate_views(model: AvatarModel, dataset: Dataset, cam: int,
                   frames=None, use_mean_latent=False, background=None):
    """Mean PSNR/SSIM of rendered views against ground truth.

    `frames` is a list of (clip_index, local_frame); defaults to every 10th
    frame of every clip. Novel-pose protocol (`use_mean_latent`) shades with
    the mean per-frame latent.
    """
    if frames is None:
        frames = [(ci, f) for ci, c in enumerate(dataset.clips)
                  for f in range(0, c.frames, 10)]
    bg = np.asarray(background if background is not None
                    else model.config.output.background, dtype=np.float64)
    psnrs, ssims = [], []
    for ci, f in frames:
        gfid = None if use_mean_latent else dataset.global_frame(ci, f)
        img, _ = model.render_frame(dataset.clips[ci].poses, f,
                                    dataset.cameras[cam], global_frame=gfid,
                                    background=bg)
        gt = dataset.image(ci, cam, f)
        img = np.clip(img, 0.0, 1.0)
        psnrs.append(psnr(img, gt))
        ssims.append(ssim(img, gt))
    return float(np.mean(psnrs)), float(np.mean(ssims))
