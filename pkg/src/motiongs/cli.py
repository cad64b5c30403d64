"""Command-line entry points: synth, train, render, eval, gradcheck.

Exit codes: 0 success, 2 usage/config error, 3 numeric abort, 4 checkpoint
version mismatch.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_VERSION = 4


def _set_threads(n):
    if n is None:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def _parse_frames(spec: str, n: int) -> list[int]:
    if spec in (None, "all"):
        return list(range(n))
    parts = spec.split(":")
    if len(parts) == 1:
        return [int(parts[0])]
    start = int(parts[0]) if parts[0] else 0
    end = int(parts[1]) if parts[1] else n
    step = int(parts[2]) if len(parts) > 2 and parts[2] else 1
    return list(range(start, end, step))


def cmd_synth(args) -> int:
    import numpy as np
    from . import synth
    if args.builtin is None and args.script is None:
        print("error: one of --builtin or --script is required", file=sys.stderr)
        return EXIT_USAGE
    if args.builtin is not None:
        if args.builtin != "spinstop":
            print(f"error: unknown builtin '{args.builtin}'", file=sys.stderr)
            return EXIT_USAGE
        clips, frames, subject = synth.SPINSTOP_CLIPS, synth.SPINSTOP_FRAMES, "spinstop"
    else:
        try:
            with open(args.script) as fh:
                doc = json.load(fh)
            clips = doc["clips"]
            frames = int(doc["frames"])
            subject = doc.get("subject", Path(args.script).stem)
        except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
            print(f"error: invalid script: {exc}", file=sys.stderr)
            return EXIT_USAGE
    try:
        manifest = synth.bake_dataset(
            args.out, clips=clips, frames=frames,
            seed=0 if args.seed is None else args.seed,
            subject=subject, n_body=args.body, n_cloth=args.cloth,
            n_cams=args.cams, width=args.size, height=args.size)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    total = sum(c["frames"] for c in manifest["clips"])
    print(f"dataset '{manifest['subject']}' written to {args.out}: "
          f"{len(manifest['clips'])} clips, {total} frames, "
          f"{args.cams} cameras, {args.size}x{args.size}")
    return EXIT_OK


def _load_config(args):
    from .config import RunConfig
    if args.config:
        cfg = RunConfig.from_json_file(args.config)
    else:
        cfg = RunConfig()
    return cfg


def cmd_train(args) -> int:
    from .config import ConfigError
    from .dataset import Dataset
    from .train import TrainAbort, train
    try:
        cfg = _load_config(args)
        if args.iters is not None:
            cfg.optim.iterations = args.iters
        if args.seed is not None:
            cfg.optim.seed = args.seed
        for flag in args.ablate or []:
            setattr(cfg.ablation, flag, True)
        cfg.data.dir = args.data
        # the output directory is deliberately not recorded in the config:
        # checkpoints stay byte-identical across same-seed runs in different dirs
        cfg.validate()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.print_config:
        print(cfg.to_json())
        return EXIT_OK
    dataset = Dataset(args.data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.json", "w") as fh:
        fh.write(cfg.to_json() + "\n")
    try:
        train(dataset, cfg, out_dir=out)
    except TrainAbort as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"training complete: {cfg.optim.iterations} steps, output in {out}")
    return EXIT_OK


def cmd_render(args) -> int:
    import numpy as np
    from .camera import save_pfm, save_png
    from .dataset import Dataset
    from .pipeline import AvatarModel
    try:
        model, meta = AvatarModel.load(args.checkpoint)
    except ValueError as exc:
        if "version" in str(exc):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_VERSION
        raise
    dataset = Dataset(args.data)
    ci = dataset.clip_index(args.clip) if args.clip else 0
    clip = dataset.clips[ci]
    frames = _parse_frames(args.frames, clip.frames)
    cams = [args.cam] if args.cam is not None else list(range(dataset.n_cameras))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    bg = np.asarray(model.config.output.background, dtype=np.float64)
    for f in frames:
        gfid = None if args.novel else dataset.global_frame(ci, f)
        for cam in cams:
            img, _ = model.render_frame(clip.poses, f, dataset.cameras[cam],
                                        global_frame=gfid, background=bg)
            img = np.clip(img, 0.0, 1.0)
            stem = f"{clip.name}_cam{cam}_{f:04d}"
            save_png(out / f"{stem}.png", img)
            if args.pfm:
                save_pfm(out / f"{stem}.pfm", img)
    print(f"rendered {len(frames) * len(cams)} views to {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    import numpy as np
    from .camera import load_png
    from .metrics import psnr, ssim
    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    pred_files = {p.relative_to(pred_dir).as_posix() for p in pred_dir.rglob("*.png")}
    gt_files = {p.relative_to(gt_dir).as_posix() for p in gt_dir.rglob("*.png")}
    if pred_files != gt_files:
        missing = sorted(gt_files - pred_files)
        extra = sorted(pred_files - gt_files)
        for name in missing:
            print(f"missing in pred: {name}", file=sys.stderr)
        for name in extra:
            print(f"missing in gt: {name}", file=sys.stderr)
        return EXIT_USAGE
    if not pred_files:
        print("error: no images found", file=sys.stderr)
        return EXIT_USAGE
    per_frame = {}
    for name in sorted(pred_files):
        a = load_png(pred_dir / name)
        b = load_png(gt_dir / name)
        per_frame[name] = {"psnr": psnr(a, b), "ssim": ssim(a, b)}
    doc = {"frames": per_frame,
           "mean": {"psnr": float(np.mean([v["psnr"] for v in per_frame.values()])),
                    "ssim": float(np.mean([v["ssim"] for v in per_frame.values()]))}}
    text = json.dumps(doc, indent=1, sort_keys=True)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_all
    lines, ok = run_all(seed=args.seed or 0)
    print("\n".join(lines))
    return EXIT_OK if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="motiongs",
        description="Animatable-avatar pipeline: synthesize data, train, "
                    "render, evaluate, and verify gradients.")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap numeric library thread counts")
    parser.add_argument("--seed", type=int, default=None,
                        help="global seed default (subcommand --seed overrides)")
    parser.add_argument("--config", default=None,
                        help="global run-config default (train --config overrides)")
    sub = parser.add_subparsers(dest="command", required=True)
    # subcommand flags use SUPPRESS defaults so an absent flag does not
    # clobber the global value parsed before the subcommand name
    sup = argparse.SUPPRESS

    p = sub.add_parser("synth", help="generate a synthetic multi-view dataset")
    p.add_argument("--builtin", help="builtin benchmark name (spinstop)")
    p.add_argument("--script", help="JSON motion script path")
    p.add_argument("-o", "--out", required=True, help="output dataset directory")
    p.add_argument("--seed", type=int, default=sup)
    p.add_argument("--body", type=int, default=2000, help="body Gaussian count")
    p.add_argument("--cloth", type=int, default=400, help="cloth particle count")
    p.add_argument("--cams", type=int, default=3)
    p.add_argument("--size", type=int, default=256, help="image width/height")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the avatar model")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", default=sup, help="JSON run-config path")
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--seed", type=int, default=sup)
    p.add_argument("--ablate", action="append",
                   choices=["no_lstm", "no_clothes_latent", "no_part_segmentation"])
    p.add_argument("--print-config", action="store_true",
                   help="print the effective config and exit")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("render", help="render frames from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="dataset dir providing poses/cameras")
    p.add_argument("--clip", default=None)
    p.add_argument("--cam", type=int, default=None)
    p.add_argument("--frames", default="all", help="frame spec: N | start:end[:step] | all")
    p.add_argument("-o", "--out", required=True)
    p.add_argument("--novel", action="store_true",
                   help="novel-pose protocol: shade with the mean frame latent")
    p.add_argument("--pfm", action="store_true", help="also write linear PFM images")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("eval", help="PSNR/SSIM between two image directories")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("-o", "--out", help="metrics JSON output path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=sup)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _set_threads(args.threads)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
