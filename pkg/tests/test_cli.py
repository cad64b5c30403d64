"""Command-line interface: exit codes (0 success, 2 usage/config, 4 version
mismatch), the synth/train/render/eval happy path on a tiny dataset, and
global-flag precedence."""

import json
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from conftest import TINY_CLIPS, TINY_FRAMES, tiny_config
from motiongs.cli import main
from motiongs.nn import CHECKPOINT_VERSION


def run_cli(argv):
    return main(argv)


def test_synth_requires_source(tmp_path):
    assert run_cli(["synth", "-o", str(tmp_path / "d")]) == 2


def test_synth_unknown_builtin(tmp_path):
    assert run_cli(["synth", "--builtin", "nope", "-o", str(tmp_path / "d")]) == 2


def test_synth_bad_script(tmp_path):
    script = tmp_path / "s.json"
    script.write_text("{\"clips\": {}}")          # missing frames
    assert run_cli(["synth", "--script", str(script), "-o", str(tmp_path / "d")]) == 2


def test_synth_script_happy_path(tmp_path, capsys):
    script = tmp_path / "s.json"
    script.write_text(json.dumps({"clips": TINY_CLIPS, "frames": TINY_FRAMES,
                                  "subject": "tiny"}))
    out = tmp_path / "data"
    rc = run_cli(["synth", "--script", str(script), "-o", str(out),
                  "--body", "60", "--cloth", "15", "--cams", "2", "--size", "32"])
    assert rc == 0
    assert (out / "manifest.json").exists()
    assert "2 clips" in capsys.readouterr().out


def test_train_bad_config_key(tmp_path, tiny_dataset_dir):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"optim": {"iterations": 1, "nonsense": 2}}))
    rc = run_cli(["train", "--data", str(tiny_dataset_dir),
                  "--out", str(tmp_path / "o"), "--config", str(cfg)])
    assert rc == 2


def test_train_invalid_value(tmp_path, tiny_dataset_dir):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"model": {"sh_degree": 7}}))
    rc = run_cli(["train", "--data", str(tiny_dataset_dir),
                  "--out", str(tmp_path / "o"), "--config", str(cfg)])
    assert rc == 2


def test_train_print_config(tmp_path, capsys):
    rc = run_cli(["train", "--data", "x", "--out", "y", "--iters", "7",
                  "--ablate", "no_lstm", "--print-config"])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["optim"]["iterations"] == 7
    assert doc["ablation"]["no_lstm"] is True


def test_global_seed_flows_to_subcommand(tmp_path, capsys):
    """A global --seed before the subcommand must not be clobbered by the
    absent subcommand flag."""
    rc = run_cli(["--seed", "5", "train", "--data", "x", "--out", "y",
                  "--print-config"])
    assert rc == 0
    assert json.loads(capsys.readouterr().out)["optim"]["seed"] == 5
    rc = run_cli(["--seed", "5", "train", "--data", "x", "--out", "y",
                  "--seed", "9", "--print-config"])
    assert rc == 0
    assert json.loads(capsys.readouterr().out)["optim"]["seed"] == 9


@pytest.fixture(scope="module")
def trained_dir(tiny_dataset_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "run"
    cfgp = out.parent / "cfg.json"
    cfg = tiny_config(iterations=4, n_gaussians=50)
    cfgp.write_text(cfg.to_json())
    rc = run_cli(["train", "--data", str(tiny_dataset_dir), "--out", str(out),
                  "--config", str(cfgp), "--iters", "4"])
    assert rc == 0
    return out


def test_train_outputs(trained_dir):
    assert (trained_dir / "final.ckpt").exists()
    assert (trained_dir / "loss.csv").exists()
    rows = (trained_dir / "loss.csv").read_text().strip().split("\n")
    assert rows[0] == "step,l1,mask,percep,skin,total,psnr"
    assert len(rows) == 5                     # header + 4 logged steps


def test_render_and_eval_roundtrip(trained_dir, tiny_dataset_dir, tmp_path, capsys):
    out = tmp_path / "renders"
    rc = run_cli(["render", "--checkpoint", str(trained_dir / "final.ckpt"),
                  "--data", str(tiny_dataset_dir), "--clip", "clipA",
                  "--cam", "1", "--frames", "0:8:4", "-o", str(out), "--pfm"])
    assert rc == 0
    pngs = sorted(out.glob("*.png"))
    assert [p.name for p in pngs] == ["clipA_cam1_0000.png", "clipA_cam1_0004.png"]
    assert (out / "clipA_cam1_0000.pfm").exists()
    # eval against ground truth copies with matching names
    gt = tmp_path / "gt"
    gt.mkdir()
    for f in (0, 4):
        shutil.copy(tiny_dataset_dir / "clipA" / "frames" / "cam1" / f"{f:04d}.png",
                    gt / f"clipA_cam1_{f:04d}.png")
    metrics_path = tmp_path / "metrics.json"
    rc = run_cli(["eval", "--pred", str(out), "--gt", str(gt),
                  "-o", str(metrics_path)])
    # drop the pfm so globs match pngs only: eval only considers *.png
    assert rc == 0
    doc = json.loads(metrics_path.read_text())
    assert set(doc["frames"]) == {"clipA_cam1_0000.png", "clipA_cam1_0004.png"}
    assert np.isfinite(doc["mean"]["psnr"])
    capsys.readouterr()


def test_eval_mismatched_sets(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir(), b.mkdir()
    from motiongs.camera import save_png
    save_png(a / "x.png", np.zeros((8, 8, 3)))
    assert run_cli(["eval", "--pred", str(a), "--gt", str(b)]) == 2
    assert "missing" in capsys.readouterr().err


def test_eval_empty(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.mkdir(), b.mkdir()
    assert run_cli(["eval", "--pred", str(a), "--gt", str(b)]) == 2


def test_render_version_mismatch(trained_dir, tiny_dataset_dir, tmp_path):
    bad = tmp_path / "old.ckpt"
    raw = (trained_dir / "final.ckpt").read_bytes()
    bad.write_bytes(raw.replace(f'"version": {CHECKPOINT_VERSION}'.encode(),
                                b'"version": 0', 1))
    rc = run_cli(["render", "--checkpoint", str(bad),
                  "--data", str(tiny_dataset_dir), "-o", str(tmp_path / "r")])
    assert rc == 4


def test_gradcheck_exit_code(capsys):
    assert run_cli(["gradcheck"]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" not in out


def test_console_entrypoint():
    """The installed `motiongs` module entry works as a subprocess."""
    proc = subprocess.run([sys.executable, "-m", "motiongs.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "synth" in proc.stdout and "gradcheck" in proc.stdout
