import subprocess
import sys

import cv2
import numpy as np
import pytest

from mgmd.cli import main
from mgmd.io import load_annotations, load_detections

SYNTH = """\
width = 200
height = 150
length = 30
translation = 1.5, 0.5
target = 8, 5, linear
distractor = 10, 1, parallax_sprite
"""


@pytest.fixture(scope="module")
def seq(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "synth.cfg").write_text(SYNTH)
    assert main(["synth", "--config", str(root / "synth.cfg"), "--seed", "5",
                 "--out", str(root / "seq")]) == 0
    return root


def test_synth_outputs(seq):
    names = sorted(p.name for p in (seq / "seq").iterdir())
    assert names[:2] == ["000000.pgm", "000001.pgm"] and "gt.csv" in names
    assert len(load_annotations(seq / "seq" / "gt.csv")) == 30
    assert len(load_annotations(seq / "seq" / "distractors.csv")) == 30


def test_detect_eval_bench(seq, capsys):
    out = seq / "det.csv"
    assert main(["detect", str(seq / "seq"), "--out", str(out), "--annotate",
                 str(seq / "viz"), "--export-crops", str(seq / "crops")]) == 0
    dets = load_detections(out)
    assert dets and max(dets) <= 29
    assert len(list((seq / "viz").glob("*.png"))) == 30
    index = (seq / "crops" / "index.csv").read_text().splitlines()
    assert index and all((seq / "crops" / line.split(",")[0]).exists() for line in index)
    assert main(["eval", "--det", str(out), "--gt", str(seq / "seq" / "gt.csv")]) == 0
    text = capsys.readouterr().out
    assert "recall" in text and "ap" in text
    (seq / "fast.cfg").write_text("enable_lad = false\n")
    assert main(["bench", str(seq / "seq"), "--config", str(seq / "fast.cfg")]) == 0
    assert "FPS" in capsys.readouterr().out


def test_train_classifier(seq, tmp_path):
    rng = np.random.default_rng(0)
    rows = []
    for i in range(20):
        img = np.clip(rng.normal(100, 3, (24, 24)), 0, 255)
        if i % 2:
            img[8:16, 8:16] += 90
        cv2.imwrite(str(tmp_path / f"c{i}.png"), np.rint(img).astype(np.uint8))
        rows.append(f"c{i}.png,{i % 2}")
    (tmp_path / "labels.csv").write_text("\n".join(rows) + "\n")
    model = tmp_path / "m.bin"
    assert main(["train-classifier", "--crops", str(tmp_path), "--labels",
                 str(tmp_path / "labels.csv"), "--out", str(model)]) == 0
    assert model.read_bytes()[:5] == b"MGDL1"
    cfg = tmp_path / "lin.cfg"
    cfg.write_text(f"lac_backend = linear\nlac_model = {model}\n")
    assert main(["detect", str(seq / "seq"), "--config", str(cfg), "--out",
                 str(tmp_path / "d.csv")]) == 0
    (tmp_path / "one.csv").write_text("c1.png,1\n")
    assert main(["train-classifier", "--crops", str(tmp_path), "--labels",
                 str(tmp_path / "one.csv"), "--out", str(model)]) == 2


def test_input_errors_exit_2(seq, tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense = 1\n")
    assert main(["detect", str(seq / "seq"), "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert main(["detect", str(tmp_path / "missing"), "--out", str(tmp_path / "x")]) == 2
    (tmp_path / "gt.csv").write_text("0,0,1,1\n")
    assert main(["eval", "--det", str(tmp_path / "gt.csv"), "--gt", str(tmp_path / "gt.csv")]) == 2
    assert main(["eval", "--det", "a", "--gt", "b", "--iou", "1.5"]) == 2
    assert main(["bench", str(seq / "seq"), "--config", str(tmp_path / "absent.cfg")]) == 2
    assert main(["synth", "--config", str(bad), "--out", str(tmp_path / "s")]) == 2


def test_backend_error_exit_3(seq, tmp_path):
    cfg = tmp_path / "ext.cfg"
    cfg.write_text(f"lac_backend = external\nlac_command = {sys.executable} -c 'import sys'\n")
    assert main(["detect", str(seq / "seq"), "--config", str(cfg), "--out",
                 str(tmp_path / "d.csv")]) == 3


def test_console_entry_point(seq, tmp_path):
    r = subprocess.run([sys.executable, "-m", "mgmd.cli", "eval", "--det", str(tmp_path / "no.csv"),
                        "--gt", str(seq / "seq" / "gt.csv")], capture_output=True, text=True)
    assert r.returncode == 2 and "no.csv" in r.stderr
