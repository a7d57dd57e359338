import os
import subprocess

import numpy as np
import pytest

stseg = pytest.importorskip("stseg")


def test_receptive_field():
    assert [stseg.receptive_field(n, 3) for n in (1, 2, 3, 4)] == [7, 11, 19, 35]
    assert stseg.receptive_field(2, 5) == 21


def test_onecycle_endpoints():
    max_lr = 2e-3
    total = 100
    assert stseg.onecycle_lr(0, total, max_lr) == pytest.approx(max_lr / 25.0)
    peak = round(0.3 * total)
    assert stseg.onecycle_lr(peak, total, max_lr) == pytest.approx(max_lr)
    assert stseg.onecycle_lr(total - 1, total, max_lr) == pytest.approx(max_lr / 1e4)
    with pytest.raises(ValueError):
        stseg.onecycle_lr(total, total, max_lr)


def test_iou():
    a = np.zeros((4, 4), dtype=np.uint8)
    a[0, :2] = 1
    b = np.zeros((4, 4), dtype=np.uint8)
    b[0, :2] = 1
    assert stseg.iou(a, b, 1) == pytest.approx(1.0)
    b[0, :2] = 0
    b[1, :2] = 1
    assert stseg.iou(a, b, 1) == pytest.approx(0.0)
    assert stseg.iou(a, b, 3) is None


def test_warp_mask_unit_shift():
    prev = np.zeros((4, 4), dtype=np.uint8)
    prev[1, 2] = 5
    uv = np.zeros((4, 4, 2), dtype=np.float32)
    uv[..., 0] = 1.0  # every pixel originated one column to the right
    valid = np.ones((4, 4), dtype=np.uint8)
    warped, wvalid = stseg.warp_mask(prev, uv, valid)
    assert warped[1, 1] == 5
    assert wvalid[1, 1] == 1
    assert (wvalid[:, 3] == 0).all()  # source column 4 is out of the image


def test_temporal_consistency_identity():
    m = np.zeros((4, 4), dtype=np.uint8)
    m[:2, :2] = 1
    uv = np.zeros((4, 4, 2), dtype=np.float32)
    valid = np.ones((4, 4), dtype=np.uint8)
    tc = stseg.temporal_consistency(m, m, uv, valid, 3)
    assert tc[0] == pytest.approx(1.0)
    assert tc[1] == pytest.approx(1.0)
    assert tc[2] is None


def test_generate_sequence():
    seq = stseg.generate_sequence(width=24, height=20, num_frames=5, num_classes=3, seed=11)
    assert seq["frames"].shape == (5, 20, 24, 3)
    assert seq["frames"].dtype == np.uint8
    assert seq["masks"].shape == (5, 20, 24)
    assert seq["flow"].shape == (4, 20, 24, 2)
    assert seq["flow_valid"].shape == (4, 20, 24)
    assert seq["masks"].max() < 3
    assert seq["fps"] > 0

    again = stseg.generate_sequence(width=24, height=20, num_frames=5, num_classes=3, seed=11)
    assert (again["frames"] == seq["frames"]).all()
    assert (again["masks"] == seq["masks"]).all()
    other = stseg.generate_sequence(width=24, height=20, num_frames=5, num_classes=3, seed=12)
    assert (other["frames"] != seq["frames"]).any()


@pytest.mark.skipif("STSEG_CLI" not in os.environ, reason="needs the CLI binary")
def test_segmenter_roundtrip(tmp_path):
    cli = os.environ["STSEG_CLI"]
    data = tmp_path / "data"
    run = tmp_path / "run"
    subprocess.run(
        [cli, "gen-data", "--out", str(data), "--width", "32", "--height", "32", "--frames", "10",
         "--num-classes", "3", "--train-seqs", "2", "--val-seqs", "1", "--test-seqs", "1",
         "--noise-sigma", "10", "--seed", "3"],
        check=True, capture_output=True)
    subprocess.run(
        [cli, "train", "--data", str(data), "--out", str(run), "--epochs", "1", "--samples", "2",
         "--batch", "1", "--max-lr", "1e-3", "--seed", "3", "--window", "6", "--layers", "1",
         "--features", "8", "--num-classes", "3", "--encoder-widths", "4,6"],
        check=True, capture_output=True)

    seg = stseg.Segmenter(str(run / "last.ckpt"))
    assert seg.temporal_window == 6
    assert seg.num_classes == 3
    assert seg.kind == "sptcn"

    window = stseg.generate_sequence(width=32, height=32, num_frames=6, num_classes=3, seed=9)
    mask = seg.predict(window["frames"])
    assert mask.shape == (32, 32)
    assert mask.dtype == np.uint8
    assert mask.max() < 3

    with pytest.raises(ValueError):
        seg.predict(window["frames"][:4])
