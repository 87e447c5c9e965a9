import numpy as np
import pytest

from depthfuse import io
from depthfuse.cli import main
from depthfuse.geometry import RelativePose


@pytest.fixture(scope="module")
def ds(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli") / "ds"
    assert main(["--seed", "3", "-o", str(root), "synth", "--frames", "2", "--logits",
                 "--dynamic", "0", "20"]) == 0
    return root


def test_run(ds, tmp_path, capsys):
    assert main(["-o", str(tmp_path / "out"), "--jobs", "2", "run", str(ds)]) == 0
    out = capsys.readouterr().out
    assert "000000 [decode,mask,segment,fuse,eval] ok" in out
    assert (tmp_path / "out" / "metrics.tsv").is_file()


def test_partial_and_fatal(ds, tmp_path, capsys):
    import shutil

    seq = tmp_path / "seq"
    shutil.copytree(ds, seq)
    (seq / "image" / "000001.png").write_bytes(b"x")
    assert main(["-o", str(tmp_path / "out"), "run", str(seq)]) == 2
    assert main(["-o", str(tmp_path / "out"), "run", str(tmp_path / "missing")]) == 1
    assert "error" in capsys.readouterr().err
    bad = tmp_path / "bad.ini"
    bad.write_text("[fusion]\nlambda7 = 1\n")
    assert main(["--config", str(bad), "-o", str(tmp_path / "o"), "run", str(ds)]) == 1


def test_single_frame_commands(ds, tmp_path, capsys):
    d = tmp_path
    assert main(["-o", str(d / "dec.png"), "decode", str(ds / "logits" / "000000.bin")]) == 0
    dec = io.load_depth_png(d / "dec.png")
    net = io.load_depth_png(ds / "depth" / "000000.png")
    assert np.max(np.abs(dec - net)) <= 1 / 256

    assert main(["-o", str(d / "m.png"), "mask", str(ds / "flow" / "000000.flo"),
                 "--calib", str(ds / "calib.txt"), "--poses", str(ds / "poses.txt"), "--index", "0"]) == 0
    mask = io.load_mask_png(d / "m.png")
    assert 0 < (~mask).mean() < 0.5
    rel = io.relative_pose(*io.load_pose_file(ds / "poses.txt")[1::-1])
    io.save_pose_file(d / "rel.txt", [rel])
    assert main(["-o", str(d / "m2.png"), "mask", str(ds / "flow" / "000000.flo"),
                 "--calib", str(ds / "calib.txt"), "--pose", str(d / "rel.txt")]) == 0
    assert (d / "m.png").read_bytes() == (d / "m2.png").read_bytes()

    assert main(["-o", str(d / "s.png"), "segment", str(ds / "image" / "000000.png"),
                 str(ds / "depth" / "000000.png")]) == 0
    labels = io.load_label_png(d / "s.png")
    rows = [l for l in (d / "s.txt").read_text().splitlines() if not l.startswith("#")]
    assert len(rows) == labels.max() + 1
    assert sum(int(r.split()[-1]) for r in rows) == labels.size

    assert main(["-o", str(d / "f.png"), "fuse", str(ds / "image" / "000000.png"),
                 str(ds / "depth" / "000000.png"), "--vo", str(ds / "vo" / "000000.txt"),
                 "--mask", str(d / "m.png")]) == 0
    capsys.readouterr()
    assert main(["-o", str(d / "e.tsv"), "eval", str(d / "f.png"), str(ds / "gt" / "000000.png")]) == 0
    fused_row = capsys.readouterr().out.splitlines()[-1].split("\t")
    assert main(["eval", str(ds / "depth" / "000000.png"), str(ds / "gt" / "000000.png")]) == 0
    net_row = capsys.readouterr().out.splitlines()[-1].split("\t")
    assert float(fused_row[1]) < float(net_row[1])
    assert (d / "e.tsv").read_text().startswith("frame\tabs_rel")


def test_mask_needs_valid_index(ds, tmp_path):
    assert main(["-o", str(tmp_path / "m.png"), "mask", str(ds / "flow" / "000000.flo"),
                 "--calib", str(ds / "calib.txt"), "--poses", str(ds / "poses.txt"), "--index", "2"]) == 1


def test_synth_seed_recorded(ds):
    assert (ds / "seed.txt").read_text().strip() == "3"
    assert io.load_pose_file(ds / "poses.txt")[1] == RelativePose(np.eye(3), [0.5, 0, 0])
