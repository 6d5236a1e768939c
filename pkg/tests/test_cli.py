import csv
import os

import numpy as np
import pytest

from kpgan.cli import main
from kpgan.geometry import read_ply
from kpgan.metrics import read_embeddings, read_keypoints

TINY_CFG = """\
grid_size = 4
encoder_channels = 2,2,3,3,4,4,4
trunk_widths = 8
feature_dim = 4
decoder_widths = 8,8
node_dim = 3
root_children = 2
fanout = 2
n_output = 16
critic_channels = 6,4,1
centers_per_cloud = 32
batch_size = 2
critic_steps = 1
epochs = 1
"""


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    assert run("gen-data", "--out", data, "--families", "rectangle,box", "--per-family", 4,
               "--n-points", 128) == 0
    cfg = root / "tiny.cfg"
    cfg.write_text(TINY_CFG)
    out = root / "run"
    assert run("train", "--data", data, "--config", cfg, "--out", out) == 0
    return root, data, cfg, out


def files(d):
    return {p: (d / p).read_bytes() for p in sorted(os.listdir(d))}


# ---------------------------------------------------------------- help
@pytest.mark.parametrize("cmd", ["gen-data", "train", "detect", "eval", "export-heatmap"])
def test_help_lists_defaults(cmd, capsys):
    with pytest.raises(SystemExit) as exc:
        run(cmd, "--help")
    assert exc.value.code == 0
    text = capsys.readouterr().out
    assert "--threads" in text and "default" in text


def test_detect_help_shows_defaults(capsys):
    with pytest.raises(SystemExit):
        run("detect", "--help")
    text = " ".join(capsys.readouterr().out.split())
    assert "NMS radius (default: 0.1)" in text
    assert "minimum saliency (default: 0.5)" in text


# ------------------------------------------------------------ gen-data
def test_gen_data_default_counts():
    from kpgan.cli import build_parser
    args = build_parser().parse_args(["gen-data", "--out", "x"])
    assert args.families.split(",") == ["rectangle", "box", "table", "chair"]
    assert args.per_family == 84


def test_gen_data_is_byte_identical(tmp_path, workspace):
    _, data, _, _ = workspace
    again = tmp_path / "again"
    assert run("gen-data", "--out", again, "--families", "rectangle,box", "--per-family", 4,
               "--n-points", 128) == 0
    assert files(again) == files(data)
    with open(data / "manifest.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 8 and {r["family"] for r in rows} == {"rectangle", "box"}


def test_gen_data_bad_family_is_usage_error(tmp_path, capsys):
    out = tmp_path / "bad"
    assert run("gen-data", "--out", out, "--families", "sofa") == 2
    err = capsys.readouterr().err
    assert "usage:" in err and "sofa" in err
    assert not out.exists()


def test_bad_thread_counts(tmp_path, monkeypatch):
    assert run("gen-data", "--out", tmp_path / "t", "--threads", 0) == 2
    monkeypatch.setenv("UKP_THREADS", "many")
    assert run("gen-data", "--out", tmp_path / "t") == 2


# --------------------------------------------------------------- train
def test_train_smoke_writes_checkpoint_and_log(workspace, caplog):
    _, _, _, out = workspace
    for name in ("model.ukpf", "model.cfg", "model.adam.ukpf", "metrics.csv"):
        assert (out / name).exists()
    with open(out / "metrics.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows and rows[0]["epoch"] == "1"


def test_train_no_gan_column(workspace, tmp_path):
    _, data, cfg, _ = workspace
    out = tmp_path / "nogan"
    assert run("train", "--data", data, "--config", cfg, "--out", out, "--ablate", "no_gan") == 0
    with open(out / "metrics.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert all(r["l_gan_d"] == "" and float(r["l_gan_g"]) > 0 for r in rows)
    assert "ablations = no_gan" in (out / "model.cfg").read_text()


def test_train_flags_override_config(workspace, tmp_path):
    _, data, cfg, _ = workspace
    out = tmp_path / "ovr"
    assert run("train", "--data", data, "--config", cfg, "--out", out, "--epochs", 2,
               "--set", "lr=0.002") == 0
    text = (out / "model.cfg").read_text()
    assert "epochs = 2" in text and "lr = 0.002" in text
    with open(out / "metrics.csv") as fh:
        assert max(int(r["epoch"]) for r in csv.DictReader(fh)) == 2


def test_train_missing_keys_logged(workspace, tmp_path, caplog):
    _, data, cfg, _ = workspace
    with caplog.at_level("INFO"):
        run("train", "--data", data, "--config", cfg, "--out", tmp_path / "log")
    assert "defaults used for" in caplog.text and "lrf_radius" in caplog.text


def test_train_unknown_key_is_usage_error(workspace, tmp_path):
    _, data, cfg, _ = workspace
    assert run("train", "--data", data, "--config", cfg, "--out", tmp_path / "u",
               "--set", "colour=red") == 2
    assert not (tmp_path / "u").exists()


def test_train_is_deterministic(workspace, tmp_path):
    _, data, cfg, out = workspace
    assert run("train", "--data", data, "--config", cfg, "--out", tmp_path / "rep") == 0
    assert files(tmp_path / "rep") == files(out)


# -------------------------------------------------------------- detect
def test_detect_top_k_and_threshold(workspace, tmp_path, capsys):
    _, data, _, out = workspace
    cloud = data / "box_003.ply"
    kp = tmp_path / "a.kp"
    emb = tmp_path / "a.emb"
    assert run("detect", "--model", out / "model.ukpf", "--cloud", cloud, "--top-k", 4,
               "--threshold", 0.0, "--out", kp, "--embeddings", emb) == 0
    lines = kp.read_text().splitlines()
    assert len(lines) == 4
    assert read_embeddings(emb).shape == (128, 4)
    kp2 = tmp_path / "b.kp"
    run("detect", "--model", out / "model.ukpf", "--cloud", cloud, "--top-k", 4,
        "--threshold", 0.0, "--out", kp2)
    assert kp2.read_bytes() == kp.read_bytes()
    run("detect", "--model", out / "model.ukpf", "--cloud", cloud, "--threshold", 0.5)
    for line in capsys.readouterr().out.splitlines():
        assert float(line.split()[1]) >= 0.5


def test_detect_incompatible_checkpoint(workspace, tmp_path, capsys):
    _, data, _, out = workspace
    bad = tmp_path / "bad.ukpf"
    bad.write_bytes(b"UKPF" + (99).to_bytes(4, "little"))
    (tmp_path / "bad.cfg").write_text((out / "model.cfg").read_text())
    assert run("detect", "--model", bad, "--cloud", data / "box_000.ply") == 1
    assert "version 99" in capsys.readouterr().err


def test_detect_missing_model_is_runtime_error(workspace, tmp_path):
    _, data, _, _ = workspace
    assert run("detect", "--model", tmp_path / "none.ukpf", "--cloud",
               data / "box_000.ply") == 1


# ---------------------------------------------------------------- eval
def test_eval_repeat_oracle_is_100(workspace, tmp_path, capsys):
    _, data, _, _ = workspace
    report = tmp_path / "r.csv"
    assert run("eval", "--task", "repeat", "--detector", "oracle", "--data", data,
               "--split", "train", "--n-keypoints", 4, "--rotations", 20, "--out", report) == 0
    with open(report) as fh:
        rows = list(csv.DictReader(fh))
    assert rows and all(float(r["value"]) == 100.0 for r in rows)
    assert capsys.readouterr().out.strip().endswith("100.000000")


def test_eval_miou_identity(workspace, tmp_path, capsys):
    _, data, _, _ = workspace
    kp_dir = tmp_path / "kp"
    kp_dir.mkdir()
    pc = read_ply(data / "rectangle_000.ply")
    (kp_dir / "rectangle_000.kp").write_text(
        "".join(f"{k} 1\n" for k in sorted(pc.gt_keypoints)))
    curve = tmp_path / "curve.csv"
    assert run("eval", "--task", "miou", "--keypoints", kp_dir,
               "--cloud", data / "rectangle_000.ply", "--curve", curve) == 0
    assert capsys.readouterr().out.strip() == "miou,rectangle,1.000000"
    lines = curve.read_text().splitlines()
    assert lines[0] == "threshold,category,value" and len(lines) == 11


def test_eval_part_single_label_is_100(workspace, tmp_path, capsys):
    _, data, _, _ = workspace
    kp_dir = tmp_path / "kp"
    kp_dir.mkdir()
    # rectangles have a single part: any keypoints score 100
    for i in range(4):
        (kp_dir / f"rectangle_00{i}.kp").write_text("".join(f"{k} 1\n" for k in range(0, 40, 4)))
    assert run("eval", "--task", "part", "--keypoints", kp_dir, "--data", data,
               "--split", "train", "--families", "rectangle") == 0
    assert capsys.readouterr().out.strip() == "correspondence_ratio,rectangle,100.000000"


def test_eval_model_tasks_run(workspace, tmp_path):
    _, data, _, out = workspace
    model = out / "model.ukpf"
    for task, extra in (("repeat", ["--n-keypoints", 2, "--rotations", 2]),
                        ("corr", ["--points", 64, "--threshold", 0.0, "--top-k", 3,
                                  "--on-collision", "merge"]),
                        ("part", ["--n-keypoints", 4, "--k", 2])):
        report = tmp_path / f"{task}.csv"
        assert run("eval", "--task", task, "--model", model, "--data", data,
                   "--split", "train", "--out", report, *extra) == 0
        with open(report) as fh:
            rows = list(csv.DictReader(fh))
        assert [r["category"] for r in rows] == ["box", "rectangle", "mean"]
        assert all(0 <= float(r["value"]) <= 100 for r in rows)


def test_eval_threads_do_not_change_results(workspace, tmp_path):
    _, data, _, out = workspace
    reports = []
    for t in (1, 3):
        report = tmp_path / f"t{t}.csv"
        run("eval", "--task", "repeat", "--model", out / "model.ukpf", "--data", data,
            "--split", "train", "--n-keypoints", 2, "--rotations", 2, "--threads", t,
            "--out", report)
        reports.append(report.read_bytes())
    assert reports[0] == reports[1]


def test_eval_usage_errors(workspace, tmp_path):
    _, data, _, _ = workspace
    assert run("eval", "--task", "corr", "--data", data) == 2
    assert run("eval", "--task", "repeat", "--detector", "oracle") == 2
    assert run("eval", "--task", "part", "--model", "x", "--data", data,
               "--curve", tmp_path / "c.csv") == 2
    with pytest.raises(SystemExit) as exc:
        run("eval", "--task", "bogus")
    assert exc.value.code == 2


def test_eval_missing_labels_explained(workspace, tmp_path, capsys):
    _, data, _, out = workspace
    from kpgan.geometry import PointCloud, write_ply
    bare = tmp_path / "bare.ply"
    write_ply(bare, PointCloud(read_ply(data / "box_000.ply").points))
    assert run("eval", "--task", "miou", "--model", out / "model.ukpf", "--cloud", bare) == 1
    assert "no annotated keypoints" in capsys.readouterr().err


# ------------------------------------------------------------- heatmap
def test_export_heatmap_colours(workspace, tmp_path):
    _, data, _, out = workspace
    dest = tmp_path / "heat.ply"
    assert run("export-heatmap", "--model", out / "model.ukpf", "--cloud",
               data / "box_000.ply", "--out", dest) == 0
    pc, extra = read_ply(dest, return_extra=True)
    assert len(pc) == 128
    red, green, blue = (np.asarray(extra[c]) for c in ("red", "green", "blue"))
    assert np.all(red.astype(int) + blue.astype(int) == 255) and np.all(green == 0)


def test_heatmap_saturation(monkeypatch, workspace, tmp_path):
    _, data, _, out = workspace
    import kpgan.cli as cli
    for value, colour in ((1.0, (255, 0, 0)), (0.0, (0, 0, 255))):
        def fake_run(model, pc, v=value):
            return np.full(len(pc), v), None, np.ones(len(pc), bool)
        monkeypatch.setattr(cli, "run_model", fake_run)
        dest = tmp_path / f"sat{value}.ply"
        assert run("export-heatmap", "--model", out / "model.ukpf", "--cloud",
                   data / "box_000.ply", "--out", dest) == 0
        _, extra = read_ply(dest, return_extra=True)
        got = np.stack([extra[c] for c in ("red", "green", "blue")], axis=1)
        assert np.all(got == colour)


def test_keypoint_file_reads_back(workspace, tmp_path):
    _, data, _, out = workspace
    kp = tmp_path / "k.kp"
    run("detect", "--model", out / "model.ukpf", "--cloud", data / "box_001.ply",
        "--threshold", 0.0, "--out", kp)
    res = read_keypoints(kp)
    assert len(res.keypoint_indices) > 0 and np.all(np.diff(res.scores) <= 0)
