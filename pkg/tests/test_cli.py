import json

import numpy as np
import pytest

from goalloc import io
from goalloc.cli import main
from toy_skeleton import EXPECTED, keypoint_document


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def banner(stdout):
    line = next(l for l in stdout.splitlines() if " config: " in l)
    return json.loads(line.split(" config: ", 1)[1])


@pytest.fixture
def small_data(tmp_path, capsys):
    code, _, _ = run(capsys, "synth", "--out", str(tmp_path / "data"), "--num-videos", "20", "--dim", "6",
                     "--min-clips", "6", "--max-clips", "9", "--sigma", "0", "--seed", "1",
                     "--oracle-checkpoint", str(tmp_path / "oracle.json"))
    assert code == 0
    return tmp_path


def test_usage_errors_exit_2(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--out", str(tmp_path)])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["stats", "--manifest", "m.json", "--bogus"])
    assert exc.value.code == 2
    code, _, err = run(capsys, "train", "--manifest", str(tmp_path / "missing.json"), "--out", str(tmp_path))
    assert code == 2 and "usage" in err


def test_train_banner_and_config_precedence(small_data, capsys):
    manifest = str(small_data / "data" / "manifest.json")
    code, out, _ = run(capsys, "train", "--manifest", manifest, "--out", str(small_data / "r0"),
                       "--iterations", "3", "--hidden", "4", "--layers", "1", "--batch-size", "2")
    assert code == 0 and banner(out)["lambda_weight"] == 0.8
    assert (small_data / "r0" / "ckpt_3.json").exists()
    cfg = small_data / "cfg.json"
    cfg.write_text(json.dumps({"lambda_weight": 0.5, "iterations": 2, "hidden": 3, "layers": 1}))
    code, out, _ = run(capsys, "train", "--manifest", manifest, "--out", str(small_data / "r1"), "--config", str(cfg))
    assert code == 0 and banner(out)["lambda_weight"] == 0.5 and banner(out)["hidden"] == 3
    code, out, _ = run(capsys, "train", "--manifest", manifest, "--out", str(small_data / "r2"), "--config", str(cfg),
                       "--lambda-weight", "0.7", "--literal-eq5")
    b = banner(out)
    assert code == 0 and b["lambda_weight"] == 0.7 and b["iterations"] == 2 and b["literal_eq5"] is True
    cfg.write_text(json.dumps({"not_a_key": 1}))
    code, _, err = run(capsys, "train", "--manifest", manifest, "--out", str(small_data / "r3"), "--config", str(cfg))
    assert code == 2 and "not_a_key" in err


def test_same_seed_training_is_reproducible(small_data, capsys):
    manifest = str(small_data / "data" / "manifest.json")
    for name in ("a", "b"):
        assert run(capsys, "train", "--manifest", manifest, "--out", str(small_data / name), "--iterations", "4",
                   "--hidden", "3", "--layers", "1", "--seed", "5")[0] == 0
    for f in ("train_log.jsonl", "ckpt_4.json"):
        assert (small_data / "a" / f).read_bytes() == (small_data / "b" / f).read_bytes()


def test_eval_oracle_checkpoint_scores_perfectly(small_data, capsys):
    manifest = str(small_data / "data" / "manifest.json")
    code, _, _ = run(capsys, "eval", "--manifest", manifest, "--ckpt", str(small_data / "oracle.json"),
                     "--out", str(small_data / "ev"), "--threads", "2")
    assert code == 0
    metrics = json.loads((small_data / "ev" / "metrics.json").read_text())
    assert metrics["goal"]["map"] == [1.0] * 9 and metrics["unint"]["map"] == [1.0] * 9
    assert metrics["goal"]["cmap"] == 1.0 and metrics["unint"]["cmap"] == 1.0
    rows = (small_data / "ev" / "metrics.csv").read_text().splitlines()
    assert len(rows) == 11 and rows[-1].startswith("AVG")
    first = (small_data / "ev" / "metrics.json").read_bytes()
    run(capsys, "eval", "--manifest", manifest, "--ckpt", str(small_data / "oracle.json"), "--out", str(small_data / "ev"))
    assert (small_data / "ev" / "metrics.json").read_bytes() == first


def test_eval_without_transitions_fails_with_1(small_data, capsys):
    code, _, err = run(capsys, "eval", "--manifest", str(small_data / "data" / "manifest.json"),
                       "--ckpt", str(small_data / "oracle.json"), "--out", str(small_data / "ev"), "--split", "train")
    assert code == 1 and "transition_clip" in err


def test_localize_writes_per_head_rows(small_data, capsys):
    out = small_data / "pred.jsonl"
    code, _, _ = run(capsys, "localize", "--manifest", str(small_data / "data" / "manifest.json"),
                     "--ckpt", str(small_data / "oracle.json"), "--out", str(out))
    assert code == 0
    preds = io.read_predictions(out)
    assert len(preds) == 4 and all(len(p.goal_segments) == 1 for p in preds)


def test_pose_reproduces_toy_vectors(tmp_path, capsys):
    (tmp_path / "k.json").write_text(json.dumps(keypoint_document(20)))
    code, _, _ = run(capsys, "pose", "--keypoints", str(tmp_path / "k.json"), "--out", str(tmp_path / "p.tfv"))
    assert code == 0
    x = io.read_feature_file(tmp_path / "p.tfv")
    assert x.shape == (2, 768)
    np.testing.assert_array_equal(x[0, :24], EXPECTED.astype(np.float32))
    np.testing.assert_array_equal(x[0, 24:48], 0.0)
    io.write_feature_file(tmp_path / "rgb.tfv", np.ones((2, 10)))
    code, _, _ = run(capsys, "pose", "--keypoints", str(tmp_path / "k.json"), "--out", str(tmp_path / "f.tfv"),
                     "--rgb", str(tmp_path / "rgb.tfv"))
    assert code == 0 and io.read_feature_file(tmp_path / "f.tfv").shape == (2, 778)
    io.write_feature_file(tmp_path / "rgb3.tfv", np.ones((3, 10)))
    code, _, err = run(capsys, "pose", "--keypoints", str(tmp_path / "k.json"), "--out", str(tmp_path / "g.tfv"),
                       "--rgb", str(tmp_path / "rgb3.tfv"))
    assert code == 1 and "2 pose chunks for 3" in err


def test_stats_echoes_split_counts(tmp_path, capsys):
    videos = [{"id": f"v{i}", "feature_path": "x", "goal_label": i % 44, "unint_label": i % 30, "num_clips": 10,
               "split": "train" if i < 1582 else "test", **({} if i < 1582 else {"transition_clip": 4})}
              for i in range(2108)]
    doc = {"format_version": 1, "goal_classes": [f"g{i}" for i in range(44)],
           "unint_classes": [f"u{i}" for i in range(30)], "videos": videos}
    (tmp_path / "m.json").write_text(json.dumps(doc))
    code, out, _ = run(capsys, "stats", "--manifest", str(tmp_path / "m.json"), "--out", str(tmp_path / "st"))
    assert code == 0 and "train 1582  test 526" in out
    assert (tmp_path / "st" / "segment_fractions.csv").read_text().startswith("bin_lo,bin_hi,goal_count,unint_count")


def test_gradcheck_exit_codes(capsys):
    assert run(capsys, "gradcheck", "--seeds", "1", "--lengths", "4", "--hidden", "3")[0] == 0
    assert run(capsys, "gradcheck", "--seeds", "1", "--lengths", "4", "--hidden", "3", "--tolerance", "1e-30")[0] == 1
