import json
import struct

import numpy as np
import pytest

from goalloc import io
from goalloc.localize import SegmentTriplet, VideoPrediction
from goalloc.model import ModelConfig, init_params
from toy_skeleton import keypoint_document


def test_feature_round_trip_is_exact_at_32_bits(tmp_path):
    x = np.random.default_rng(0).standard_normal((7, 5))
    path = tmp_path / "a.tfv"
    io.write_feature_file(path, x)
    y = io.read_feature_file(path)
    assert y.dtype == np.float64
    np.testing.assert_array_equal(y, x.astype(np.float32).astype(np.float64))
    io.write_feature_file(tmp_path / "b.tfv", y)
    assert (tmp_path / "b.tfv").read_bytes() == path.read_bytes()
    raw = path.read_bytes()
    assert raw[:4] == b"TFV1" and struct.unpack("<II", raw[4:12]) == (7, 5) and len(raw) == 12 + 4 * 35


def test_wide_feature_file(tmp_path):
    io.write_feature_file(tmp_path / "i3d.tfv", np.zeros((3, 1024)))
    assert io.read_feature_file(tmp_path / "i3d.tfv").shape == (3, 1024)


def test_feature_file_errors(tmp_path):
    good = tmp_path / "g.tfv"
    io.write_feature_file(good, np.ones((4, 3)))
    raw = good.read_bytes()
    cases = {
        "magic": (b"XXXX" + raw[4:], io.BadMagicError),
        "short_header": (raw[:8], io.TruncatedFeatureError),
        "short_payload": (raw[:-4], io.TruncatedFeatureError),
        "trailing": (raw + b"\0\0\0\0", io.FeatureSizeError),
        "overflow": (b"TFV1" + struct.pack("<II", 2**31, 2**31), io.FeatureSizeError),
    }
    for name, (data, kind) in cases.items():
        path = tmp_path / f"{name}.tfv"
        path.write_bytes(data)
        with pytest.raises(kind):
            io.read_feature_file(path)
    (tmp_path / "short.tfv").write_bytes(raw[:-4])
    with pytest.raises(io.TruncatedFeatureError, match="expected 48 payload bytes, found 44"):
        io.read_feature_file(tmp_path / "short.tfv")


def manifest_doc(**video_overrides):
    video = {"id": "v1", "feature_path": "v1.tfv", "goal_label": 1, "unint_label": 0, "num_clips": 4,
             "split": "test", "transition_clip": 2}
    video.update(video_overrides)
    return {"format_version": 1, "goal_classes": ["a", "b"], "unint_classes": ["x", "y"], "videos": [video]}


def test_manifest_round_trip(tmp_path):
    doc = manifest_doc()
    path = tmp_path / "m.json"
    path.write_text(json.dumps(doc))
    m = io.load_manifest(path)
    assert m.videos[0].transition_clip == 2 and m.root == tmp_path
    io.save_manifest(m, tmp_path / "n.json")
    assert json.loads((tmp_path / "n.json").read_text()) == doc


def test_manifest_errors_carry_json_path():
    with pytest.raises(io.ManifestError, match=r"\$\.videos\[0\]\.goal_label: video 'v1'"):
        io.parse_manifest(manifest_doc(goal_label=5))
    with pytest.raises(io.ManifestError, match=r"num_clips"):
        io.parse_manifest(manifest_doc(num_clips="4"))
    with pytest.raises(io.ManifestError, match="format_version"):
        io.parse_manifest({**manifest_doc(), "format_version": 9})
    m = io.parse_manifest(manifest_doc(transition_clip=None))
    with pytest.raises(io.ManifestError, match="transition_clip"):
        m.require_transitions("test")


def test_wide_class_lists_accepted():
    doc = manifest_doc(goal_label=43, unint_label=29)
    doc["goal_classes"] = [f"g{i}" for i in range(44)]
    doc["unint_classes"] = [f"u{i}" for i in range(30)]
    m = io.parse_manifest(doc)
    assert len(m.goal_classes) == 44 and len(m.unint_classes) == 30


def test_checkpoint_round_trip_is_value_exact(tmp_path):
    params = init_params(ModelConfig(5, 4, 3, hidden=6, layers=2), 3)
    path = tmp_path / "c.json"
    io.save_checkpoint(path, params, {"s": 3, "p": 1000.0, "q": 10.0, "lambda_weight": 0.8,
                                      "attention_threshold": 0.5})
    loaded, hyper = io.load_checkpoint(path)
    assert loaded.config == params.config
    for name in params.names():
        assert np.array_equal(loaded[name].data, params[name].data)
    assert set(io.HYPERPARAM_KEYS) <= set(hyper)


def test_keypoint_document(tmp_path):
    path = tmp_path / "k.json"
    path.write_text(json.dumps(keypoint_document(5)))
    vid, n, tracks = io.load_keypoints(path)
    assert (vid, n, len(tracks), tracks[0].num_observed) == ("toy", 5, 1, 5)
    bad = keypoint_document(5)
    bad["tracks"][0]["observations"][0]["frame"] = 9
    with pytest.raises(ValueError, match="frame"):
        io.parse_keypoints(bad)


def test_predictions_round_trip(tmp_path):
    preds = [VideoPrediction("v1", np.array([0.5, -1.0]), np.array([2.0, 0.1, -3.0]),
                             [SegmentTriplet(0, 3, 0, 0.75)], [SegmentTriplet(4, 9, 0, 0.5), SegmentTriplet(11, 11, 1, 0.3)]),
             VideoPrediction("v0", np.array([-0.5, -1.0]), np.array([0.0, 0.0, 0.0]), [], [])]
    path = tmp_path / "p.jsonl"
    io.write_predictions(path, preds)
    rows = [json.loads(line) for line in path.read_text().splitlines()]
    assert [r["head"] for r in rows] == ["goal", "unint", "goal", "unint"]
    assert rows[1]["segments"][0] == {"start_clip": 4, "end_clip": 9, "class": 0, "score": 0.5}
    back = io.read_predictions(path)
    assert [p.video_id for p in back] == ["v1", "v0"]
    assert back[0].unint_segments == preds[0].unint_segments
    assert np.array_equal(back[0].goal_scores, preds[0].goal_scores)


def test_clip_time_conversion():
    assert io.SECONDS_PER_CLIP == 0.64
    assert io.time_to_clip(0.0) == 0 and io.time_to_clip(0.63) == 0 and io.time_to_clip(0.64) == 1
    assert io.time_to_clip(3.3) == 5
    assert io.clip_to_time(5) == pytest.approx(3.2)
