"""On-disk formats: feature files, manifests, checkpoints, keypoints, predictions and metrics.

Feature file layout (all little-endian)::

    b"TFV1" | u32 num_clips | u32 feature_dim | float32[num_clips * feature_dim]

Rows are clips.  Every JSON document carries ``format_version``.
"""
from __future__ import annotations

import csv
import json
import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .localize import SegmentTriplet, VideoPrediction
from .model import ModelConfig, ModelParams, check_params, param_shapes
from .pose import NUM_KEYPOINTS, PoseTrack
from .tensor import Tensor

FORMAT_VERSION = 1
MAGIC = b"TFV1"
_HEADER = struct.Struct("<4sII")
MAX_PAYLOAD_BYTES = 2**32 - 1

FRAMES_PER_CLIP = 16
FPS = 25.0
SECONDS_PER_CLIP = FRAMES_PER_CLIP / FPS  # 0.64


def time_to_clip(seconds: float) -> int:
    return int(math.floor(seconds * FPS / FRAMES_PER_CLIP))


def clip_to_time(clip: int) -> float:
    return clip * SECONDS_PER_CLIP


# ------------------------------------------------------------ feature files

class FeatureFileError(ValueError):
    """Base class for malformed feature files."""


class BadMagicError(FeatureFileError):
    pass


class TruncatedFeatureError(FeatureFileError):
    pass


class FeatureSizeError(FeatureFileError):
    """Header sizes whose payload cannot be represented, or trailing bytes."""


def _payload_bytes(l: int, d: int) -> int:
    n = 4 * l * d
    if n > MAX_PAYLOAD_BYTES:
        raise FeatureSizeError(f"{l} x {d} clips x dims needs {n} payload bytes, limit {MAX_PAYLOAD_BYTES}")
    return n


def write_feature_file(path, features) -> None:
    features = np.asarray(features)
    if features.ndim != 2:
        raise ValueError(f"features must be (num_clips, feature_dim), got shape {features.shape}")
    l, d = features.shape
    _payload_bytes(l, d)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, l, d))
        fh.write(np.ascontiguousarray(features, dtype="<f4").tobytes())


def read_feature_file(path) -> np.ndarray:
    """Load a feature file as a float64 ``(num_clips, feature_dim)`` array."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise BadMagicError(f"{path}: expected magic {MAGIC!r}, found {raw[:4]!r}")
    if len(raw) < _HEADER.size:
        raise TruncatedFeatureError(f"{path}: header needs {_HEADER.size} bytes, file has {len(raw)}")
    _, l, d = _HEADER.unpack_from(raw)
    expected = _payload_bytes(l, d)
    actual = len(raw) - _HEADER.size
    if actual < expected:
        raise TruncatedFeatureError(f"{path}: expected {expected} payload bytes, found {actual}")
    if actual > expected:
        raise FeatureSizeError(f"{path}: expected {expected} payload bytes, found {actual} (trailing data)")
    return np.frombuffer(raw, dtype="<f4", count=l * d, offset=_HEADER.size).astype(np.float64).reshape(l, d)


# ---------------------------------------------------------------- manifests

class ManifestError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class VideoRecord:
    id: str
    feature_path: str
    goal_label: int
    unint_label: int
    num_clips: int
    split: str = "train"
    transition_clip: int | None = None

    def to_json(self) -> dict:
        row = {"id": self.id, "feature_path": self.feature_path, "goal_label": self.goal_label,
               "unint_label": self.unint_label, "num_clips": self.num_clips, "split": self.split}
        if self.transition_clip is not None:
            row["transition_clip"] = self.transition_clip
        return row


@dataclass
class Manifest:
    goal_classes: list[str]
    unint_classes: list[str]
    videos: list[VideoRecord]
    root: Path = Path(".")

    def split(self, name: str) -> list[VideoRecord]:
        return [v for v in self.videos if v.split == name]

    def feature_path(self, video: VideoRecord) -> Path:
        return self.root / video.feature_path

    def load_features(self, video: VideoRecord) -> np.ndarray:
        x = read_feature_file(self.feature_path(video))
        if x.shape[0] != video.num_clips:
            raise ManifestError(f"videos[id={video.id}].num_clips",
                                f"manifest says {video.num_clips} clips, feature file has {x.shape[0]}")
        return x

    def require_transitions(self, split: str = "test") -> None:
        for i, v in enumerate(self.videos):
            if v.split == split and v.transition_clip is None:
                raise ManifestError(f"videos[{i}].transition_clip",
                                    f"video {v.id!r} in split {split!r} has no transition_clip")

    def to_json(self) -> dict:
        return {"format_version": FORMAT_VERSION, "goal_classes": list(self.goal_classes),
                "unint_classes": list(self.unint_classes), "videos": [v.to_json() for v in self.videos]}


def _require(obj: dict, key: str, kind, path: str):
    if key not in obj:
        raise ManifestError(f"{path}.{key}", "missing")
    value = obj[key]
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ManifestError(f"{path}.{key}", f"expected an integer, got {value!r}")
    if kind is str and not isinstance(value, str):
        raise ManifestError(f"{path}.{key}", f"expected a string, got {value!r}")
    if kind is list and not isinstance(value, list):
        raise ManifestError(f"{path}.{key}", f"expected a list, got {type(value).__name__}")
    return value


def parse_manifest(doc: Any, root: Path = Path(".")) -> Manifest:
    if not isinstance(doc, dict):
        raise ManifestError("$", "expected a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ManifestError("$.format_version", f"unsupported version {version!r}")
    goal = _require(doc, "goal_classes", list, "$")
    unint = _require(doc, "unint_classes", list, "$")
    for name, classes in (("goal_classes", goal), ("unint_classes", unint)):
        if len(classes) < 2 or not all(isinstance(c, str) for c in classes):
            raise ManifestError(f"$.{name}", "expected at least two class names")
    rows = _require(doc, "videos", list, "$")
    videos, seen = [], set()
    for i, row in enumerate(rows):
        path = f"$.videos[{i}]"
        if not isinstance(row, dict):
            raise ManifestError(path, "expected an object")
        vid = _require(row, "id", str, path)
        if vid in seen:
            raise ManifestError(f"{path}.id", f"duplicate video id {vid!r}")
        seen.add(vid)
        g = _require(row, "goal_label", int, path)
        u = _require(row, "unint_label", int, path)
        if not 0 <= g < len(goal):
            raise ManifestError(f"{path}.goal_label", f"video {vid!r}: label {g} outside [0, {len(goal)})")
        if not 0 <= u < len(unint):
            raise ManifestError(f"{path}.unint_label", f"video {vid!r}: label {u} outside [0, {len(unint)})")
        l = _require(row, "num_clips", int, path)
        if l < 1:
            raise ManifestError(f"{path}.num_clips", f"video {vid!r}: num_clips must be >= 1, got {l}")
        split = row.get("split", "train")
        if split not in ("train", "test"):
            raise ManifestError(f"{path}.split", f"video {vid!r}: split must be 'train' or 'test', got {split!r}")
        tc = row.get("transition_clip")
        if tc is not None:
            tc = _require(row, "transition_clip", int, path)
            if not 0 <= tc <= l:
                raise ManifestError(f"{path}.transition_clip", f"video {vid!r}: {tc} outside [0, {l}]")
        videos.append(VideoRecord(vid, _require(row, "feature_path", str, path), g, u, l, split, tc))
    return Manifest(list(goal), list(unint), videos, Path(root))


def load_manifest(path) -> Manifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ManifestError("$", f"{path}: invalid JSON ({err})") from None
    return parse_manifest(doc, path.parent)


def save_manifest(manifest: Manifest, path) -> None:
    write_json(path, manifest.to_json())


# --------------------------------------------------------------- checkpoints

HYPERPARAM_KEYS = ("h", "layers", "d", "N_IA", "N_UA", "s", "p", "q", "lambda_weight", "attention_threshold")


def save_checkpoint(path, params: ModelParams, extra: dict | None = None) -> None:
    """JSON checkpoint; float64 values are written with round-trip precision."""
    cfg = params.config
    hyper = {"h": cfg.hidden, "layers": cfg.layers, "d": cfg.feature_dim, "N_IA": cfg.n_goal,
             "N_UA": cfg.n_unint, "attention_hidden": cfg.attention_hidden}
    hyper.update(extra or {})
    doc = {
        "format_version": FORMAT_VERSION,
        "hyperparams": hyper,
        "params": {name: {"shape": list(t.shape), "values": t.data.reshape(-1).tolist()}
                   for name, t in params.tensors.items()},
    }
    write_json(path, doc)


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('format_version')!r}")
    hyper = doc["hyperparams"]
    cfg = ModelConfig(feature_dim=hyper["d"], n_goal=hyper["N_IA"], n_unint=hyper["N_UA"],
                      hidden=hyper["h"], layers=hyper["layers"],
                      attention_hidden=hyper.get("attention_hidden"))
    tensors = {}
    for name in param_shapes(cfg):
        if name not in doc["params"]:
            raise ValueError(f"{path}: parameter {name} missing")
        entry = doc["params"][name]
        values = np.asarray(entry["values"], dtype=np.float64).reshape(entry["shape"])
        tensors[name] = Tensor(values, requires_grad=True, name=name)
    params = ModelParams(cfg, tensors)
    check_params(params)
    return params, hyper


# ----------------------------------------------------------------- keypoints

def parse_keypoints(doc: dict) -> tuple[str, int, list[PoseTrack]]:
    """``(video_id, num_frames, tracks)`` from a keypoint document."""
    num_frames = int(doc["num_frames"])
    tracks = []
    for i, entry in enumerate(doc.get("tracks", [])):
        track = PoseTrack(int(entry["track_id"]))
        for j, obs in enumerate(entry.get("observations", [])):
            kps = np.asarray(obs["keypoints"], dtype=np.float64)
            if kps.shape != (NUM_KEYPOINTS, 3):
                raise ValueError(f"tracks[{i}].observations[{j}].keypoints: expected ({NUM_KEYPOINTS}, 3), "
                                 f"got {kps.shape}")
            frame = int(obs["frame"])
            if not 0 <= frame < num_frames:
                raise ValueError(f"tracks[{i}].observations[{j}].frame: {frame} outside [0, {num_frames})")
            track.observations[frame] = kps
        tracks.append(track)
    return str(doc.get("video_id", "")), num_frames, tracks


def load_keypoints(path) -> tuple[str, int, list[PoseTrack]]:
    return parse_keypoints(json.loads(Path(path).read_text()))


# ---------------------------------------------------- predictions and metrics

HEADS = ("goal", "unint")


def prediction_rows(pred: VideoPrediction) -> list[dict]:
    """One JSON object per head."""
    rows = []
    for head in HEADS:
        scores = pred.goal_scores if head == "goal" else pred.unint_scores
        segs = pred.goal_segments if head == "goal" else pred.unint_segments
        rows.append({
            "video_id": pred.video_id,
            "head": head,
            "class_scores": np.asarray(scores).tolist(),
            "segments": [{"start_clip": s.start_clip, "end_clip": s.end_clip, "class": s.class_id, "score": s.score}
                         for s in segs],
        })
    return rows


def predictions_from_rows(rows: Iterable[dict]) -> list[VideoPrediction]:
    """Regroup per-head rows into per-video predictions, keeping first-seen video order."""
    parts: dict[str, dict] = {}
    for i, row in enumerate(rows):
        head = row.get("head")
        if head not in HEADS:
            raise ValueError(f"prediction row {i}: head must be one of {HEADS}, got {head!r}")
        segs = [SegmentTriplet(int(s["start_clip"]), int(s["end_clip"]), int(s["class"]), float(s["score"]))
                for s in row["segments"]]
        parts.setdefault(row["video_id"], {})[head] = (np.asarray(row["class_scores"], dtype=np.float64), segs)
    out = []
    for vid, heads in parts.items():
        missing = [h for h in HEADS if h not in heads]
        if missing:
            raise ValueError(f"video {vid!r}: no prediction row for head {missing[0]!r}")
        out.append(VideoPrediction(vid, heads["goal"][0], heads["unint"][0], heads["goal"][1], heads["unint"][1]))
    return out


def write_predictions(path, preds: Iterable[VideoPrediction]) -> None:
    with open(path, "w") as fh:
        for p in preds:
            for row in prediction_rows(p):
                fh.write(json.dumps(row) + "\n")


def read_predictions(path) -> list[VideoPrediction]:
    with open(path) as fh:
        return predictions_from_rows(json.loads(line) for line in fh if line.strip())


def write_json(path, doc: Any) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


def write_csv(path, rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows(rows)
