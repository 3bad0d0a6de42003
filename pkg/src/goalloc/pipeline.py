"""Run a trained model over videos and score its predictions."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np

from . import tensor as T
from .evaluation import Detection, GroundTruth, MapTable, classification_map, map_table
from .io import VideoRecord
from .localize import VideoPrediction, localize
from .losses import attention_centroid
from .model import ModelParams, forward


def predict(params: ModelParams, video_id: str, features, s: int = 3, seg_threshold: float = 0.2) -> VideoPrediction:
    with T.no_grad():
        return localize(video_id, forward(features, params), s, seg_threshold)


def predict_many(params: ModelParams, items: Sequence[tuple[str, np.ndarray]], s: int = 3,
                 seg_threshold: float = 0.2, threads: int = 1) -> list[VideoPrediction]:
    """Predictions in input order; ``threads > 1`` evaluates videos concurrently."""
    def one(item):
        return predict(params, item[0], item[1], s, seg_threshold)
    if threads <= 1:
        return [one(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, items))


def detections(preds: Sequence[VideoPrediction], head: str) -> list[Detection]:
    out = []
    for p in preds:
        for seg in (p.goal_segments if head == "goal" else p.unint_segments):
            out.append(Detection(p.video_id, seg.start_clip, seg.end_clip, seg.class_id, seg.score))
    return out


def evaluate(preds: Sequence[VideoPrediction], records: Sequence[VideoRecord],
             goal_gts: Sequence[GroundTruth], unint_gts: Sequence[GroundTruth]) -> MapTable:
    """mAP at every IoU threshold plus classification mAP for both heads."""
    by_id = {p.video_id: p for p in preds}
    missing = [r.id for r in records if r.id not in by_id]
    if missing:
        raise ValueError(f"no prediction for videos {missing[:5]}")
    table = map_table(detections(preds, "goal"), goal_gts, detections(preds, "unint"), unint_gts)
    ordered = [by_id[r.id] for r in records]
    table.goal_cmap = classification_map([p.pmf("goal") for p in ordered], [r.goal_label for r in records])
    table.unint_cmap = classification_map([p.pmf("unint") for p in ordered], [r.unint_label for r in records])
    return table


def attention_centroids(params: ModelParams, features) -> tuple[float, float]:
    """Softmax-weighted mean clip position of the goal and unintentional tracks."""
    with T.no_grad():
        out = forward(features, params)
        return (float(attention_centroid(out.lambda_ia).data), float(attention_centroid(out.lambda_ua).data))
