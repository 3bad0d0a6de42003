"""Temporal localization and classification metrics.

Segments live on an integer clip axis with inclusive ends.  Average
precision uses all-point interpolation: the area under the precision
envelope (precision made monotone from the right) of the exact PR staircase.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

IOU_THRESHOLDS: tuple[float, ...] = tuple(round(0.1 * i, 1) for i in range(1, 10))

# IoUs are ratios of small integers; keep e.g. 7/10 >= 0.7 true under rounding
IOU_TOL = 1e-12


@dataclass(frozen=True)
class Detection:
    video_id: str
    start_clip: int
    end_clip: int
    class_id: int
    score: float


@dataclass(frozen=True)
class GroundTruth:
    video_id: str
    start_clip: int
    end_clip: int
    class_id: int


def temporal_iou(a, b) -> float:
    """Intersection over union of two inclusive clip ranges.

    Accepts anything with ``start_clip``/``end_clip`` or ``(start, end)`` pairs.
    """
    a0, a1 = _bounds(a)
    b0, b1 = _bounds(b)
    inter = min(a1, b1) - max(a0, b0) + 1
    if inter <= 0:
        return 0.0
    union = (a1 - a0 + 1) + (b1 - b0 + 1) - inter
    return inter / union


def _bounds(seg) -> tuple[int, int]:
    if hasattr(seg, "start_clip"):
        return int(seg.start_clip), int(seg.end_clip)
    start, end = seg
    return int(start), int(end)


def ap_from_hits(hits: Sequence[bool], num_positives: int) -> float:
    """All-point interpolated AP for a ranked list of hit/miss flags."""
    if num_positives <= 0:
        raise ValueError("AP is undefined without positives")
    hits = np.asarray(hits, dtype=bool)
    if hits.size == 0:
        return 0.0
    tp = np.cumsum(hits)
    fp = np.cumsum(~hits)
    recall = np.concatenate([[0.0], tp / num_positives])
    precision = np.concatenate([[0.0], tp / (tp + fp)])
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    return float(np.sum(np.diff(recall) * envelope[1:]))


def match_detections(preds: Iterable[Detection], gts: Iterable[GroundTruth], iou_thr: float) -> list[bool]:
    """Greedy matching in rank order; returns hit flags for the ranked predictions.

    Ranking is by score descending, then video id, then start clip.  A
    prediction hits when its best-overlapping unmatched ground truth of the
    same video reaches ``iou_thr``.
    """
    by_video: dict[str, list[GroundTruth]] = defaultdict(list)
    for g in gts:
        by_video[g.video_id].append(g)
    used: set[tuple[str, int]] = set()
    hits = []
    for p in sorted(preds, key=lambda d: (-d.score, d.video_id, d.start_clip)):
        best, best_iou = None, -1.0
        for j, g in enumerate(by_video.get(p.video_id, ())):
            if (p.video_id, j) in used:
                continue
            iou = temporal_iou(p, g)
            if iou > best_iou:
                best, best_iou = j, iou
        if best is not None and best_iou >= iou_thr - IOU_TOL:
            used.add((p.video_id, best))
            hits.append(True)
        else:
            hits.append(False)
    return hits


def average_precision(preds: Sequence[Detection], gts: Sequence[GroundTruth], iou_thr: float) -> float:
    """AP of one class's detections against that class's ground truth."""
    if not gts:
        return float("nan")
    return ap_from_hits(match_detections(preds, gts, iou_thr), len(gts))


def map_at_iou(preds: Sequence[Detection], gts: Sequence[GroundTruth],
               thresholds: Sequence[float] = IOU_THRESHOLDS) -> list[float]:
    """Mean over ground-truth classes of AP, one value per IoU threshold.

    Classes with no ground truth are skipped; predictions for them are ignored.
    """
    gt_by_class: dict[int, list[GroundTruth]] = defaultdict(list)
    for g in gts:
        gt_by_class[g.class_id].append(g)
    pred_by_class: dict[int, list[Detection]] = defaultdict(list)
    for p in preds:
        pred_by_class[p.class_id].append(p)
    classes = sorted(gt_by_class)
    if not classes:
        raise ValueError("map_at_iou: no ground truth")
    return [float(np.mean([average_precision(pred_by_class[c], gt_by_class[c], thr) for c in classes]))
            for thr in thresholds]


@dataclass
class MapTable:
    thresholds: list[float] = field(default_factory=lambda: list(IOU_THRESHOLDS))
    goal: list[float] = field(default_factory=list)
    unint: list[float] = field(default_factory=list)
    goal_cmap: float | None = None
    unint_cmap: float | None = None

    @property
    def goal_avg(self) -> float:
        return float(np.mean(self.goal))

    @property
    def unint_avg(self) -> float:
        return float(np.mean(self.unint))

    def at(self, head: str, thr: float) -> float:
        values = self.goal if head == "goal" else self.unint
        return values[min(range(len(self.thresholds)), key=lambda i: abs(self.thresholds[i] - thr))]

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "iou_thresholds": self.thresholds,
            "goal": {"map": self.goal, "avg": self.goal_avg, "cmap": self.goal_cmap},
            "unint": {"map": self.unint, "avg": self.unint_avg, "cmap": self.unint_cmap},
        }

    def csv_rows(self) -> list[list]:
        rows = [["iou", "goal_map", "unint_map"]]
        for thr, g, u in zip(self.thresholds, self.goal, self.unint):
            rows.append([f"{thr:.1f}", repr(g), repr(u)])
        rows.append(["AVG", repr(self.goal_avg), repr(self.unint_avg)])
        return rows


def map_table(goal_preds, goal_gts, unint_preds, unint_gts,
              thresholds: Sequence[float] = IOU_THRESHOLDS) -> MapTable:
    return MapTable(list(thresholds), map_at_iou(goal_preds, goal_gts, thresholds),
                    map_at_iou(unint_preds, unint_gts, thresholds))


def classification_map(pmfs, labels: Sequence[int]) -> float:
    """Mean over classes with a positive video of the AP of ranking videos by ``p(class)``.

    Ties in probability keep video order.
    """
    pmfs = np.asarray(pmfs, dtype=np.float64)
    labels = np.asarray(labels)
    if pmfs.ndim != 2 or pmfs.shape[0] != labels.shape[0]:
        raise ValueError(f"classification_map: {pmfs.shape} scores for {labels.shape[0]} labels")
    aps = []
    for c in range(pmfs.shape[1]):
        relevant = labels == c
        if not relevant.any():
            continue
        order = np.argsort(-pmfs[:, c], kind="stable")
        aps.append(ap_from_hits(relevant[order], int(relevant.sum())))
    if not aps:
        raise ValueError("classification_map: no class has a positive video")
    return float(np.mean(aps))
