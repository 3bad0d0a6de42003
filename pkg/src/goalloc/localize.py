"""Turning attention-gated class activations into scored temporal segments."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import video_class_scores
from .model import ModelOutputs


@dataclass(frozen=True)
class SegmentTriplet:
    start_clip: int
    end_clip: int  # inclusive
    class_id: int
    score: float

    def __post_init__(self):
        if not 0 <= self.start_clip <= self.end_clip:
            raise ValueError(f"invalid segment [{self.start_clip}, {self.end_clip}]")

    @property
    def length(self) -> int:
        return self.end_clip - self.start_clip + 1


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -x))


def weighted_tcam(lam, tcam, class_id: int) -> np.ndarray:
    """``lam[t] * sigmoid(tcam[t, class_id])`` for every clip."""
    lam = np.asarray(getattr(lam, "data", lam), dtype=np.float64)
    tcam = np.asarray(getattr(tcam, "data", tcam), dtype=np.float64)
    return lam * _sigmoid(tcam[:, class_id])


def candidate_classes(scores) -> list[int]:
    """Classes whose video-level score is strictly positive."""
    scores = np.asarray(getattr(scores, "data", scores), dtype=np.float64)
    return [int(c) for c in np.flatnonzero(scores > 0.0)]


def extract_segments(psi, seg_threshold: float, class_id: int) -> list[SegmentTriplet]:
    """Maximal runs with ``psi >= seg_threshold``, each scored by its mean ``psi``."""
    if not 0.0 < seg_threshold < 1.0:
        raise ValueError(f"seg_threshold must lie in (0, 1), got {seg_threshold}")
    psi = np.asarray(psi, dtype=np.float64)
    on = np.concatenate([[False], psi >= seg_threshold, [False]])
    edges = np.flatnonzero(on[1:] != on[:-1])
    segments = []
    for start, stop in zip(edges[::2], edges[1::2]):
        segments.append(SegmentTriplet(int(start), int(stop - 1), class_id, float(psi[start:stop].mean())))
    return segments


@dataclass
class VideoPrediction:
    video_id: str
    goal_scores: np.ndarray
    unint_scores: np.ndarray
    goal_segments: list[SegmentTriplet]
    unint_segments: list[SegmentTriplet]

    def pmf(self, head: str) -> np.ndarray:
        a = self.goal_scores if head == "goal" else self.unint_scores
        e = np.exp(a - a.max())
        return e / e.sum()


def localize_head(lam, tcam, s: int, seg_threshold: float) -> tuple[np.ndarray, list[SegmentTriplet]]:
    scores = video_class_scores(np.asarray(getattr(tcam, "data", tcam)), s).data
    segments = []
    for c in candidate_classes(scores):
        segments.extend(extract_segments(weighted_tcam(lam, tcam, c), seg_threshold, c))
    return scores, segments


def localize(video_id: str, outputs: ModelOutputs, s: int = 3, seg_threshold: float = 0.2) -> VideoPrediction:
    goal_scores, goal_segs = localize_head(outputs.lambda_ia, outputs.tcam_ia, s, seg_threshold)
    unint_scores, unint_segs = localize_head(outputs.lambda_ua, outputs.tcam_ua, s, seg_threshold)
    return VideoPrediction(video_id, goal_scores, unint_scores, goal_segs, unint_segs)
