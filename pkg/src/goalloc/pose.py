"""Skeleton features from per-person keypoint tracks.

Keypoints follow the 18-point COCO layout used by OpenPose:

    0 nose, 1 neck, 2 r_shoulder, 3 r_elbow, 4 r_wrist, 5 l_shoulder,
    6 l_elbow, 7 l_wrist, 8 r_hip, 9 r_knee, 10 r_ankle, 11 l_hip,
    12 l_knee, 13 l_ankle, 14 r_eye, 15 l_eye, 16 r_ear, 17 l_ear

Face points (nose, eyes, ears) are dropped.  The remaining 13 points give 12
directed limb vectors, each normalised to unit length, so a person-frame is 24
numbers.  Two people side by side give 48 per frame, and 16 consecutive
frames give one 768-wide chunk aligned with a 16-frame RGB clip.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

KEYPOINT_NAMES = (
    "nose", "neck", "r_shoulder", "r_elbow", "r_wrist", "l_shoulder", "l_elbow", "l_wrist",
    "r_hip", "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle", "r_eye", "l_eye", "r_ear", "l_ear",
)
NUM_KEYPOINTS = 18

# (from, to): parent -> child, outward from the neck
LIMBS = (
    (1, 2), (2, 3), (3, 4),      # neck -> right arm
    (1, 5), (5, 6), (6, 7),      # neck -> left arm
    (1, 8), (8, 9), (9, 10),     # neck -> right leg
    (1, 11), (11, 12), (12, 13),  # neck -> left leg
)
PERSON_WIDTH = 2 * len(LIMBS)    # 24
FRAME_WIDTH = 2 * PERSON_WIDTH   # 48
CHUNK_FRAMES = 16
MIN_CONFIDENCE = 0.1


def keypoints_present(kps: np.ndarray, min_confidence: float = MIN_CONFIDENCE) -> np.ndarray:
    """Presence mask from an ``(18, 3)`` array of ``(x, y, confidence)``; NaN rows count as missing."""
    kps = np.asarray(kps, dtype=np.float64)
    return np.isfinite(kps).all(axis=1) & (kps[:, 2] >= min_confidence)


def vectorize_frame(kps, present: np.ndarray | None = None) -> np.ndarray:
    """Unit limb vectors for one person in one frame, flattened to 24 values.

    A limb touching a missing keypoint, or joining two coincident points,
    is ``(0, 0)``.
    """
    kps = np.asarray(kps, dtype=np.float64)
    if kps.shape[0] != NUM_KEYPOINTS:
        raise ValueError(f"expected {NUM_KEYPOINTS} keypoints, got {kps.shape[0]}")
    if present is None:
        present = keypoints_present(kps) if kps.shape[1] >= 3 else np.isfinite(kps).all(axis=1)
    out = np.zeros((len(LIMBS), 2))
    for m, (p, q) in enumerate(LIMBS):
        if not (present[p] and present[q]):
            continue
        delta = kps[q, :2] - kps[p, :2]
        norm = np.hypot(delta[0], delta[1])
        if norm > 0.0:
            out[m] = delta / norm
    return out.reshape(-1)


@dataclass
class PoseTrack:
    track_id: int
    # frame index -> (18, 3) keypoints
    observations: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def first_seen_frame(self) -> int | None:
        return min(self.observations) if self.observations else None

    @property
    def num_observed(self) -> int:
        return len(self.observations)


def impute_track(track: PoseTrack | None, num_frames: int) -> np.ndarray:
    """Dense ``(num_frames, 24)`` vectors for one person.

    Frames before the first detection are zero; later frames without a
    detection repeat the last observed frame.
    """
    out = np.zeros((num_frames, PERSON_WIDTH))
    if track is None:
        return out
    last = None
    for j in range(num_frames):
        kps = track.observations.get(j)
        if kps is not None:
            last = vectorize_frame(kps)
        if last is not None:
            out[j] = last
    return out


def select_principal_tracks(tracks: Sequence[PoseTrack]) -> tuple[PoseTrack | None, PoseTrack | None]:
    """The two tracks observed in the most frames; ties go to the lower id."""
    ranked = sorted(tracks, key=lambda t: (-t.num_observed, t.track_id))
    ranked = [t for t in ranked if t.num_observed > 0]
    first = ranked[0] if ranked else None
    second = ranked[1] if len(ranked) > 1 else None
    return first, second


def person_pair_frames(tracks: Sequence[PoseTrack], num_frames: int) -> np.ndarray:
    """``(num_frames, 48)``: most frequent person, then the runner-up (zeros if absent)."""
    left, right = select_principal_tracks(tracks)
    return np.concatenate([impute_track(left, num_frames), impute_track(right, num_frames)], axis=1)


def chunk_pose(frames, chunk: int = CHUNK_FRAMES) -> np.ndarray:
    """Concatenate consecutive non-overlapping groups of ``chunk`` frames.

    A trailing partial group is zero-padded.
    """
    if chunk < 1:
        raise ValueError(f"chunk must be >= 1, got {chunk}")
    frames = np.asarray(frames, dtype=np.float64)
    n, width = frames.shape
    n_chunks = -(-n // chunk)
    padded = np.zeros((n_chunks * chunk, width))
    padded[:n] = frames
    return padded.reshape(n_chunks, chunk * width)


def fuse_with_rgb(features, pose_chunks) -> np.ndarray:
    """Append pose chunk ``h`` to RGB clip ``h``; surplus pose chunks are dropped."""
    features = np.asarray(features, dtype=np.float64)
    pose_chunks = np.asarray(pose_chunks, dtype=np.float64)
    l = features.shape[0]
    if pose_chunks.shape[0] < l:
        raise ValueError(f"fuse_with_rgb: {pose_chunks.shape[0]} pose chunks for {l} RGB clips")
    return np.concatenate([features, pose_chunks[:l]], axis=1)


def pose_features(tracks: Sequence[PoseTrack], num_frames: int, chunk: int = CHUNK_FRAMES) -> np.ndarray:
    """Full pipeline: per-clip ``16 * 48 = 768`` wide skeleton features."""
    return chunk_pose(person_pair_frames(tracks, num_frames), chunk)
