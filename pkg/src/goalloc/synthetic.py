"""Prototype-plus-noise videos with a known goal-to-unintentional transition.

Each goal class and each unintentional class owns a random prototype vector.
A video's clips before its transition are noisy copies of the goal
prototype, the rest noisy copies of the unintentional one.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .evaluation import GroundTruth
from .io import Manifest, VideoRecord, save_manifest, write_feature_file
from .losses import LabelVector
from .model import ModelConfig, ModelParams, zero_params


@dataclass(frozen=True)
class SyntheticSpec:
    num_videos: int = 200
    l_range: tuple[int, int] = (16, 32)
    d: int = 32
    n_goal_classes: int = 4
    n_unint_classes: int = 3
    transition_fraction_range: tuple[float, float] = (0.3, 0.7)
    cluster_noise_sigma: float = 0.3
    test_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        lo, hi = self.l_range
        if not 2 <= lo <= hi:
            raise ValueError(f"l_range must satisfy 2 <= lo <= hi, got {self.l_range}")
        flo, fhi = self.transition_fraction_range
        if not 0.0 < flo <= fhi < 1.0:
            raise ValueError(f"transition_fraction_range must lie inside (0, 1), got {self.transition_fraction_range}")
        if self.n_goal_classes < 2 or self.n_unint_classes < 2:
            raise ValueError("need at least two classes per head")
        if self.num_videos < 1 or self.d < 1 or self.cluster_noise_sigma < 0:
            raise ValueError("num_videos and d must be positive, sigma nonnegative")
        if not 0.0 <= self.test_fraction <= 1.0:
            raise ValueError("test_fraction must lie in [0, 1]")


@dataclass
class Video:
    record: VideoRecord
    features: np.ndarray
    transition_clip: int  # always known here; hidden from train rows of the manifest

    @property
    def label(self) -> LabelVector:
        return LabelVector(self.record.goal_label, self.record.unint_label)


@dataclass
class SyntheticDataset:
    spec: SyntheticSpec
    goal_prototypes: np.ndarray
    unint_prototypes: np.ndarray
    videos: list[Video]

    def split(self, name: str) -> list[Video]:
        return [v for v in self.videos if v.record.split == name]

    def manifest(self) -> Manifest:
        return Manifest([f"goal_{i}" for i in range(self.spec.n_goal_classes)],
                        [f"unint_{i}" for i in range(self.spec.n_unint_classes)],
                        [v.record for v in self.videos])


def synth_generate(spec: SyntheticSpec) -> SyntheticDataset:
    rng = np.random.default_rng(spec.seed)
    goal_protos = rng.standard_normal((spec.n_goal_classes, spec.d))
    unint_protos = rng.standard_normal((spec.n_unint_classes, spec.d))
    n_test = int(round(spec.test_fraction * spec.num_videos))
    n_train = spec.num_videos - n_test
    videos = []
    for i in range(spec.num_videos):
        g = int(rng.integers(spec.n_goal_classes))
        u = int(rng.integers(spec.n_unint_classes))
        l = int(rng.integers(spec.l_range[0], spec.l_range[1] + 1))
        frac = rng.uniform(*spec.transition_fraction_range)
        tc = min(max(int(round(frac * l)), 1), l - 1)
        x = np.empty((l, spec.d))
        x[:tc] = goal_protos[g]
        x[tc:] = unint_protos[u]
        x += spec.cluster_noise_sigma * rng.standard_normal((l, spec.d))
        split = "train" if i < n_train else "test"
        vid = f"vid{i:05d}"
        record = VideoRecord(vid, f"features/{vid}.tfv", g, u, l, split, tc if split == "test" else None)
        videos.append(Video(record, x, tc))
    return SyntheticDataset(spec, goal_protos, unint_protos, videos)


def write_dataset(ds: SyntheticDataset, out_dir) -> Path:
    """Write feature files and ``manifest.json`` under ``out_dir``; returns the manifest path."""
    out = Path(out_dir)
    (out / "features").mkdir(parents=True, exist_ok=True)
    for v in ds.videos:
        write_feature_file(out / v.record.feature_path, v.features)
    path = out / "manifest.json"
    save_manifest(ds.manifest(), path)
    return path


def ground_truth(records, transitions=None) -> tuple[list[GroundTruth], list[GroundTruth]]:
    """Goal segment ``[0, tc - 1]`` and unintentional segment ``[tc, l - 1]`` per video.

    ``transitions`` overrides ``record.transition_clip`` when given.
    """
    goal, unint = [], []
    for i, r in enumerate(records):
        tc = r.transition_clip if transitions is None else transitions[i]
        if tc is None:
            raise ValueError(f"video {r.id!r} has no transition_clip")
        if tc > 0:
            goal.append(GroundTruth(r.id, 0, tc - 1, r.goal_label))
        if tc < r.num_clips:
            unint.append(GroundTruth(r.id, tc, r.num_clips - 1, r.unint_label))
    return goal, unint


def oracle_params(goal_prototypes, unint_prototypes, gain: float = 20.0, att_gain: float = 3.0) -> ModelParams:
    """Hand-set weights that detect each prototype exactly.

    One GRU layer with a saturated-closed update gate and no recurrence, so
    the forward state is ``tanh(gain * (x W + b))``.  Unit ``j`` owns
    prototype ``j``: ``W`` and ``b`` solve ``p_i W_j + b_j = +1`` for
    ``i == j`` and ``-1`` otherwise, which has an exact solution whenever the
    prototypes are affinely independent (always true for at most ``d + 1``
    random ones).  Goal attention sums the goal units, unintentional
    attention the unintentional ones; each head reads its own units.
    """
    goal_prototypes = np.asarray(goal_prototypes, dtype=np.float64)
    unint_prototypes = np.asarray(unint_prototypes, dtype=np.float64)
    ng, d = goal_prototypes.shape
    nu = unint_prototypes.shape[0]
    protos = np.concatenate([goal_prototypes, unint_prototypes])
    h = ng + nu
    cfg = ModelConfig(feature_dim=d, n_goal=ng, n_unint=nu, hidden=h, layers=1, attention_hidden=1)
    params = zero_params(cfg)
    P = params.arrays()

    design = np.hstack([protos, np.ones((h, 1))])
    target = 2.0 * np.eye(h) - 1.0
    solution = np.linalg.lstsq(design, target, rcond=None)[0]
    if not np.allclose(design @ solution, target, atol=1e-8):
        raise ValueError("oracle_params: prototypes are not affinely independent")
    P["gru.0.fwd.w_in"][:, 2 * h:] = gain * solution[:d]
    P["gru.0.fwd.b_in"][2 * h:] = gain * solution[d]
    P["gru.0.fwd.b_in"][:h] = -50.0  # update gate closed: h_t = n_t

    goal_units, unint_units = np.arange(ng), ng + np.arange(nu)
    for head, units in (("ia", goal_units), ("ua", unint_units)):
        # own units sum to 2 - n when one of them matches and to -n otherwise
        P[f"att_{head}.0.w"][units, 0] = 1.0
        P[f"att_{head}.0.b"][0] = len(units) - 1.0
        P[f"att_{head}.1.w"][0, 0] = 2.0 * att_gain
        P[f"att_{head}.1.b"][0] = -att_gain
    P["head_ia.w"][goal_units, np.arange(ng)] = 10.0
    P["head_ua.w"][unint_units, np.arange(nu)] = 10.0
    P["head_ia.b"][:] = -5.0
    P["head_ua.b"][:] = -5.0
    return params
