"""Label co-occurrence entropy and segment-length statistics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .io import SECONDS_PER_CLIP, Manifest, ManifestError

FRACTION_BINS = np.linspace(0.0, 1.0, 21)


@dataclass
class EntropyReport:
    per_goal: dict[int, float]  # rows with no videos are omitted
    weighted_mean: float


def conditional_entropy(counts) -> EntropyReport:
    """``H(unint | goal = g)`` in bits for each goal class with videos.

    The aggregate weights each row by its share of all videos.
    """
    counts = np.asarray(counts, dtype=np.float64)
    if counts.ndim != 2:
        raise ValueError(f"expected a goal x unint count matrix, got shape {counts.shape}")
    if np.any(counts < 0) or not np.all(np.isfinite(counts)):
        raise ValueError("counts must be finite and nonnegative")
    totals = counts.sum(axis=1)
    if totals.sum() == 0:
        raise ValueError("conditional_entropy: all counts are zero")
    per_goal = {}
    for g in np.flatnonzero(totals > 0):
        p = counts[g] / totals[g]
        p = p[p > 0]
        per_goal[int(g)] = float(-(p * np.log2(p)).sum()) + 0.0
    weights = totals / totals.sum()
    mean = float(sum(weights[g] * h for g, h in per_goal.items()))
    return EntropyReport(per_goal, mean)


def label_pair_counts(manifest: Manifest) -> np.ndarray:
    counts = np.zeros((len(manifest.goal_classes), len(manifest.unint_classes)), dtype=np.int64)
    for v in manifest.videos:
        counts[v.goal_label, v.unint_label] += 1
    return counts


@dataclass
class DatasetStats:
    split_counts: dict[str, int]
    goal_class_counts: list[int]
    unint_class_counts: list[int]
    bin_edges: np.ndarray
    goal_fraction_hist: np.ndarray
    unint_fraction_hist: np.ndarray
    lengths_seconds: np.ndarray

    def csv_rows(self) -> list[list]:
        rows = [["bin_lo", "bin_hi", "goal_count", "unint_count"]]
        for i in range(len(self.bin_edges) - 1):
            rows.append([f"{self.bin_edges[i]:.2f}", f"{self.bin_edges[i + 1]:.2f}",
                         int(self.goal_fraction_hist[i]), int(self.unint_fraction_hist[i])])
        return rows

    def to_dict(self) -> dict:
        return {
            "split_counts": self.split_counts,
            "goal_class_counts": self.goal_class_counts,
            "unint_class_counts": self.unint_class_counts,
            "bin_edges": self.bin_edges.tolist(),
            "goal_fraction_hist": self.goal_fraction_hist.tolist(),
            "unint_fraction_hist": self.unint_fraction_hist.tolist(),
            "mean_length_seconds": float(self.lengths_seconds.mean()) if self.lengths_seconds.size else None,
        }


def dataset_stats(manifest: Manifest) -> DatasetStats:
    """Split sizes, class counts and normalised segment-length histograms.

    The goal segment covers ``transition_clip`` clips and the unintentional
    one the rest; only videos with a known transition enter the histograms.
    Bins are 20 equal intervals on [0, 1], the last one closed.
    """
    split_counts: dict[str, int] = {"train": 0, "test": 0}
    goal_frac, unint_frac = [], []
    for i, v in enumerate(manifest.videos):
        split_counts[v.split] = split_counts.get(v.split, 0) + 1
        if v.transition_clip is None:
            continue
        if not 0 <= v.transition_clip <= v.num_clips:
            raise ManifestError(f"$.videos[{i}].transition_clip", f"{v.transition_clip} outside [0, {v.num_clips}]")
        goal_frac.append(v.transition_clip / v.num_clips)
        unint_frac.append((v.num_clips - v.transition_clip) / v.num_clips)
    goal_hist, _ = np.histogram(goal_frac, bins=FRACTION_BINS)
    unint_hist, _ = np.histogram(unint_frac, bins=FRACTION_BINS)
    counts = label_pair_counts(manifest)
    return DatasetStats(
        split_counts=split_counts,
        goal_class_counts=counts.sum(axis=1).tolist(),
        unint_class_counts=counts.sum(axis=0).tolist(),
        bin_edges=FRACTION_BINS.copy(),
        goal_fraction_hist=goal_hist,
        unint_fraction_hist=unint_hist,
        lengths_seconds=np.array([v.num_clips * SECONDS_PER_CLIP for v in manifest.videos]),
    )
