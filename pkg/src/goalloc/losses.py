"""Training objective: k-max MIL classification plus attention regularisers."""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from . import tensor as T
from .model import ModelOutputs
from .tensor import ShapeError, Tensor


@dataclass(frozen=True)
class LabelVector:
    goal_class: int
    unint_class: int


@dataclass(frozen=True)
class LossConfig:
    s: int = 3
    p: float = 1000.0
    q: float = 10.0
    activation_threshold: float = 0.5
    lambda_weight: float = 0.8
    literal_eq5: bool = False

    def __post_init__(self):
        if self.s < 1:
            raise ValueError(f"s must be >= 1, got {self.s}")
        if self.p <= 0:
            raise ValueError(f"p must be positive, got {self.p}")
        if self.q < 1:
            raise ValueError(f"q must be >= 1, got {self.q}")
        if not 0.0 < self.activation_threshold < 1.0:
            raise ValueError(f"activation_threshold must lie in (0, 1), got {self.activation_threshold}")
        if not 0.0 <= self.lambda_weight <= 1.0:
            raise ValueError(f"lambda_weight must lie in [0, 1], got {self.lambda_weight}")


@dataclass
class LossBreakdown:
    l_cls_ia: Tensor
    l_cls_ua: Tensor
    l_overlap: Tensor
    l_order: Tensor
    total: Tensor

    def values(self) -> dict[str, float]:
        return {f.name: float(getattr(self, f.name).data) for f in fields(self)}


def topk_count(num_clips: int, s: int) -> int:
    return max(1, num_clips // s)


def video_class_scores(tcam, s: int) -> Tensor:
    """Per-class mean of the ``max(1, l // s)`` largest clip activations."""
    tcam = T.as_tensor(tcam)
    if tcam.ndim != 2 or tcam.shape[0] == 0:
        raise ShapeError(f"video_class_scores: expected a non-empty (l, N) map, got shape {tcam.shape}")
    return T.topk_mean(tcam, topk_count(tcam.shape[0], s), axis=0)


def cross_entropy(scores, label: int) -> Tensor:
    """``-log softmax(scores)[label]`` in log-sum-exp form."""
    scores = T.as_tensor(scores)
    if not 0 <= label < scores.shape[0]:
        raise IndexError(f"label {label} outside [0, {scores.shape[0]})")
    return T.sub(T.logsumexp(scores, axis=0), T.index(scores, label))


def mil_loss(tcam_ia, tcam_ua, label: LabelVector, s: int = 3) -> tuple[Tensor, Tensor]:
    return (cross_entropy(video_class_scores(tcam_ia, s), label.goal_class),
            cross_entropy(video_class_scores(tcam_ua, s), label.unint_class))


def _cross_overlap(lam_other: np.ndarray, lam_self: Tensor, threshold: float, margin: float) -> Tensor:
    active = np.flatnonzero(lam_other > threshold)
    if active.size == 0:
        return Tensor(0.0)
    return T.maximum(T.sub(T.mean(T.take(lam_self, active)), margin), 0.0)


def overlap_reg(lambda_ia, lambda_ua, activation_threshold: float = 0.5, p: float = 1000.0) -> Tensor:
    """Hinge on each track's mean over the clips where the other track is active.

    Membership of the active sets is not differentiated through.
    """
    lambda_ia, lambda_ua = T.as_tensor(lambda_ia), T.as_tensor(lambda_ua)
    if lambda_ia.shape != lambda_ua.shape or lambda_ia.ndim != 1:
        raise ShapeError(f"overlap_reg: track shapes {lambda_ia.shape} and {lambda_ua.shape} differ")
    margin = lambda_ia.shape[0] / p
    l_ia = _cross_overlap(lambda_ua.data, lambda_ia, activation_threshold, margin)
    l_ua = _cross_overlap(lambda_ia.data, lambda_ua, activation_threshold, margin)
    return T.add(l_ia, l_ua)


def attention_centroid(lam) -> Tensor:
    """Expected clip position (1-based) under ``softmax(lam)``."""
    lam = T.as_tensor(lam)
    positions = np.arange(1, lam.shape[0] + 1, dtype=np.float64)
    return T.sum(T.mul(T.softmax(lam, axis=0), positions))


def order_reg(lambda_ia, lambda_ua, q: float = 10.0, literal: bool = False) -> Tensor:
    """Hinge pushing the goal centroid ahead of the unintentional one.

    The margin is ``1/q`` of the video length; ``literal=True`` uses ``l/q``
    on the length-normalised difference instead.
    """
    lambda_ia, lambda_ua = T.as_tensor(lambda_ia), T.as_tensor(lambda_ua)
    if lambda_ia.shape != lambda_ua.shape or lambda_ia.ndim != 1:
        raise ShapeError(f"order_reg: track shapes {lambda_ia.shape} and {lambda_ua.shape} differ")
    l = lambda_ia.shape[0]
    margin = l / q if literal else 1.0 / q
    gap = T.scale(T.sub(attention_centroid(lambda_ia), attention_centroid(lambda_ua)), 1.0 / l)
    return T.maximum(T.add(gap, margin), 0.0)


def total_loss(outputs: ModelOutputs, label: LabelVector, cfg: LossConfig = LossConfig()) -> LossBreakdown:
    cls_ia, cls_ua = mil_loss(outputs.tcam_ia, outputs.tcam_ua, label, cfg.s)
    overlap = overlap_reg(outputs.lambda_ia, outputs.lambda_ua, cfg.activation_threshold, cfg.p)
    order = order_reg(outputs.lambda_ia, outputs.lambda_ua, cfg.q, cfg.literal_eq5)
    w = cfg.lambda_weight
    total = T.add(T.scale(T.add(cls_ia, cls_ua), w), T.scale(T.add(overlap, order), 1.0 - w))
    return LossBreakdown(cls_ia, cls_ua, overlap, order, total)


def batch_loss(outputs: Sequence[ModelOutputs], labels: Sequence[LabelVector],
               cfg: LossConfig = LossConfig()) -> LossBreakdown:
    """Mean of the per-video breakdowns."""
    if len(outputs) != len(labels) or not outputs:
        raise ValueError(f"batch_loss: {len(outputs)} outputs for {len(labels)} labels")
    parts = [total_loss(o, y, cfg) for o, y in zip(outputs, labels)]
    n = len(parts)

    def avg(field):
        acc = getattr(parts[0], field)
        for part in parts[1:]:
            acc = T.add(acc, getattr(part, field))
        return T.scale(acc, 1.0 / n)

    return LossBreakdown(*(avg(f) for f in ("l_cls_ia", "l_cls_ua", "l_overlap", "l_order", "total")))
