"""Mini-batch training loop."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .io import save_checkpoint
from .losses import LabelVector, LossConfig, batch_loss
from .model import ModelParams, forward_batch
from .optim import AdamConfig, AdamState, adam_step

LOG_KEYS = ("l_cls_ia", "l_cls_ua", "l_overlap", "l_order", "total")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 16
    iterations: int = 10000
    s: int = 3
    p: float = 1000.0
    q: float = 10.0
    lambda_weight: float = 0.8
    activation_threshold: float = 0.5
    literal_eq5: bool = False
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    checkpoint_every: int = 0  # 0: only the final checkpoint

    def __post_init__(self):
        if self.batch_size < 1 or self.iterations < 0 or self.checkpoint_every < 0:
            raise ValueError("batch_size must be >= 1; iterations and checkpoint_every >= 0")
        # remaining ranges are enforced by the loss and optimiser configs
        self.loss_config()
        self.adam_config()

    def loss_config(self) -> LossConfig:
        return LossConfig(s=self.s, p=self.p, q=self.q, activation_threshold=self.activation_threshold,
                          lambda_weight=self.lambda_weight, literal_eq5=self.literal_eq5)

    def adam_config(self) -> AdamConfig:
        return AdamConfig(self.learning_rate, self.beta1, self.beta2, self.eps)

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    params: ModelParams
    history: list[dict]


def train(dataset: Sequence[tuple[np.ndarray, LabelVector]], params: ModelParams, config: TrainConfig,
          out_dir=None, on_step: Callable[[dict], None] | None = None) -> TrainResult:
    """Optimise ``params`` in place on ``(features, label)`` pairs.

    Each iteration draws ``batch_size`` videos uniformly with replacement.
    With ``out_dir`` set, writes ``train_log.jsonl`` and ``ckpt_{iter}.json``
    there.
    """
    if len(dataset) == 0:
        raise ValueError("train: empty dataset")
    rng = np.random.default_rng(config.seed)
    loss_cfg = config.loss_config()
    adam_cfg = config.adam_config()
    state = AdamState()
    arrays = params.arrays()
    extra = {"s": config.s, "p": config.p, "q": config.q, "lambda_weight": config.lambda_weight,
             "attention_threshold": config.activation_threshold}
    out = None
    log = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        log = open(out / "train_log.jsonl", "w")
    history = []
    try:
        for it in range(1, config.iterations + 1):
            batch = rng.integers(len(dataset), size=config.batch_size)
            with T.Tape():
                outputs = forward_batch([dataset[i][0] for i in batch], params)
                parts = batch_loss(outputs, [dataset[i][1] for i in batch], loss_cfg)
                total = parts.total
                if not math.isfinite(float(total.data)):
                    raise FloatingPointError(f"loss became non-finite at iteration {it}")
                T.backward(total)
            grads = {name: t.grad for name, t in params.tensors.items()}
            try:
                adam_step(arrays, grads, state, adam_cfg)
            except FloatingPointError as err:
                raise FloatingPointError(f"iteration {it}: {err}") from None
            for t in params.tensors.values():
                t.grad = None
            row = {"iter": it, **{k: float(getattr(parts, k).data) for k in LOG_KEYS}}
            history.append(row)
            if log is not None:
                log.write(json.dumps(row) + "\n")
            if on_step is not None:
                on_step(row)
            if out is not None and config.checkpoint_every and it % config.checkpoint_every == 0:
                save_checkpoint(out / f"ckpt_{it}.json", params, extra)
        if out is not None:
            save_checkpoint(out / f"ckpt_{config.iterations}.json", params, extra)
    finally:
        if log is not None:
            log.close()
    return TrainResult(params, history)
