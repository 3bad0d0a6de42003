"""Dual-attention localization network.

A stacked bidirectional GRU encodes clip features into a joint sequence
representation.  Two class-agnostic attention stacks (kernel-size-1
convolutions, i.e. per-clip dense layers) score every clip for the
goal-directed and the unintentional head; the joint representation is scaled
by each track and mapped to per-clip class logits (TCAMs) by a time-shared
affine head.

Every function here works on a packed batch: clips of several videos stacked
row-wise, with ``lengths`` giving the split.  Single-video wrappers pass
``lengths=[l]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tensor as T
from .gru import gru_layer
from .tensor import ShapeError, Tensor


@dataclass(frozen=True)
class ModelConfig:
    feature_dim: int
    n_goal: int
    n_unint: int
    hidden: int = 16
    layers: int = 3
    attention_hidden: int | None = None

    @property
    def att_hidden(self) -> int:
        return self.attention_hidden or self.hidden


@dataclass
class ModelParams:
    config: ModelConfig
    tensors: dict[str, Tensor] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def names(self) -> list[str]:
        return list(self.tensors)

    def values(self) -> list[Tensor]:
        return list(self.tensors.values())

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.tensors.items()}

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: Tensor(v.data.copy(), requires_grad=v.requires_grad, name=k)
                                         for k, v in self.tensors.items()})

    @property
    def size(self) -> int:
        return int(np.sum([t.size for t in self.tensors.values()]))


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Names and shapes of every parameter, in a fixed order."""
    h, a = cfg.hidden, cfg.att_hidden
    shapes: dict[str, tuple[int, ...]] = {}
    for k in range(cfg.layers):
        d_in = cfg.feature_dim if k == 0 else 2 * h
        for direction in ("fwd", "bwd"):
            pre = f"gru.{k}.{direction}"
            shapes[f"{pre}.w_in"] = (d_in, 3 * h)
            shapes[f"{pre}.b_in"] = (3 * h,)
            shapes[f"{pre}.w_hid"] = (h, 3 * h)
    for head in ("ia", "ua"):
        shapes[f"att_{head}.0.w"] = (2 * h, a)
        shapes[f"att_{head}.0.b"] = (a,)
        shapes[f"att_{head}.1.w"] = (a, 1)
        shapes[f"att_{head}.1.b"] = (1,)
    shapes["head_ia.w"] = (2 * h, cfg.n_goal)
    shapes["head_ia.b"] = (cfg.n_goal,)
    shapes["head_ua.w"] = (2 * h, cfg.n_unint)
    shapes["head_ua.b"] = (cfg.n_unint,)
    return shapes


def _fan_in(name: str, shapes: dict[str, tuple[int, ...]], cfg: ModelConfig) -> int:
    if name.startswith("gru."):
        return cfg.hidden
    weight = name[:-1] + "w" if name.endswith(".b") else name
    return shapes[weight][0]


def init_params(cfg: ModelConfig, seed: int = 0) -> ModelParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation from a seeded generator."""
    rng = np.random.default_rng(seed)
    tensors = {}
    shapes = param_shapes(cfg)
    for name, shape in shapes.items():
        bound = 1.0 / np.sqrt(_fan_in(name, shapes, cfg))
        tensors[name] = Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)
    return ModelParams(cfg, tensors)


def zero_params(cfg: ModelConfig) -> ModelParams:
    return ModelParams(cfg, {name: Tensor(np.zeros(shape), requires_grad=True, name=name)
                             for name, shape in param_shapes(cfg).items()})


def check_params(params: ModelParams) -> None:
    expected = param_shapes(params.config)
    missing = set(expected) - set(params.tensors)
    extra = set(params.tensors) - set(expected)
    if missing or extra:
        raise ShapeError(f"parameter names differ: missing {sorted(missing)}, unexpected {sorted(extra)}")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise ShapeError(f"parameter {name}: expected shape {shape}, got {params[name].shape}")


# ---------------------------------------------------------------- stages

def encode(x, params: ModelParams, lengths: Sequence[int] | None = None) -> Tensor:
    """Bidirectional multi-layer GRU; returns ``(rows, 2h)`` = [forward | backward]."""
    x = T.as_tensor(x)
    lengths = [x.shape[0]] if lengths is None else list(lengths)
    cfg = params.config
    if x.ndim != 2 or x.shape[1] != cfg.feature_dim:
        raise ShapeError(f"encode: layer 0 expects feature dim {cfg.feature_dim}, got input shape {x.shape}")
    out = x
    for k in range(cfg.layers):
        streams = []
        for direction in ("fwd", "bwd"):
            pre = f"gru.{k}.{direction}"
            try:
                streams.append(gru_layer(out, lengths, params[f"{pre}.w_in"], params[f"{pre}.b_in"],
                                         params[f"{pre}.w_hid"], reverse=direction == "bwd"))
            except ShapeError as err:
                raise ShapeError(f"encode: GRU layer {k} ({direction}): {err}") from None
        out = T.concat(streams, axis=1)
    return out


def attention(o_joint, params: ModelParams, head: str) -> Tensor:
    """Per-clip weights in (0, 1) for ``head`` in {"ia", "ua"}; shape ``(rows,)``."""
    pre = f"att_{head}"
    hidden = T.relu(T.add(T.matmul(o_joint, params[f"{pre}.0.w"]), params[f"{pre}.0.b"]))
    logit = T.add(T.matmul(hidden, params[f"{pre}.1.w"]), params[f"{pre}.1.b"])
    return T.sigmoid(T.reshape(logit, (-1,)))


def attend_features(o_joint, lam) -> Tensor:
    """Scale row ``t`` of the joint representation by ``lam[t]``."""
    o_joint, lam = T.as_tensor(o_joint), T.as_tensor(lam)
    if lam.ndim != 1 or lam.shape[0] != o_joint.shape[0]:
        raise ShapeError(f"attend_features: attention of shape {lam.shape} does not match features {o_joint.shape}")
    return T.mul(o_joint, T.reshape(lam, (-1, 1)))


def tcam_head(o_seg, params: ModelParams, head: str) -> Tensor:
    """Time-shared affine map from ``2h`` features to per-clip class logits."""
    w = params[f"head_{head}.w"]
    o_seg = T.as_tensor(o_seg)
    if o_seg.ndim != 2 or o_seg.shape[1] != w.shape[0]:
        raise ShapeError(f"tcam_head: features {o_seg.shape} do not match head weights {w.shape}")
    return T.add(T.matmul(o_seg, w), params[f"head_{head}.b"])


@dataclass
class ModelOutputs:
    lambda_ia: Tensor
    lambda_ua: Tensor
    o_joint: Tensor
    o_ia: Tensor
    o_ua: Tensor
    tcam_ia: Tensor
    tcam_ua: Tensor

    @property
    def num_clips(self) -> int:
        return self.lambda_ia.shape[0]


def forward_batch(xs: Sequence, params: ModelParams) -> list[ModelOutputs]:
    """Run the network on several videos at once; returns one output per video."""
    if not xs:
        raise ShapeError("forward_batch: no videos")
    arrays = [x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64)) for x in xs]
    for a in arrays:
        if a.ndim != 2 or a.shape[0] < 1:
            raise ShapeError(f"forward_batch: expected an (l, d) matrix with l >= 1, got shape {a.shape}")
    lengths = [a.shape[0] for a in arrays]
    if len(arrays) == 1:
        packed = arrays[0]
    elif any(a.requires_grad for a in arrays):
        packed = T.concat(arrays, axis=0)
    else:
        packed = Tensor(np.concatenate([a.data for a in arrays], axis=0))
    o = encode(packed, params, lengths)
    lam_ia = attention(o, params, "ia")
    lam_ua = attention(o, params, "ua")
    o_ia = attend_features(o, lam_ia)
    o_ua = attend_features(o, lam_ua)
    c_ia = tcam_head(o_ia, params, "ia")
    c_ua = tcam_head(o_ua, params, "ua")
    whole = ModelOutputs(lam_ia, lam_ua, o, o_ia, o_ua, c_ia, c_ua)
    if len(arrays) == 1:
        return [whole]
    bounds = np.concatenate([[0], np.cumsum(lengths)])
    return [ModelOutputs(*(T.index(getattr(whole, f), slice(lo, hi)) for f in _FIELDS))
            for lo, hi in zip(bounds[:-1], bounds[1:])]


_FIELDS = ("lambda_ia", "lambda_ua", "o_joint", "o_ia", "o_ua", "tcam_ia", "tcam_ua")


def forward(x, params: ModelParams) -> ModelOutputs:
    out = forward_batch([x], params)[0]
    for lam in (out.lambda_ia, out.lambda_ua):
        if not np.all((lam.data > 0.0) & (lam.data < 1.0)):
            raise FloatingPointError("attention weights left the open interval (0, 1)")
    return out
