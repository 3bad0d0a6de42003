"""Central-difference gradient checking against the tape."""
from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .tensor import Tape, Tensor, backward, no_grad


def _relative_errors(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return np.abs(analytic - numeric) / denom


def _scalar(f, name="f") -> float:
    with no_grad():
        v = f()
    v = float(np.asarray(v.data if isinstance(v, Tensor) else v).reshape(-1)[0])
    if not np.isfinite(v):
        raise FloatingPointError(f"grad_check: {name} evaluated to a non-finite value {v}")
    return v


def grad_check_many(f: Callable[[], Tensor], tensors: Iterable[Tensor], eps: float = 1e-5) -> float:
    """Max relative error of the tape gradient of ``f()`` w.r.t. each of ``tensors``.

    ``f`` takes no arguments and must read the tensors' current ``data``;
    coordinates are perturbed in place and restored.
    """
    if not 0.0 < eps <= 1e-2:
        raise ValueError(f"grad_check: eps must lie in (0, 1e-2], got {eps}")
    tensors = list(tensors)
    saved = [(t.requires_grad, t.grad) for t in tensors]
    for t in tensors:
        t.data = np.ascontiguousarray(t.data)
        t.requires_grad = True
        t.grad = None
    with Tape():
        loss = f()
        if not np.all(np.isfinite(loss.data)):
            raise FloatingPointError("grad_check: f evaluated to a non-finite value")
        backward(loss)
    analytic = [np.zeros(t.shape) if t.grad is None else t.grad.copy() for t in tensors]
    for t, (flag, grad) in zip(tensors, saved):
        t.requires_grad, t.grad = flag, grad

    worst = 0.0
    for t, a in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        numeric = np.empty(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = _scalar(f)
            flat[i] = orig - eps
            lo = _scalar(f)
            flat[i] = orig
            numeric[i] = (hi - lo) / (2.0 * eps)
        if numeric.size:
            worst = max(worst, float(_relative_errors(a.reshape(-1), numeric).max()))
    return worst


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5) -> float:
    """Max over coordinates of ``|analytic - numeric| / max(1, |analytic|, |numeric|)``."""
    return grad_check_many(lambda: f(x), [x], eps)


def kink_distance(x, params, label, loss_cfg) -> float:
    """Distance of a model/loss evaluation point to its nearest non-smooth boundary.

    Covers ReLU pre-activations in the attention stacks, the gap between the
    k-th and (k+1)-th entries of every TCAM column, the attention threshold
    that defines the overlap sets, and the arguments of every hinge.
    Central differences are only meaningful when this exceeds ``eps``.
    """
    from . import losses as L
    from .model import forward

    with no_grad():
        out = forward(x, params)
        gaps = []
        for head, lam in (("ia", out.lambda_ia), ("ua", out.lambda_ua)):
            pre = out.o_joint.data @ params[f"att_{head}.0.w"].data + params[f"att_{head}.0.b"].data
            gaps.append(np.abs(pre).min())
            gaps.append(np.abs(lam.data - loss_cfg.activation_threshold).min())
        for tcam in (out.tcam_ia.data, out.tcam_ua.data):
            l = tcam.shape[0]
            k = L.topk_count(l, loss_cfg.s)
            if k < l:
                ordered = -np.sort(-tcam, axis=0)
                gaps.append((ordered[k - 1] - ordered[k]).min())
        lam_ia, lam_ua = out.lambda_ia.data, out.lambda_ua.data
        l = lam_ia.shape[0]
        for other, mine in ((lam_ua, lam_ia), (lam_ia, lam_ua)):
            active = other > loss_cfg.activation_threshold
            if active.any():
                gaps.append(abs(mine[active].mean() - l / loss_cfg.p))
        gap = (L.attention_centroid(lam_ia).data - L.attention_centroid(lam_ua).data) / l
        margin = l / loss_cfg.q if loss_cfg.literal_eq5 else 1.0 / loss_cfg.q
        gaps.append(abs(float(gap) + margin))
    return float(min(gaps))


def smooth_point(seed: int, l: int, hidden: int = 8, layers: int = 1, feature_dim: int = 2,
                 n_goal: int = 4, n_unint: int = 3, loss_cfg=None, min_distance: float = 1e-3,
                 max_tries: int = 200):
    """Random ``(x, params, label)`` at least ``min_distance`` away from every kink.

    Draws are a deterministic function of ``seed``; the first smooth draw wins.
    """
    from .losses import LabelVector, LossConfig
    from .model import ModelConfig, init_params

    loss_cfg = loss_cfg or LossConfig()
    cfg = ModelConfig(feature_dim=feature_dim, n_goal=n_goal, n_unint=n_unint, hidden=hidden, layers=layers)
    for attempt in range(max_tries):
        rng = np.random.default_rng([seed, l, attempt])
        x = Tensor(rng.standard_normal((l, feature_dim)))
        params = init_params(cfg, int(rng.integers(2**31)))
        label = LabelVector(int(rng.integers(n_goal)), int(rng.integers(n_unint)))
        if kink_distance(x, params, label, loss_cfg) >= min_distance:
            return x, params, label
    raise RuntimeError(f"no smooth evaluation point in {max_tries} draws (seed {seed}, l {l})")


def check_total_loss(seed: int, l: int, hidden: int = 8, layers: int = 1, literal_eq5: bool = False,
                     eps: float = 1e-5, **point_kw) -> float:
    """Gradient check of the full per-video loss w.r.t. every parameter and the input."""
    from .losses import LossConfig, total_loss
    from .model import forward

    loss_cfg = LossConfig(literal_eq5=literal_eq5)
    x, params, label = smooth_point(seed, l, hidden, layers, loss_cfg=loss_cfg, **point_kw)
    return grad_check_many(lambda: total_loss(forward(x, params), label, loss_cfg).total,
                           [x, *params.values()], eps)
