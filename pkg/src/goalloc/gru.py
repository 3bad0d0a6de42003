"""Single-direction GRU layer over a packed batch of variable-length sequences.

The recurrence per step is

    z = sigmoid(x W_z + b_z + h U_z)
    r = sigmoid(x W_r + b_r + h U_r)
    n = tanh(r * (h U) + x W + b)
    h' = (1 - z) * n + z * h

with a zero initial state.  Sequences are stacked row-wise in one matrix
(``lengths`` gives the split); each sequence is recurred on its own, never
padded, but all sequences alive at step ``t`` are advanced together.
Gate blocks are stored side by side: columns ``[0:h]`` update, ``[h:2h]``
reset, ``[2h:3h]`` candidate.
"""
from __future__ import annotations

from functools import lru_cache
from typing import Sequence

import numpy as np

from .tensor import ShapeError, Tensor, as_tensor, record


@lru_cache(maxsize=256)
def _schedule(lengths: tuple[int, ...], reverse: bool):
    """Step-major row permutation of the packed input.

    Sequences are ordered longest first, so the sequences alive at step ``t``
    are always a prefix of those alive at ``t - 1``.  Returns the permutation
    and the ``(start, stop)`` slice of it covering each step.
    """
    lens_all = np.asarray(lengths, dtype=np.intp)
    offsets = np.concatenate([[0], np.cumsum(lens_all)[:-1]])
    order = np.argsort(-lens_all, kind="stable")
    lens, offs = lens_all[order], offsets[order]
    rows, bounds, start = [], [], 0
    for t in range(int(lens.max())):
        n_t = int(np.count_nonzero(lens > t))
        rows.append(offs[:n_t] + (lens[:n_t] - 1 - t if reverse else t))
        bounds.append((start, start + n_t))
        start += n_t
    return np.concatenate(rows), tuple(bounds)


def gru_layer(x, lengths: Sequence[int], w_in, b_in, w_hid, reverse: bool = False) -> Tensor:
    """Run one GRU direction over packed sequences.

    ``x`` is ``(sum(lengths), d)``; ``w_in`` is ``(d, 3h)``, ``b_in`` is
    ``(3h,)`` and ``w_hid`` is ``(h, 3h)``.  Returns ``(sum(lengths), h)``.
    """
    x, w_in, b_in, w_hid = (as_tensor(t) for t in (x, w_in, b_in, w_hid))
    if x.ndim != 2 or w_in.ndim != 2 or x.shape[1] != w_in.shape[0]:
        raise ShapeError(f"gru_layer: input {x.shape} does not match input weights {w_in.shape}")
    h = w_hid.shape[0]
    if w_hid.shape != (h, 3 * h) or w_in.shape[1] != 3 * h or b_in.shape != (3 * h,):
        raise ShapeError(
            f"gru_layer: inconsistent gate shapes w_in={w_in.shape}, b_in={b_in.shape}, w_hid={w_hid.shape}")
    if len(lengths) == 0 or any(n < 1 for n in lengths) or int(np.sum(lengths)) != x.shape[0]:
        raise ShapeError(f"gru_layer: lengths {list(lengths)} do not partition {x.shape[0]} rows")

    X, W, U = x.data, w_in.data, w_hid.data
    perm, bounds = _schedule(tuple(int(n) for n in lengths), reverse)
    A = X[perm] @ W + b_in.data
    H = np.empty((X.shape[0], h))
    cache = []
    hp = np.zeros((bounds[0][1], h))
    h2 = 2 * h
    for lo, hi in bounds:
        hp = hp[:hi - lo]
        a = A[lo:hi]
        hh = hp @ U
        zr = np.tanh(0.5 * (a[:, :h2] + hh[:, :h2]))
        zr *= 0.5
        zr += 0.5
        z, r = zr[:, :h], zr[:, h:]
        hn = hh[:, h2:]
        n = np.tanh(a[:, h2:] + r * hn)
        # h' = (1 - z) n + z h  ==  n + z (h - n)
        hp_next = n + z * (hp - n)
        cache.append((hp, z, r, n, hn))
        H[lo:hi] = hp_next
        hp = hp_next
    out = np.empty_like(H)
    out[perm] = H

    def _back(g):
        G = g[perm]
        dA = np.empty_like(A)
        dU = np.zeros_like(U)
        carry = np.zeros((0, h))
        for (lo, hi), (hp, z, r, n, hn) in zip(reversed(bounds), reversed(cache)):
            # sequences that end here join with no incoming gradient
            dh = G[lo:hi].copy()
            dh[:len(carry)] += carry
            dpre_n = dh * (1.0 - z) * (1.0 - n * n)
            dpre_z = dh * (hp - n) * z * (1.0 - z)
            dpre_r = dpre_n * hn * r * (1.0 - r)
            dA[lo:hi, :h] = dpre_z
            dA[lo:hi, h:2 * h] = dpre_r
            dA[lo:hi, 2 * h:] = dpre_n
            dhh = dA[lo:hi].copy()
            dhh[:, 2 * h:] *= r
            dU += hp.T @ dhh
            carry = dh * z + dhh @ U.T
        dX = np.empty_like(X)
        dX[perm] = dA @ W.T
        return dX, X[perm].T @ dA, dA.sum(axis=0), dU

    return record("gru_layer", out, (x, w_in, b_in, w_hid), _back)
