"""Pure numpy implementations of the hot kernels.

Signature-compatible with the compiled extension ``fedalign._kernels``;
:mod:`fedalign.backend` picks whichever is importable. All arrays are
C-contiguous float64.
"""

from __future__ import annotations

import math

import numpy as np

ACT_IDENTITY = 0
ACT_RELU = 1
ACT_TANH = 2

NAME = "pure"


def linear_forward(X: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Affine map of a batch: rows of X through weights (out, in) plus bias."""
    return X @ W.T + b


def act_forward(code: int, P: np.ndarray) -> np.ndarray:
    if code == ACT_IDENTITY:
        return P
    if code == ACT_RELU:
        return np.maximum(P, 0.0)
    if code == ACT_TANH:
        return np.tanh(P)
    raise ValueError(f"unknown activation code {code}")


def act_backward(code: int, P: np.ndarray, dA: np.ndarray) -> np.ndarray:
    """Chain dA through the activation evaluated at pre-activation P."""
    if code == ACT_IDENTITY:
        return dA
    if code == ACT_RELU:
        return dA * (P > 0.0)
    if code == ACT_TANH:
        t = np.tanh(P)
        return dA * (1.0 - t * t)
    raise ValueError(f"unknown activation code {code}")


def linear_backward(
    X: np.ndarray, W: np.ndarray, dP: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of the affine map: (dW, db, dX) for upstream gradient dP."""
    dW = dP.T @ X
    db = dP.sum(axis=0)
    dX = dP @ W
    return dW, db, dX


def _sigmoid(x: float) -> float:
    # branch keeps exp() off large positive arguments
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def sgns_train(
    emb: np.ndarray, pairs: np.ndarray, negatives: np.ndarray, lr: float
) -> float:
    """One sequential pass of negative-sampling updates over (center, context) pairs.

    Updates ``emb`` in place, one gradient step per pair: the context vector is
    pushed toward the center, each sampled negative away from it. A negative
    draw that hits the pair's own center or context is skipped. The center
    update is accumulated and applied after the pair's negatives, so duplicate
    indices within one pair see the partially updated table exactly like the
    compiled kernel does. Returns the summed objective value.
    """
    d = emb.shape[1]
    total = 0.0
    for p in range(pairs.shape[0]):
        ctr = int(pairs[p, 0])
        ctx = int(pairs[p, 1])
        center = emb[ctr].copy()
        acc = np.zeros(d)

        x = float(emb[ctx] @ center)
        s = _sigmoid(x)
        total -= math.log(max(s, 1e-12))
        g = lr * (1.0 - s)
        acc += g * emb[ctx]
        emb[ctx] += g * center

        for k in range(negatives.shape[1]):
            neg = int(negatives[p, k])
            if neg == ctr or neg == ctx:
                continue
            x = float(emb[neg] @ center)
            s = _sigmoid(x)
            total -= math.log(max(1.0 - s, 1e-12))
            g = -lr * s
            acc += g * emb[neg]
            emb[neg] += g * center

        emb[ctr] += acc
    return total
