"""Forward/backward kernels for the layers used by the classifier.

Activations are NHWC. Convolutions use "same" zero padding and stride 1,
implemented as one matrix product over im2col patches. Weights are stored
as ``(s, s, C_in, C_out)``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LOG_EPS = np.log(1e-12)


def conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    s, _, cin, cout = w.shape
    n, h, wd, _ = x.shape
    p = s // 2
    xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
    # (n, h, w, cin, s, s) -> rows of cin*s*s patch values
    cols = sliding_window_view(xp, (s, s), axis=(1, 2)).reshape(n * h * wd, cin * s * s)
    wmat = w.transpose(2, 0, 1, 3).reshape(cin * s * s, cout)
    out = cols @ wmat
    out += b
    return out.reshape(n, h, wd, cout), (cols, x.shape)


def conv_backward(dout: np.ndarray, cache, w: np.ndarray, need_dx: bool = True):
    cols, xshape = cache
    s, _, cin, cout = w.shape
    n, h, wd, _ = xshape
    d2 = dout.reshape(-1, cout)
    dw = (cols.T @ d2).reshape(cin, s, s, cout).transpose(1, 2, 0, 3)
    db = d2.sum(axis=0)
    if not need_dx:
        return None, dw, db
    wmat = w.transpose(2, 0, 1, 3).reshape(cin * s * s, cout)
    dcols = (d2 @ wmat.T).reshape(n, h, wd, cin, s, s)
    p = s // 2
    dxp = np.zeros((n, h + 2 * p, wd + 2 * p, cin), dtype=dout.dtype)
    for i in range(s):
        for j in range(s):
            dxp[:, i:i + h, j:j + wd, :] += dcols[..., i, j]
    return dxp[:, p:p + h, p:p + wd, :], dw, db


def relu_forward(x: np.ndarray):
    return np.maximum(x, 0), x > 0


def relu_backward(dout: np.ndarray, mask: np.ndarray):
    return dout * mask


def pool_forward(x: np.ndarray):
    """2x2 max-pool, stride 2. Only the first maximum of a window (row-major)
    receives the gradient, so tied maxima are not double counted."""
    n, h, w, c = x.shape
    win = x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(n, h // 2, w // 2, c, 4)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    mask = (np.arange(4) == idx[..., None]).reshape(n, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
    return out, mask


def pool_backward(dout: np.ndarray, mask: np.ndarray):
    n, h2, _, w2, _, c = mask.shape
    d = mask * dout[:, :, None, :, None, :]
    return d.reshape(n, 2 * h2, 2 * w2, c)


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    return x @ w + b, x


def dense_backward(dout: np.ndarray, x: np.ndarray, w: np.ndarray, need_dx: bool = True):
    dx = dout @ w.T if need_dx else None
    return dx, x.T @ dout, dout.sum(axis=0)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(logits))


def weighted_cross_entropy(probs, labels, class_weights) -> float:
    """Mean of ``w[y] * -log p[y]`` with ``log p`` clamped at ``log(1e-12)``."""
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels)
    if probs.ndim != 2 or len(probs) == 0:
        raise ValueError("need a non-empty batch of probability vectors")
    w = np.asarray(class_weights, dtype=float)
    p = probs[np.arange(len(labels)), labels]
    return float(np.mean(w[labels] * -np.log(np.maximum(p, 1e-12))))


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray, class_weights: np.ndarray):
    """Weighted cross-entropy from logits, with its gradient and the softmax.

    The gradient ignores the log clamp, which only binds once p < 1e-12.
    """
    n = len(labels)
    if n == 0:
        raise ValueError("empty batch")
    logp = log_softmax(logits)
    w = class_weights[labels]
    rows = np.arange(n)
    loss = float(np.mean(w * -np.maximum(logp[rows, labels], LOG_EPS)))
    probs = np.exp(logp)
    grad = probs.copy()
    grad[rows, labels] -= 1.0
    grad *= (w / n)[:, None].astype(grad.dtype)
    return loss, grad, probs
