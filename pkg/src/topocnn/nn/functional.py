"""Forward and backward kernels for the layer set, channels-last (N, H, W, C).

Every kernel preserves the dtype of its inputs, so a model stored in float32
computes in float32 and a float64 model computes in float64.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

PADDINGS = ("valid", "same")


def pad_amounts(k, padding):
    """(before, after) zero padding; 'same' puts the odd pixel after."""
    if padding == "valid":
        return 0, 0
    if padding == "same":
        total = k - 1
        return total // 2, total - total // 2
    raise ValueError(f"padding must be one of {PADDINGS}, got {padding!r}")


def output_size(size, k, padding):
    before, after = pad_amounts(k, padding)
    return size + before + after - k + 1


def _pad(x, kh, kw, padding):
    (t, b), (l, r) = pad_amounts(kh, padding), pad_amounts(kw, padding)
    if t == b == l == r == 0:
        return x
    return np.pad(x, ((0, 0), (t, b), (l, r), (0, 0)))


def _unpad(xp, kh, kw, padding, h, w):
    t, _ = pad_amounts(kh, padding)
    l, _ = pad_amounts(kw, padding)
    return xp[:, t:t + h, l:l + w, :]


def _check_input(x, name="input"):
    if x.ndim != 4:
        raise ValueError(f"{name} must be rank 4 (N, H, W, C), got shape {x.shape}")


def _check_spatial(x, kh, kw, padding):
    ho = output_size(x.shape[1], kh, padding)
    wo = output_size(x.shape[2], kw, padding)
    if ho < 1:
        raise ValueError(f"height {x.shape[1]} too small for kernel height {kh} ({padding})")
    if wo < 1:
        raise ValueError(f"width {x.shape[2]} too small for kernel width {kw} ({padding})")
    return ho, wo


def im2col(x, kh, kw, padding):
    xp = _pad(x, kh, kw, padding)
    n, c = x.shape[0], x.shape[3]
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))  # N, Ho, Wo, C, kh, kw
    ho, wo = win.shape[1], win.shape[2]
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * ho * wo, kh * kw * c)
    return cols, (ho, wo)


def conv2d_forward(x, weights, bias, padding="valid", return_cols=False):
    _check_input(x)
    if weights.ndim != 4:
        raise ValueError(f"conv kernel must be rank 4 (kh, kw, Cin, Cout), got {weights.shape}")
    kh, kw, cin, cout = weights.shape
    if x.shape[3] != cin:
        raise ValueError(f"input channels {x.shape[3]} != kernel Cin {cin}")
    if bias is not None and bias.shape != (cout,):
        raise ValueError(f"bias shape {bias.shape} != (Cout={cout},)")
    _check_spatial(x, kh, kw, padding)
    cols, (ho, wo) = im2col(x, kh, kw, padding)
    y = cols @ weights.reshape(kh * kw * cin, cout)
    if bias is not None:
        y = y + bias
    y = y.reshape(x.shape[0], ho, wo, cout)
    return (y, cols) if return_cols else y


def conv2d_backward(dy, x, weights, padding="valid", cols=None):
    kh, kw, cin, cout = weights.shape
    n, h, w, _ = x.shape
    ho, wo = dy.shape[1], dy.shape[2]
    if cols is None:
        cols, _ = im2col(x, kh, kw, padding)
    dy2 = dy.reshape(-1, cout)
    dw = (cols.T @ dy2).reshape(weights.shape)
    db = dy2.sum(axis=0)
    dcols = (dy2 @ weights.reshape(kh * kw * cin, cout).T).reshape(n, ho, wo, kh, kw, cin)
    dxp = np.zeros((n, ho + kh - 1, wo + kw - 1, cin), dtype=dy.dtype)
    for a in range(kh):
        for b in range(kw):
            dxp[:, a:a + ho, b:b + wo, :] += dcols[:, :, :, a, b, :]
    return _unpad(dxp, kh, kw, padding, h, w), dw, db


def depthwise_conv2d_forward(x, weights, bias, padding="valid"):
    _check_input(x)
    if weights.ndim != 3:
        raise ValueError(f"depthwise kernel must be rank 3 (kh, kw, C), got {weights.shape}")
    kh, kw, c = weights.shape
    if x.shape[3] != c:
        raise ValueError(f"input channels {x.shape[3]} != kernel channels {c}")
    if bias is not None and bias.shape != (c,):
        raise ValueError(f"bias shape {bias.shape} != (C={c},)")
    ho, wo = _check_spatial(x, kh, kw, padding)
    xp = _pad(x, kh, kw, padding)
    y = xp[:, 0:ho, 0:wo, :] * weights[0, 0]
    for a in range(kh):
        for b in range(kw):
            if a == 0 and b == 0:
                continue
            y = y + xp[:, a:a + ho, b:b + wo, :] * weights[a, b]
    if bias is not None:
        y = y + bias
    return y


def depthwise_conv2d_backward(dy, x, weights, padding="valid"):
    kh, kw, c = weights.shape
    n, h, w, _ = x.shape
    ho, wo = dy.shape[1], dy.shape[2]
    xp = _pad(x, kh, kw, padding)
    dw = np.empty_like(weights)
    dxp = np.zeros((n, ho + kh - 1, wo + kw - 1, c), dtype=dy.dtype)
    for a in range(kh):
        for b in range(kw):
            dw[a, b] = np.einsum("nhwc,nhwc->c", xp[:, a:a + ho, b:b + wo, :], dy)
            dxp[:, a:a + ho, b:b + wo, :] += dy * weights[a, b]
    db = dy.sum(axis=(0, 1, 2))
    return _unpad(dxp, kh, kw, padding, h, w), dw, db


def separable_conv2d_forward(x, depthwise_w, pointwise_w, bias, padding="valid"):
    """Depthwise (no bias) followed by a 1x1 convolution with bias."""
    if pointwise_w.ndim != 4 or pointwise_w.shape[:2] != (1, 1):
        raise ValueError(f"pointwise kernel must be (1, 1, Cin, Cout), got {pointwise_w.shape}")
    mid = depthwise_conv2d_forward(x, depthwise_w, None, padding)
    return conv2d_forward(mid, pointwise_w, bias, "valid")


def maxpool2d_forward(x):
    """2x2 / stride 2 max pool; a trailing odd row or column is dropped."""
    _check_input(x)
    n, h, w, c = x.shape
    if h < 2 or w < 2:
        raise ValueError(f"max pool needs H, W >= 2, got {h}x{w}")
    ho, wo = h // 2, w // 2
    blocks = (
        x[:, : 2 * ho, : 2 * wo, :]
        .reshape(n, ho, 2, wo, 2, c)
        .transpose(0, 1, 3, 5, 2, 4)
        .reshape(n, ho, wo, c, 4)
    )
    idx = blocks.argmax(axis=-1)
    y = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
    return y, idx


def maxpool2d_backward(dy, idx, x_shape):
    n, h, w, c = x_shape
    ho, wo = dy.shape[1], dy.shape[2]
    d = np.zeros((n, ho, wo, c, 4), dtype=dy.dtype)
    np.put_along_axis(d, idx[..., None], dy[..., None], axis=-1)
    d = d.reshape(n, ho, wo, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(n, 2 * ho, 2 * wo, c)
    if (2 * ho, 2 * wo) == (h, w):
        return d
    dx = np.zeros(x_shape, dtype=dy.dtype)
    dx[:, : 2 * ho, : 2 * wo, :] = d
    return dx


def batchnorm_forward(x, gamma, beta, running_mean, running_var, training,
                      momentum=0.99, eps=1e-3):
    """Returns (y, cache, new_running_mean, new_running_var)."""
    axes = tuple(range(x.ndim - 1))
    if training:
        m = int(np.prod([x.shape[a] for a in axes]))
        if m < 2:
            raise ValueError("batch norm in training mode needs at least 2 values per channel")
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        new_mean = momentum * running_mean + (1 - momentum) * mean
        new_var = momentum * running_var + (1 - momentum) * var
    else:
        mean, var = running_mean, running_var
        new_mean, new_var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean) * inv_std
    y = gamma * xhat + beta
    return y, (xhat, inv_std), new_mean, new_var


def batchnorm_backward(dy, gamma, cache):
    """Gradient through training-mode batch statistics."""
    xhat, inv_std = cache
    axes = tuple(range(dy.ndim - 1))
    m = int(np.prod([dy.shape[a] for a in axes]))
    dgamma = (dy * xhat).sum(axis=axes)
    dbeta = dy.sum(axis=axes)
    dxhat = dy * gamma
    dx = (inv_std / m) * (
        m * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes)
    )
    return dx, dgamma, dbeta


def relu_forward(x):
    return np.maximum(x, 0)


def relu_backward(dy, x):
    return dy * (x > 0)


def flatten_forward(x):
    return x.reshape(x.shape[0], -1)


def dense_forward(x, weights, bias):
    if x.ndim != 2 or weights.ndim != 2 or x.shape[1] != weights.shape[0]:
        raise ValueError(f"dense: input {x.shape} incompatible with weights {weights.shape}")
    if bias.shape != (weights.shape[1],):
        raise ValueError(f"dense: bias {bias.shape} != ({weights.shape[1]},)")
    return x @ weights + bias


def dense_backward(dy, x, weights):
    return dy @ weights.T, x.T @ dy, dy.sum(axis=0)


def softmax(x):
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(dy, probs):
    return probs * (dy - (dy * probs).sum(axis=-1, keepdims=True))


PROB_CLIP = 1e-7


def _check_one_hot(labels):
    ok = np.all((labels == 0) | (labels == 1)) and np.all(labels.sum(axis=-1) == 1)
    if not ok:
        raise ValueError("labels must be one-hot rows")


def cross_entropy_loss(probs, labels):
    """Mean categorical cross-entropy of probability rows against one-hot labels."""
    probs = np.asarray(probs)
    labels = np.asarray(labels)
    if probs.shape != labels.shape or probs.ndim != 2:
        raise ValueError(f"probs {probs.shape} and labels {labels.shape} must match (N, K)")
    _check_one_hot(labels)
    if np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-5):
        raise ValueError("probability rows must sum to 1")
    p = np.clip(probs, PROB_CLIP, 1.0 - PROB_CLIP)
    return float(-np.mean(np.log(np.sum(p * labels, axis=1))))


def softmax_cross_entropy_grad(probs, labels):
    """d(mean CE)/d(logits) for a softmax output."""
    return (probs - labels) / probs.shape[0]


def one_hot(labels, n_classes):
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out
