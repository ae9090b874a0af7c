"""Stateful layers wrapping the functional kernels with parameter storage and caches."""
from __future__ import annotations

import numpy as np

from . import functional as F


def truncated_normal(rng, shape, std, dtype):
    """Normal(0, std) redrawn until every value lies within two deviations."""
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return (out * std).astype(dtype)


def fan_in_init(rng, shape, fan_in, dtype):
    return truncated_normal(rng, shape, np.sqrt(2.0 / fan_in), dtype)


class Layer:
    """Base class. ``params`` and ``buffers`` map names to arrays."""

    kind = None

    def __init__(self, name):
        self.name = name
        self.params = {}
        self.grads = {}
        self.buffers = {}
        self._cache = None

    def forward(self, x, training=False):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def _need_cache(self):
        if self._cache is None:
            raise RuntimeError(f"{self.name}: backward called before a training forward pass")
        return self._cache


class Conv2D(Layer):
    kind = "Conv2D"

    def __init__(self, name, kernel, cin, filters, padding, rng, dtype):
        super().__init__(name)
        kh, kw = kernel
        self.padding = padding
        self.params["kernel"] = fan_in_init(rng, (kh, kw, cin, filters), kh * kw * cin, dtype)
        self.params["bias"] = np.zeros(filters, dtype=dtype)

    def forward(self, x, training=False):
        y, cols = F.conv2d_forward(x, self.params["kernel"], self.params["bias"],
                                   self.padding, return_cols=True)
        self._cache = (x, cols) if training else None
        return y

    def backward(self, dy):
        x, cols = self._need_cache()
        dx, dw, db = F.conv2d_backward(dy, x, self.params["kernel"], self.padding, cols)
        self.grads = {"kernel": dw, "bias": db}
        return dx


class DepthwiseConv2D(Layer):
    kind = "DepthwiseConv2D"

    def __init__(self, name, kernel, channels, padding, rng, dtype):
        super().__init__(name)
        kh, kw = kernel
        self.padding = padding
        self.params["kernel"] = fan_in_init(rng, (kh, kw, channels), kh * kw, dtype)
        self.params["bias"] = np.zeros(channels, dtype=dtype)

    def forward(self, x, training=False):
        self._cache = x if training else None
        return F.depthwise_conv2d_forward(x, self.params["kernel"], self.params["bias"], self.padding)

    def backward(self, dy):
        x = self._need_cache()
        dx, dw, db = F.depthwise_conv2d_backward(dy, x, self.params["kernel"], self.padding)
        self.grads = {"kernel": dw, "bias": db}
        return dx


class SeparableConv2D(Layer):
    kind = "SeparableConv2D"

    def __init__(self, name, kernel, cin, filters, padding, rng, dtype):
        super().__init__(name)
        kh, kw = kernel
        self.padding = padding
        self.params["depthwise_kernel"] = fan_in_init(rng, (kh, kw, cin), kh * kw, dtype)
        self.params["pointwise_kernel"] = fan_in_init(rng, (1, 1, cin, filters), cin, dtype)
        self.params["bias"] = np.zeros(filters, dtype=dtype)

    def forward(self, x, training=False):
        p = self.params
        mid = F.depthwise_conv2d_forward(x, p["depthwise_kernel"], None, self.padding)
        y, cols = F.conv2d_forward(mid, p["pointwise_kernel"], p["bias"], "valid", return_cols=True)
        self._cache = (x, mid, cols) if training else None
        return y

    def backward(self, dy):
        x, mid, cols = self._need_cache()
        p = self.params
        dmid, dpw, db = F.conv2d_backward(dy, mid, p["pointwise_kernel"], "valid", cols)
        dx, ddw, _ = F.depthwise_conv2d_backward(dmid, x, p["depthwise_kernel"], self.padding)
        self.grads = {"depthwise_kernel": ddw, "pointwise_kernel": dpw, "bias": db}
        return dx


class ReLU(Layer):
    kind = "ReLU"

    def forward(self, x, training=False):
        self._cache = x if training else None
        return F.relu_forward(x)

    def backward(self, dy):
        return F.relu_backward(dy, self._need_cache())


class MaxPool2D(Layer):
    kind = "MaxPool2D"

    def forward(self, x, training=False):
        y, idx = F.maxpool2d_forward(x)
        self._cache = (idx, x.shape) if training else None
        return y

    def backward(self, dy):
        idx, shape = self._need_cache()
        return F.maxpool2d_backward(dy, idx, shape)


class BatchNorm(Layer):
    kind = "BatchNorm"

    def __init__(self, name, channels, dtype, momentum=0.99, eps=1e-3):
        super().__init__(name)
        self.momentum = momentum
        self.eps = eps
        self.params["gamma"] = np.ones(channels, dtype=dtype)
        self.params["beta"] = np.zeros(channels, dtype=dtype)
        self.buffers["moving_mean"] = np.zeros(channels, dtype=dtype)
        self.buffers["moving_var"] = np.ones(channels, dtype=dtype)

    def forward(self, x, training=False):
        y, cache, mean, var = F.batchnorm_forward(
            x, self.params["gamma"], self.params["beta"],
            self.buffers["moving_mean"], self.buffers["moving_var"],
            training, self.momentum, self.eps,
        )
        if training:
            self.buffers["moving_mean"] = mean.astype(x.dtype)
            self.buffers["moving_var"] = var.astype(x.dtype)
        self._cache = cache if training else None
        return y

    def backward(self, dy):
        dx, dg, db = F.batchnorm_backward(dy, self.params["gamma"], self._need_cache())
        self.grads = {"gamma": dg, "beta": db}
        return dx


class Flatten(Layer):
    kind = "Flatten"

    def forward(self, x, training=False):
        self._cache = x.shape if training else None
        return F.flatten_forward(x)

    def backward(self, dy):
        return dy.reshape(self._need_cache())


class Dense(Layer):
    kind = "Dense"

    def __init__(self, name, n_in, units, rng, dtype):
        super().__init__(name)
        self.params["kernel"] = fan_in_init(rng, (n_in, units), n_in, dtype)
        self.params["bias"] = np.zeros(units, dtype=dtype)

    def forward(self, x, training=False):
        self._cache = x if training else None
        return F.dense_forward(x, self.params["kernel"], self.params["bias"])

    def backward(self, dy):
        dx, dw, db = F.dense_backward(dy, self._need_cache(), self.params["kernel"])
        self.grads = {"kernel": dw, "bias": db}
        return dx


class Softmax(Layer):
    kind = "Softmax"

    def forward(self, x, training=False):
        p = F.softmax(x)
        self._cache = p if training else None
        return p

    def backward(self, dy):
        return F.softmax_backward(dy, self._need_cache())


def build_layer(spec, name, in_shape, rng, dtype):
    k = spec.kind
    if k == "Conv2D":
        return Conv2D(name, spec.kernel, in_shape[2], spec.filters, spec.padding, rng, dtype)
    if k == "DepthwiseConv2D":
        return DepthwiseConv2D(name, spec.kernel, in_shape[2], spec.padding, rng, dtype)
    if k == "SeparableConv2D":
        return SeparableConv2D(name, spec.kernel, in_shape[2], spec.filters, spec.padding, rng, dtype)
    if k == "BatchNorm":
        return BatchNorm(name, in_shape[-1], dtype)
    if k == "Dense":
        return Dense(name, in_shape[0], spec.units, rng, dtype)
    return {"ReLU": ReLU, "MaxPool2D": MaxPool2D, "Flatten": Flatten, "Softmax": Softmax}[k](name)
