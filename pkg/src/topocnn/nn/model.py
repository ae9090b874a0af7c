"""Sequential model built from a :class:`ModelConfig`."""
from __future__ import annotations

import numpy as np

from . import functional as F
from .config import infer_shapes
from .layers import build_layer

NUMERIC_MODES = {"float32": np.float32, "float64": np.float64}


class NumericError(ArithmeticError):
    """Loss or activations became non-finite."""


def resolve_dtype(mode):
    if isinstance(mode, str):
        try:
            return np.dtype(NUMERIC_MODES[mode])
        except KeyError:
            raise ValueError(f"numeric mode must be one of {', '.join(NUMERIC_MODES)}") from None
    return np.dtype(mode)


class Model:
    def __init__(self, cfg, seed=0, dtype="float32"):
        self.cfg = cfg
        self.dtype = resolve_dtype(dtype)
        rng = np.random.default_rng(seed)
        shapes = [tuple(cfg.input_shape)] + infer_shapes(cfg)
        self.layers = [
            build_layer(spec, name, shapes[i], rng, self.dtype)
            for i, (spec, name) in enumerate(zip(cfg.layers, cfg.layer_names()))
        ]
        self.last_probs = None

    def _prepare(self, x):
        x = np.asarray(x)
        if x.ndim == 3:
            x = x[None]
        if x.shape[1:] != tuple(self.cfg.input_shape):
            raise ValueError(f"input shape {x.shape[1:]} != model input {self.cfg.input_shape}")
        return x.astype(self.dtype, copy=False)

    def forward(self, x, training=False):
        """Class probabilities for a batch (N, H, W, C)."""
        x = self._prepare(x)
        for layer in self.layers:
            x = layer.forward(x, training)
        self.last_probs = x if training else None
        return x

    def logits(self, x):
        x = self._prepare(x)
        for layer in self.layers[:-1]:
            x = layer.forward(x, False)
        return x

    def backward(self, labels):
        """Backpropagate mean cross-entropy; fills every layer's ``grads``.

        ``labels`` are one-hot rows or integer class ids.
        """
        if self.last_probs is None:
            raise RuntimeError("backward called before a training forward pass")
        labels = np.asarray(labels)
        if labels.ndim == 1:
            labels = F.one_hot(labels, self.cfg.n_classes)
        g = F.softmax_cross_entropy_grad(self.last_probs, labels.astype(self.dtype))
        for layer in reversed(self.layers[:-1]):
            g = layer.backward(g)
        return g

    def train_step(self, x, labels):
        """Forward in training mode, backward, return the loss."""
        labels = np.asarray(labels)
        onehot = F.one_hot(labels, self.cfg.n_classes) if labels.ndim == 1 else labels
        probs = self.forward(x, training=True)
        loss = F.cross_entropy_loss(probs.astype(np.float64), onehot)
        if not np.isfinite(loss):
            raise NumericError(f"non-finite loss {loss}")
        self.backward(onehot)
        return loss

    def predict_proba(self, x, batch_size=256):
        x = self._prepare(x)
        out = [self.forward(x[i:i + batch_size]) for i in range(0, len(x), batch_size)]
        if not out:
            return np.zeros((0, self.cfg.n_classes), dtype=self.dtype)
        return np.concatenate(out)

    def predict(self, x, batch_size=256):
        return self.predict_proba(x, batch_size).argmax(axis=1)

    def activations(self, x, names):
        """Outputs of the named layers for one inference pass."""
        wanted = set(names)
        known = {layer.name for layer in self.layers}
        unknown = wanted - known
        if unknown:
            raise KeyError(f"unknown layer(s): {', '.join(sorted(unknown))}")
        x = self._prepare(x)
        out = {}
        for layer in self.layers:
            x = layer.forward(x, False)
            if layer.name in wanted:
                out[layer.name] = x
        return out

    def params(self):
        """Trainable tensors keyed ``layer/param`` (live references)."""
        return {f"{l.name}/{k}": v for l in self.layers for k, v in l.params.items()}

    def grads(self):
        return {f"{l.name}/{k}": v for l in self.layers for k, v in l.grads.items()}

    def buffers(self):
        return {f"{l.name}/{k}": v for l in self.layers for k, v in l.buffers.items()}

    def state(self):
        """Parameters then non-trainable buffers, in layer order."""
        out = {}
        for l in self.layers:
            out.update({f"{l.name}/{k}": v for k, v in l.params.items()})
            out.update({f"{l.name}/{k}": v for k, v in l.buffers.items()})
        return out

    def load_state(self, state):
        """Copy tensors in; every model tensor must be present with its exact shape."""
        current = self.state()
        for name, arr in current.items():
            if name not in state:
                raise KeyError(f"missing tensor {name}")
            if tuple(state[name].shape) != arr.shape:
                raise ValueError(
                    f"tensor {name}: shape {tuple(state[name].shape)} != expected {arr.shape}"
                )
        for l in self.layers:
            for store in (l.params, l.buffers):
                for k in store:
                    store[k] = np.array(state[f"{l.name}/{k}"], dtype=self.dtype)

    def n_trainable(self):
        return int(sum(v.size for v in self.params().values()))
