"""Declarative model architectures, static shape checks and parameter counts."""
from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field, replace

import numpy as np

from .functional import PADDINGS, output_size

LAYER_KINDS = (
    "Conv2D", "DepthwiseConv2D", "SeparableConv2D", "ReLU", "MaxPool2D",
    "BatchNorm", "Flatten", "Dense", "Softmax",
)
_KERNEL_KINDS = {"Conv2D", "DepthwiseConv2D", "SeparableConv2D"}
_FILTER_KINDS = {"Conv2D", "SeparableConv2D"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    kernel: tuple = None
    filters: int = None
    units: int = None
    padding: str = None
    name: str = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigError(f"unknown layer kind {self.kind!r}")
        if self.kind in _KERNEL_KINDS:
            if self.kernel is None or len(self.kernel) != 2 or min(self.kernel) < 1:
                raise ConfigError(f"{self.kind} needs a (kh, kw) kernel")
            object.__setattr__(self, "kernel", tuple(int(k) for k in self.kernel))
            if self.padding is None:
                object.__setattr__(self, "padding", "same")
            if self.padding not in PADDINGS:
                raise ConfigError(f"{self.kind}: padding must be one of {PADDINGS}")
        elif self.kernel is not None or self.padding is not None:
            raise ConfigError(f"{self.kind} takes no kernel or padding")
        if self.kind in _FILTER_KINDS:
            if not self.filters or self.filters < 1:
                raise ConfigError(f"{self.kind} needs filters >= 1")
        elif self.filters is not None:
            raise ConfigError(f"{self.kind} takes no filters")
        if self.kind == "Dense":
            if not self.units or self.units < 1:
                raise ConfigError("Dense needs units >= 1")
        elif self.units is not None:
            raise ConfigError(f"{self.kind} takes no units")

    def describe(self):
        parts = [self.kind]
        if self.kernel:
            parts.append(f"kernel={self.kernel[0]}x{self.kernel[1]}")
        if self.filters:
            parts.append(f"filters={self.filters}")
        if self.units:
            parts.append(f"units={self.units}")
        if self.padding:
            parts.append(f"padding={self.padding}")
        if self.name:
            parts.append(f"name={self.name}")
        return " ".join(parts)


@dataclass(frozen=True)
class ModelConfig:
    layers: tuple
    input_shape: tuple = (32, 32, 3)
    n_classes: int = 3

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        validate(self)

    def layer_names(self):
        names, counts = [], {}
        for spec in self.layers:
            if spec.name:
                names.append(spec.name)
                continue
            base = spec.kind.lower()
            counts[base] = counts.get(base, 0) + 1
            names.append(f"{base}_{counts[base]}")
        if len(set(names)) != len(names):
            raise ConfigError("layer names must be unique")
        return names

    def to_text(self):
        h, w, c = self.input_shape
        lines = [f"input {h}x{w}x{c}", f"classes {self.n_classes}"]
        lines.extend(spec.describe() for spec in self.layers)
        return "\n".join(lines) + "\n"

    def digest(self):
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


def parse_config_text(text):
    """Inverse of :meth:`ModelConfig.to_text`."""
    input_shape, n_classes, layers = (32, 32, 3), 3, []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        try:
            if head == "input":
                input_shape = tuple(int(v) for v in rest[0].split("x"))
                continue
            if head == "classes":
                n_classes = int(rest[0])
                continue
            kw = {}
            for token in rest:
                key, _, value = token.partition("=")
                if key == "kernel":
                    kw["kernel"] = tuple(int(v) for v in value.split("x"))
                elif key in ("filters", "units"):
                    kw[key] = int(value)
                elif key in ("padding", "name"):
                    kw[key] = value
                else:
                    raise ConfigError(f"unknown layer attribute {key!r}")
            layers.append(LayerSpec(head, **kw))
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"model config line {lineno}: {exc}") from None
    return ModelConfig(tuple(layers), input_shape, n_classes)


def infer_shapes(cfg):
    """Per-layer output shapes (without the batch axis)."""
    shape = tuple(cfg.input_shape)
    shapes = []
    for i, spec in enumerate(cfg.layers):
        k = spec.kind
        where = f"layer {i} ({k})"
        if k in _KERNEL_KINDS:
            if len(shape) != 3:
                raise ConfigError(f"{where}: needs an image input, got {shape}")
            h = output_size(shape[0], spec.kernel[0], spec.padding)
            w = output_size(shape[1], spec.kernel[1], spec.padding)
            if h < 1 or w < 1:
                raise ConfigError(f"{where}: kernel {spec.kernel} larger than input {shape[:2]}")
            c = shape[2] if k == "DepthwiseConv2D" else spec.filters
            shape = (h, w, c)
        elif k == "MaxPool2D":
            if len(shape) != 3 or shape[0] < 2 or shape[1] < 2:
                raise ConfigError(f"{where}: cannot pool {shape}")
            shape = (shape[0] // 2, shape[1] // 2, shape[2])
        elif k == "Flatten":
            shape = (int(np.prod(shape)),)
        elif k == "Dense":
            if len(shape) != 1:
                raise ConfigError(f"{where}: needs a flat input, got {shape}")
            shape = (spec.units,)
        shapes.append(shape)
    return shapes


def validate(cfg):
    if len(cfg.input_shape) != 3 or min(cfg.input_shape) < 1:
        raise ConfigError(f"input shape must be (H, W, C), got {cfg.input_shape}")
    if cfg.n_classes < 2:
        raise ConfigError("need at least two classes")
    if len(cfg.layers) < 2 or cfg.layers[-1].kind != "Softmax":
        raise ConfigError("the last layer must be Softmax")
    before = cfg.layers[-2]
    if before.kind != "Dense" or before.units != cfg.n_classes:
        raise ConfigError(f"the layer before Softmax must be Dense({cfg.n_classes})")
    if any(s.kind == "Softmax" for s in cfg.layers[:-1]):
        raise ConfigError("Softmax is only allowed as the last layer")
    infer_shapes(cfg)
    cfg.layer_names()


def layer_param_count(spec, in_shape):
    k = spec.kind
    if k == "Conv2D":
        kh, kw = spec.kernel
        return kh * kw * in_shape[2] * spec.filters + spec.filters
    if k == "DepthwiseConv2D":
        kh, kw = spec.kernel
        return kh * kw * in_shape[2] + in_shape[2]
    if k == "SeparableConv2D":
        kh, kw = spec.kernel
        c = in_shape[2]
        return kh * kw * c + c * spec.filters + spec.filters
    if k == "BatchNorm":
        return 2 * in_shape[-1]
    if k == "Dense":
        return in_shape[0] * spec.units + spec.units
    return 0


@dataclass
class ParamRow:
    name: str
    kind: str
    output_shape: tuple
    params: int


@dataclass
class ParamReport:
    rows: list
    total: int

    def format(self):
        lines = [f"{'layer':<22}{'kind':<18}{'output':<16}{'params':>10}"]
        for r in self.rows:
            shape = "x".join(str(d) for d in r.output_shape)
            lines.append(f"{r.name:<22}{r.kind:<18}{shape:<16}{r.params:>10,}")
        lines.append(f"{'total':<56}{self.total:>10,}")
        return "\n".join(lines)


def count_params(cfg) -> ParamReport:
    """Trainable parameters per layer; batch-norm running statistics excluded."""
    shapes = infer_shapes(cfg)
    in_shapes = [tuple(cfg.input_shape)] + shapes[:-1]
    rows = [
        ParamRow(name, spec.kind, out, layer_param_count(spec, inp))
        for name, spec, inp, out in zip(cfg.layer_names(), cfg.layers, in_shapes, shapes)
    ]
    return ParamReport(rows, sum(r.params for r in rows))


# Reference architecture -----------------------------------------------------

REFERENCE_DENSE_WIDTH = 204
N_CONV_LAYERS = 6


def reference_config(dense_width=REFERENCE_DENSE_WIDTH, paddings="same",
                     block3_pool=True, input_shape=(32, 32, 3), n_classes=3):
    """The four-block lightweight network.

    ``paddings`` is one padding for all six convolutions or a sequence of six.
    """
    if isinstance(paddings, str):
        paddings = (paddings,) * N_CONV_LAYERS
    if len(paddings) != N_CONV_LAYERS:
        raise ConfigError(f"need {N_CONV_LAYERS} paddings, got {len(paddings)}")
    p = list(paddings)
    layers = [
        LayerSpec("Conv2D", (3, 3), 64, padding=p[0], name="b1_conv"),
        LayerSpec("DepthwiseConv2D", (2, 2), padding=p[1], name="b1_dwconv"),
        LayerSpec("ReLU", name="b1_relu"),
        LayerSpec("MaxPool2D", name="b1_pool"),
        LayerSpec("BatchNorm", name="b1_bn"),
        LayerSpec("Conv2D", (2, 2), 64, padding=p[2], name="b2_conv"),
        LayerSpec("DepthwiseConv2D", (2, 2), padding=p[3], name="b2_dwconv"),
        LayerSpec("ReLU", name="b2_relu"),
        LayerSpec("MaxPool2D", name="b2_pool"),
        LayerSpec("BatchNorm", name="b2_bn"),
        LayerSpec("Conv2D", (2, 2), 64, padding=p[4], name="b3_conv"),
        LayerSpec("SeparableConv2D", (2, 2), 12, padding=p[5], name="b3_sepconv"),
    ]
    if block3_pool:
        layers.append(LayerSpec("MaxPool2D", name="b3_pool"))
    layers += [
        LayerSpec("BatchNorm", name="b3_bn"),
        LayerSpec("Flatten", name="b4_flatten"),
        LayerSpec("Dense", units=dense_width, name="b4_dense"),
        LayerSpec("Dense", units=n_classes, name="b4_out"),
        LayerSpec("Softmax", name="b4_softmax"),
    ]
    return ModelConfig(tuple(layers), input_shape, n_classes)


PRESETS = {"reference": reference_config}


def preset(name, **kw):
    try:
        return PRESETS[name](**kw)
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None


def replace_layer(cfg, name, **changes):
    names = cfg.layer_names()
    if name not in names:
        raise ConfigError(f"no layer named {name!r}")
    layers = list(cfg.layers)
    i = names.index(name)
    layers[i] = replace(layers[i], **changes)
    return ModelConfig(tuple(layers), cfg.input_shape, cfg.n_classes)


# Dense width search ---------------------------------------------------------

@dataclass(frozen=True)
class WidthCandidate:
    paddings: tuple
    block3_pool: bool
    dense_width: int
    total: int
    delta: int

    def describe(self):
        pads = ",".join(self.paddings)
        pool = "on" if self.block3_pool else "off"
        return (f"paddings=[{pads}] block3_pool={pool} dense_width={self.dense_width} "
                f"total={self.total:,} delta={self.delta:+,}")


@dataclass
class WidthSearch:
    target: int
    exact: list = field(default_factory=list)
    nearest: list = field(default_factory=list)
    n_searched: int = 0


def solve_dense_width(target_total, template=reference_config, widths=(1, 4096),
                      n_nearest=5):
    """Search padding variants x block-3 pooling x first dense width for ``target_total``.

    ``template(dense_width=, paddings=, block3_pool=)`` builds each candidate.
    Exact matches are returned in ``exact``; the closest candidates by
    absolute delta are always listed in ``nearest``.
    """
    lo, hi = widths
    w = np.arange(lo, hi + 1, dtype=np.int64)
    result = WidthSearch(target_total)
    best = []
    for paddings in itertools.product(PADDINGS, repeat=N_CONV_LAYERS):
        for pool in (True, False):
            try:
                totals = np.array(
                    [count_params(template(dense_width=int(x), paddings=paddings,
                                           block3_pool=pool)).total for x in (lo, lo + 1)]
                )
            except ConfigError:
                continue
            # counts are affine in the dense width: check it before extrapolating
            slope = int(totals[1] - totals[0])
            all_totals = totals[0] + slope * (w - lo)
            probe = int(w[-1])
            check = count_params(template(dense_width=probe, paddings=paddings,
                                          block3_pool=pool)).total
            if check != int(all_totals[-1]):
                raise RuntimeError(f"parameter count is not affine in the dense width ({paddings})")
            result.n_searched += len(w)
            delta = all_totals - target_total
            for i in np.flatnonzero(delta == 0):
                result.exact.append(
                    WidthCandidate(paddings, pool, int(w[i]), int(all_totals[i]), 0)
                )
            i = int(np.argmin(np.abs(delta)))
            best.append(WidthCandidate(paddings, pool, int(w[i]), int(all_totals[i]), int(delta[i])))
    best.sort(key=lambda c: (abs(c.delta), c.paddings, not c.block3_pool, c.dense_width))
    result.nearest = best[:n_nearest]
    return result
