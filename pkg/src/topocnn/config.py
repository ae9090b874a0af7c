"""Flat ``key=value`` run configuration with dotted sections.

Precedence is command-line flags, then the config file, then defaults.
"""
from __future__ import annotations

from pathlib import Path

from .nn.config import ConfigError
from .spectral import BANDS


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _choice(*options):
    def parse(v):
        if v not in options:
            raise ValueError(f"{v!r} not in {{{', '.join(options)}}}")
        return v
    parse.__name__ = "one of " + "/".join(options)
    return parse


# key: (parser, default, help)
KEYS = {
    "paths.recordings": (str, None, "directory of .b2deeg recordings"),
    "paths.montage": (str, None, "montage file (.b2dloc); bundled 64-channel cap if unset"),
    "paths.out": (str, "out", "output directory"),
    "paths.dataset": (str, None, "dataset manifest; default <out>/dataset.b2dmanifest"),
    "paths.weights": (str, None, "weights file; default <out>/weights_fold<k>.b2dw"),
    "band": (_choice(*BANDS), "theta1", "frequency band"),
    "window_s": (float, 2.0, "window length in seconds"),
    "welch.seg_len": (int, 256, "Welch segment length (power of two)"),
    "welch.overlap": (float, 0.5, "Welch segment overlap fraction"),
    "topo.power": (float, 2.0, "inverse-distance weighting exponent"),
    "model.preset": (str, "reference", "architecture preset"),
    "model.file": (str, None, "inline architecture file, overrides the preset"),
    "model.dense_width": (int, None, "first dense layer width for the preset"),
    "hyper.batch": (int, 30, "mini-batch size"),
    "hyper.epochs": (int, 30, "training epochs (at most 30)"),
    "hyper.lr": (float, 1e-3, "learning rate"),
    "hyper.seed": (int, 0, "random seed"),
    "hyper.optimizer": (_choice("adam", "sgd"), "adam", "optimizer"),
    "hyper.threads": (int, None, "BLAS thread count"),
    "hyper.numeric_mode": (_choice("float32", "float64"), "float32", "storage/compute precision"),
    "fold": (str, "0", "fold index, comma list, or 'all'"),
    "strict": (_bool, False, "single-threaded bit-deterministic mode"),
}


def parse_file(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    out = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        out[key.strip()] = value.strip()
    return out


def resolve(file_values=None, flag_values=None):
    """Merge raw string values over defaults and coerce types."""
    merged = {k: d for k, (_, d, _) in KEYS.items()}
    for source in (file_values or {}, flag_values or {}):
        for key, value in source.items():
            if key not in KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            if value is None:
                continue
            try:
                merged[key] = KEYS[key][0](value)
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from None
    return merged


def parse_folds(spec, n_folds):
    if spec == "all":
        return list(range(n_folds))
    try:
        folds = [int(v) for v in spec.split(",")]
    except ValueError:
        raise ConfigError(f"fold: expected an index, list or 'all', got {spec!r}") from None
    for f in folds:
        if not 0 <= f < n_folds:
            raise ConfigError(f"fold {f} out of range [0, {n_folds})")
    return folds
