"""Timing benchmarks and intermediate activation dumps."""
from __future__ import annotations

import os
import statistics
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from ..nn.model import Model
from ..topomap import DEGENERATE_RANGE, write_ppm
from .training import HyperParams, train_model

CONV_KINDS = {"Conv2D", "DepthwiseConv2D", "SeparableConv2D"}


def ms_per_sample(test_s, n):
    """Exact rational milliseconds per sample."""
    if n < 1:
        raise ValueError("test set is empty")
    return Fraction(1000) * Fraction(test_s) / n


@dataclass
class TimingTable:
    """Median timings over repeats; times are exact fractions of a second."""

    train_s: Fraction
    test_s: Fraction
    test_ms_per_sample: Fraction
    n_train: int
    n_test: int
    repeats: int
    train_runs: list = field(default_factory=list)
    test_runs: list = field(default_factory=list)
    environment: dict = field(default_factory=dict)

    def format(self):
        env = " ".join(f"{k}={v}" for k, v in self.environment.items())
        return (f"train_s={float(self.train_s):.3f} test_s={float(self.test_s):.4f} "
                f"test_ms_per_sample={float(self.test_ms_per_sample):.4f} "
                f"n_train={self.n_train} n_test={self.n_test} repeats={self.repeats} {env}")


def _elapsed(t0_ns):
    return Fraction(time.perf_counter_ns() - t0_ns, 10**9)


def benchmark(cfg, ds, fold, hyper=HyperParams(), repeats=1, threads=None):
    """Median train and test wall-clock over ``repeats`` full runs."""
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    test_idx = ds.indices_for(fold.test_subjects)
    if len(test_idx) == 0:
        raise ValueError("benchmark needs a non-empty test set")
    train_runs, test_runs = [], []
    n_train = 0
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        model, report = train_model(cfg, ds, fold, hyper)
        train_runs.append(_elapsed(t0))
        n_train = report.n_train
        images = ds.images[test_idx]
        t0 = time.perf_counter_ns()
        model.predict(images)
        test_runs.append(_elapsed(t0))
    test_s = statistics.median(test_runs)
    env = {"threads": threads if threads is not None else os.cpu_count(),
           "numeric_mode": hyper.numeric_mode}
    return TimingTable(statistics.median(train_runs), test_s,
                       ms_per_sample(test_s, len(test_idx)), n_train, len(test_idx),
                       repeats, train_runs, test_runs, env)


def single_image_latency_ms(model, image, repeats=50, warmup=5):
    """Median batch-of-one inference time in milliseconds."""
    x = np.asarray(image)[None]
    for _ in range(warmup):
        model.forward(x)
    runs = []
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        model.forward(x)
        runs.append((time.perf_counter_ns() - t0) / 1e6)
    return statistics.median(runs)


@dataclass
class ActivationMap:
    layer: str
    filter_index: int
    raw: np.ndarray
    normalized: np.ndarray


def normalize_map(a):
    a = np.asarray(a, dtype=np.float64)
    lo, hi = a.min(), a.max()
    if hi - lo < DEGENERATE_RANGE:
        return np.full_like(a, 0.5)
    return (a - lo) / (hi - lo)


def dump_activations(model: Model, image, layers=("b1_conv", "b1_dwconv"), n_filters=5,
                     out_dir=None):
    """Per-filter 2D output maps of convolutional layers for one image.

    With ``out_dir`` each normalised map is also written as a grey PPM named
    ``<layer>_f<k>.ppm``.
    """
    kinds = {l.name: l.kind for l in model.layers}
    for name in layers:
        if name not in kinds:
            raise KeyError(f"unknown layer {name!r}")
        if kinds[name] not in CONV_KINDS:
            raise ValueError(f"layer {name!r} is a {kinds[name]}, not a convolution")
    acts = model.activations(image, layers)
    maps = []
    for name in layers:
        out = acts[name][0]
        for k in range(min(n_filters, out.shape[-1])):
            raw = out[:, :, k]
            maps.append(ActivationMap(name, k, raw, normalize_map(raw)))
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for m in maps:
            write_ppm(m.normalized, out_dir / f"{m.layer}_f{m.filter_index}.ppm")
    return maps
