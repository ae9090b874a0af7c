"""Ablation suites: filter/kernel variants, component order, layer substitution."""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, replace

from ..nn.config import (ConfigError, LayerSpec, ModelConfig, count_params, infer_shapes,
                         reference_config)
from .training import HyperParams, train_model

ORDERABLE = ("ReLU", "MaxPool2D", "BatchNorm")


@dataclass(frozen=True)
class Mutation:
    id: str
    description: str
    cfg: ModelConfig


def _mutate(mid, description, build):
    try:
        return Mutation(mid, description, build())
    except ConfigError as exc:
        raise ConfigError(f"mutation {mid}: {exc}") from None


def _with_layers(base, layers):
    return ModelConfig(tuple(layers), base.input_shape, base.n_classes)


def _set(base, name, **changes):
    names = base.layer_names()
    layers = list(base.layers)
    i = names.index(name)
    layers[i] = replace(layers[i], **changes)
    return _with_layers(base, layers)


def suite_a(base=None):
    """Filter counts and kernel sizes of each block's standard convolution."""
    base = base or reference_config()
    out = []
    for block in (1, 2, 3):
        name = f"b{block}_conv"
        spec = base.layers[base.layer_names().index(name)]
        for filters in (32, 96):
            out.append(_mutate(f"A-b{block}-f{filters}",
                               f"block {block} conv filters {spec.filters}->{filters}",
                               lambda n=name, f=filters: _set(base, n, filters=f)))
        k = 2 if spec.kernel == (3, 3) else 3
        out.append(_mutate(f"A-b{block}-k{k}",
                           f"block {block} conv kernel {spec.kernel[0]}x{spec.kernel[1]}->{k}x{k}",
                           lambda n=name, k=k: _set(base, n, kernel=(k, k))))
    return out


def suite_b(base=None, blocks=("b1", "b2")):
    """Every ordering of ReLU, max-pool and batch-norm, applied to the given blocks."""
    base = base or reference_config()
    names = base.layer_names()
    out = []
    for order in itertools.permutations(ORDERABLE):
        def build(order=order):
            layers = list(base.layers)
            for block in blocks:
                slots = [i for i, (n, s) in enumerate(zip(names, base.layers))
                         if n.startswith(block + "_") and s.kind in ORDERABLE]
                by_kind = {base.layers[i].kind: base.layers[i] for i in slots}
                if sorted(by_kind) != sorted(ORDERABLE):
                    raise ConfigError(f"block {block} lacks one of {ORDERABLE}")
                for i, kind in zip(slots, order):
                    layers[i] = by_kind[kind]
            return _with_layers(base, layers)
        short = "-".join({"ReLU": "relu", "MaxPool2D": "pool", "BatchNorm": "bn"}[k] for k in order)
        out.append(_mutate(f"B-{short}", f"component order {' -> '.join(order)}", build))
    return out


def suite_c(base=None):
    """Replace depthwise (and the separable) convolutions with standard ones."""
    base = base or reference_config()
    names = base.layer_names()
    shapes = [tuple(base.input_shape)] + infer_shapes(base)

    def to_standard(layers, name):
        i = names.index(name)
        spec = layers[i]
        filters = spec.filters if spec.kind == "SeparableConv2D" else shapes[i][2]
        layers[i] = LayerSpec("Conv2D", spec.kernel, filters, padding=spec.padding, name=spec.name)

    def build(targets):
        layers = list(base.layers)
        for t in targets:
            to_standard(layers, t)
        return _with_layers(base, layers)

    dw = [n for n, s in zip(names, base.layers) if s.kind == "DepthwiseConv2D"]
    sep = [n for n, s in zip(names, base.layers) if s.kind == "SeparableConv2D"]
    out = [_mutate(f"C-{n}", f"{n}: depthwise -> standard conv", lambda n=n: build([n])) for n in dw]
    if len(dw) > 1:
        out.append(_mutate("C-all-dw", "all depthwise -> standard conv", lambda: build(dw)))
    out += [_mutate(f"C-{n}", f"{n}: separable -> standard conv", lambda n=n: build([n])) for n in sep]
    return out


SUITES = {"A": suite_a, "B": suite_b, "C": suite_c}


@dataclass
class AblationRow:
    mutation_id: str
    description: str
    fold_index: int
    params: int
    report: object


def run_ablation(suite, ds, folds, hyper=HyperParams(), log=None):
    rows = []
    for mutation in suite:
        n_params = count_params(mutation.cfg).total
        for fold in folds:
            _, report = train_model(mutation.cfg, ds, fold, hyper)
            rows.append(AblationRow(mutation.id, mutation.description, fold.fold_index,
                                    n_params, report))
            if log:
                acc = report.test.accuracy if report.test else float("nan")
                log(f"{mutation.id} fold {fold.fold_index}: params {n_params} test acc {acc:.4f}")
    return rows


ABLATION_FIELDS = ("mutation", "fold", "params", "epochs", "final_train_loss",
                   "test_accuracy", "test_precision", "test_recall", "test_f1", "description")


def write_ablation_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=ABLATION_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            t = r.report.test
            last = r.report.epochs[-1].train_loss if r.report.epochs else ""
            w.writerow({
                "mutation": r.mutation_id, "fold": r.fold_index, "params": r.params,
                "epochs": len(r.report.epochs), "final_train_loss": last,
                "test_accuracy": t.accuracy if t else "", "test_precision": t.precision if t else "",
                "test_recall": t.recall if t else "", "test_f1": t.f1 if t else "",
                "description": r.description,
            })
