"""Command-line entry point: ``topocnn <command> [options]``.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import contextlib
import hashlib
import sys
from pathlib import Path

import numpy as np

from . import config as C
from .eeg_io import (
    CONDITIONS,
    MontageError,
    RecordingFormatError,
    SyntheticSpec,
    bundled_montage_path,
    generate_synthetic,
    load_montage,
    read_recording,
    write_recording,
)
from .nn import (
    ConfigError,
    ContainerError,
    Model,
    NumericError,
    count_params,
    load_weights,
    parse_config_text,
    preset,
    save_weights,
    solve_dense_width,
)
from .pipeline import (
    SUITES,
    DatasetError,
    HyperParams,
    benchmark,
    build_dataset,
    dump_activations,
    evaluate,
    load_dataset,
    loso_folds,
    run_ablation,
    save_dataset,
    single_image_latency_ms,
    train_model,
    write_ablation_csv,
    write_report_csv,
    write_timing_csv,
)
from .topomap import write_ppm

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
VGG16_PARAMS = 14_780_739
PUBLISHED_TOTAL = 76_627


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _config_error(msg):
    return CliError(msg, EXIT_CONFIG)


def _data_error(msg):
    return CliError(msg, EXIT_DATA)


# Shared config handling -------------------------------------------------------

def _add_config_flags(p, keys=None):
    p.add_argument("--config", help="key=value config file")
    for key in keys or C.KEYS:
        _, default, help_ = C.KEYS[key]
        suffix = f" (default: {default})" if default is not None else ""
        p.add_argument(f"--{key}", dest=key, default=None, metavar="VALUE",
                       help=help_ + suffix)


def _load_config(args):
    file_values = C.parse_file(args.config) if args.config else {}
    flags = {k: v for k, v in vars(args).items() if k in C.KEYS}
    return C.resolve(file_values, flags)


def _threads_context(cfg):
    threads = 1 if cfg["strict"] else cfg["hyper.threads"]
    if threads is None:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=threads)


def _model_config(cfg):
    if cfg["model.file"]:
        path = Path(cfg["model.file"])
        if not path.is_file():
            raise _config_error(f"model file not found: {path}")
        return parse_config_text(path.read_text(encoding="utf-8"))
    kw = {}
    if cfg["model.dense_width"] is not None:
        kw["dense_width"] = cfg["model.dense_width"]
    return preset(cfg["model.preset"], **kw)


def _hyper(cfg):
    try:
        return HyperParams(batch=cfg["hyper.batch"], epochs=cfg["hyper.epochs"],
                           lr=cfg["hyper.lr"], seed=cfg["hyper.seed"],
                           optimizer=cfg["hyper.optimizer"],
                           numeric_mode=cfg["hyper.numeric_mode"])
    except ValueError as exc:
        raise _config_error(f"hyper: {exc}") from None


def _out_dir(cfg):
    out = Path(cfg["paths.out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest_path(cfg):
    return Path(cfg["paths.dataset"] or Path(cfg["paths.out"]) / "dataset.b2dmanifest")


def _load_dataset(cfg):
    path = _manifest_path(cfg)
    if not path.is_file():
        raise _config_error(f"dataset manifest not found: {path} (run 'images' first)")
    return load_dataset(path)


def _weights_path(cfg, fold):
    if cfg["paths.weights"]:
        return Path(cfg["paths.weights"])
    return Path(cfg["paths.out"]) / f"weights_fold{fold}.b2dw"


def _folds(cfg, ds):
    try:
        folds = loso_folds(ds.subjects_by_condition())
    except ValueError as exc:
        raise _data_error(f"cannot form folds: {exc}") from None
    return [folds[i] for i in C.parse_folds(cfg["fold"], len(folds))]


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# Commands ---------------------------------------------------------------------

def _parse_synth_spec(path):
    values = C.parse_file(path)
    gains = {}
    kw = {}
    montage = None
    fields = {"n_subjects_per_condition": int, "duration_s": float, "noise_sigma": float,
              "sampling_rate_hz": float, "amplitude_uv": float, "background_gain": float}
    for key, value in values.items():
        try:
            if key.startswith("gain."):
                _, cond, band = key.split(".")
                gains.setdefault(cond, {})[band] = float(value)
            elif key == "montage":
                montage = value
            elif key in fields:
                kw[key] = fields[key](value)
            else:
                raise ConfigError(f"unknown synthetic spec key {key!r}")
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None
    missing = {"n_subjects_per_condition", "duration_s", "noise_sigma"} - kw.keys()
    if missing:
        raise ConfigError(f"synthetic spec missing {', '.join(sorted(missing))}")
    return SyntheticSpec(class_band_gains=gains, **kw), montage


def cmd_synth(args):
    try:
        spec, montage_path = _parse_synth_spec(args.spec)
    except ValueError as exc:
        raise _config_error(str(exc)) from None
    montage_path = args.montage or montage_path or bundled_montage_path()
    if not Path(montage_path).is_file():
        raise _config_error(f"montage not found: {montage_path}")
    montage = load_montage(montage_path)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    recs = generate_synthetic(spec, montage, args.seed)
    for rec in recs:
        write_recording(rec, out / f"{rec.subject_id}.b2deeg")
    for cond in CONDITIONS:
        print(f"{cond}: {sum(r.condition == cond for r in recs)} recordings")
    print(f"wrote {len(recs)} files to {out}")
    return EXIT_OK


def _montage(cfg):
    path = cfg["paths.montage"] or bundled_montage_path()
    if not Path(path).is_file():
        raise _config_error(f"montage not found: {path}")
    return load_montage(path)


def cmd_images(args):
    cfg = _load_config(args)
    if not cfg["paths.recordings"]:
        raise _config_error("paths.recordings is required")
    rec_dir = Path(cfg["paths.recordings"])
    if not rec_dir.is_dir():
        raise _config_error(f"recordings directory not found: {rec_dir}")
    montage = _montage(cfg)
    files = sorted(rec_dir.glob("*.b2deeg"))
    recs = [read_recording(f) for f in files]
    ds = build_dataset(recs, montage, cfg["band"], cfg["window_s"], cfg["welch.seg_len"],
                       cfg["welch.overlap"], cfg["topo.power"])
    out = _out_dir(cfg)
    manifest = _manifest_path(cfg)
    tensor = manifest.with_suffix(".b2dw")
    save_dataset(ds, tensor, manifest)
    if args.ppm:
        ppm_dir = out / "ppm"
        ppm_dir.mkdir(exist_ok=True)
        for i, (img, m) in enumerate(zip(ds.images, ds.meta)):
            write_ppm(img, ppm_dir / f"{i:05d}_{m.subject_id}_{m.band}_w{m.window_index}.ppm")
    print(f"{len(recs)} recordings -> {len(ds)} images ({cfg['band']}, {cfg['window_s']} s)")
    print(f"manifest {manifest}")
    print(f"tensor {tensor} sha256={_sha256(tensor)}")
    return EXIT_OK


def cmd_train(args):
    cfg = _load_config(args)
    model_cfg = _model_config(cfg)
    hyper = _hyper(cfg)
    ds = _load_dataset(cfg)
    out = _out_dir(cfg)
    reports = []
    with _threads_context(cfg):
        for fold in _folds(cfg, ds):
            try:
                model, report = train_model(model_cfg, ds, fold, hyper,
                                            log=None if args.quiet else print)
            except ValueError as exc:
                raise _data_error(str(exc)) from None
            save_weights(model, _weights_path(cfg, fold.fold_index))
            reports.append(report)
            if report.test is not None:
                t = report.test
                print(f"fold {fold.fold_index}: test acc {t.accuracy:.4f} precision "
                      f"{t.precision:.4f} recall {t.recall:.4f} f1 {t.f1:.4f} "
                      f"train {report.train_s:.2f}s")
    write_report_csv(reports, out / "report.csv")
    write_timing_csv(reports, out / "timing.csv")
    accs = [r.test.accuracy for r in reports if r.test is not None]
    if accs:
        print(f"mean test accuracy over {len(accs)} fold(s): {np.mean(accs):.4f}")
    return EXIT_OK


def cmd_eval(args):
    cfg = _load_config(args)
    model_cfg = _model_config(cfg)
    ds = _load_dataset(cfg)
    out = _out_dir(cfg)
    lines = ["fold,accuracy,precision,recall,f1,confusion"]
    for fold in _folds(cfg, ds):
        path = _weights_path(cfg, fold.fold_index)
        if not path.is_file():
            raise _config_error(f"weights not found: {path}")
        model = load_weights(Model(model_cfg, dtype=cfg["hyper.numeric_mode"]), path)
        subjects = args.subjects.split(",") if args.subjects else fold.test_subjects
        try:
            m = evaluate(model, ds, subjects)
        except ValueError as exc:
            raise _data_error(str(exc)) from None
        print(f"fold {fold.fold_index}: accuracy {m.accuracy:.4f} precision {m.precision:.4f} "
              f"recall {m.recall:.4f} f1 {m.f1:.4f}")
        print("confusion (rows = true " + "/".join(CONDITIONS) + "):")
        for row in m.confusion:
            print("  " + " ".join(f"{v:5d}" for v in row))
        cm = ";".join(" ".join(str(v) for v in row) for row in m.confusion)
        lines.append(f"{fold.fold_index},{m.accuracy!r},{m.precision!r},{m.recall!r},{m.f1!r},{cm}")
        if args.activations:
            idx = ds.indices_for(subjects)
            maps = dump_activations(model, ds.images[idx[0]], args.layers.split(","),
                                    args.filters, Path(args.activations) / f"fold{fold.fold_index}")
            print(f"wrote {len(maps)} activation maps to {args.activations}")
    (out / "eval.csv").write_text("\n".join(lines) + "\n")
    return EXIT_OK


def cmd_bench(args):
    cfg = _load_config(args)
    model_cfg = _model_config(cfg)
    hyper = _hyper(cfg)
    ds = _load_dataset(cfg)
    out = _out_dir(cfg)
    if args.repeats < 1:
        raise _config_error("repeats must be >= 1")
    threads = 1 if cfg["strict"] else cfg["hyper.threads"]
    rows = ["fold,train_s,test_s,test_ms_per_sample,n_train,n_test,single_image_ms,threads,numeric_mode"]
    with _threads_context(cfg):
        for fold in _folds(cfg, ds):
            try:
                table = benchmark(model_cfg, ds, fold, hyper, args.repeats, threads)
            except ValueError as exc:
                raise _data_error(str(exc)) from None
            model = Model(model_cfg, dtype=hyper.numeric_mode)
            latency = single_image_latency_ms(model, ds.images[0])
            print(f"fold {fold.fold_index}: {table.format()} single_image_ms={latency:.3f}")
            env = table.environment
            rows.append(f"{fold.fold_index},{float(table.train_s)!r},{float(table.test_s)!r},"
                        f"{float(table.test_ms_per_sample)!r},{table.n_train},{table.n_test},"
                        f"{latency!r},{env['threads']},{env['numeric_mode']}")
    (out / "bench.csv").write_text("\n".join(rows) + "\n")
    return EXIT_OK


def cmd_ablate(args):
    cfg = _load_config(args)
    hyper = _hyper(cfg)
    ds = _load_dataset(cfg)
    out = _out_dir(cfg)
    base = _model_config(cfg)
    suite = []
    for name in args.suite.split(","):
        if name not in SUITES:
            raise _config_error(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
        suite.extend(SUITES[name](base))
    with _threads_context(cfg):
        rows = run_ablation(suite, ds, _folds(cfg, ds), hyper, log=print)
    write_ablation_csv(rows, out / "ablation.csv")
    print(f"{len(rows)} rows -> {out / 'ablation.csv'}")
    return EXIT_OK


def cmd_params(args):
    cfg = _load_config(args)
    model_cfg = _model_config(cfg)
    report = count_params(model_cfg)
    print(report.format())
    print(f"delta vs reported 76,627: {report.total - PUBLISHED_TOTAL:+,}")
    print(f"fraction of VGG16 ({VGG16_PARAMS:,}): {100 * report.total / VGG16_PARAMS:.2f}%")
    if args.solve_width is not None:
        res = solve_dense_width(args.solve_width)
        print(f"searched {res.n_searched:,} configurations for total {res.target:,}")
        if res.exact:
            print(f"{len(res.exact)} exact match(es):")
            for c in res.exact:
                print("  " + c.describe())
        else:
            print("no exact match; nearest candidates:")
        for c in res.nearest:
            print("  " + c.describe())
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="topocnn",
        description="EEG band-power scalp images and a lightweight CNN classifier.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic recordings")
    p.add_argument("--spec", required=True, help="synthetic spec file (key=value)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")
    p.add_argument("--montage", help="montage file; bundled 64-channel cap if unset")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("images", help="render band-power images and write a dataset")
    _add_config_flags(p)
    p.add_argument("--ppm", action="store_true", help="also export every image as PPM")
    p.set_defaults(func=cmd_images)

    p = sub.add_parser("train", help="train leave-one-subject-out folds")
    _add_config_flags(p)
    p.add_argument("--quiet", action="store_true", help="no per-epoch log lines")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate saved weights on a fold's test subjects")
    _add_config_flags(p)
    p.add_argument("--subjects", help="comma list of subjects instead of the fold's test set")
    p.add_argument("--activations", metavar="DIR", help="dump block-1 activation maps as PPM")
    p.add_argument("--layers", default="b1_conv,b1_dwconv", help="layers to dump")
    p.add_argument("--filters", type=int, default=5, help="filters per layer to dump")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="median train/test timings")
    _add_config_flags(p)
    p.add_argument("--repeats", type=int, default=3, help="runs to take the median of")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("ablate", help="run ablation suites")
    _add_config_flags(p)
    p.add_argument("--suite", default="A,B,C", help="comma list of suites A, B, C")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("params", help="per-layer trainable parameter counts")
    _add_config_flags(p, ["model.preset", "model.file", "model.dense_width"])
    p.add_argument("--solve-width", type=int, metavar="N",
                   help="search dense widths and paddings for a total of N parameters")
    p.set_defaults(func=cmd_params)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (RecordingFormatError, MontageError, DatasetError, ContainerError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:  # includes ConfigError
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
