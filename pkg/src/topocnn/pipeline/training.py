"""Training loop, evaluation metrics and run reports."""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from ..eeg_io import CONDITIONS
from ..nn import functional as F
from ..nn.model import Model
from ..nn.optim import make_optimizer

MAX_EPOCHS = 30
N_CLASSES = len(CONDITIONS)


@dataclass(frozen=True)
class HyperParams:
    batch: int = 30
    epochs: int = 30
    lr: float = 1e-3
    seed: int = 0
    optimizer: str = "adam"
    numeric_mode: str = "float32"

    def __post_init__(self):
        if self.batch < 1:
            raise ValueError("batch must be >= 1")
        if not 0 <= self.epochs <= MAX_EPOCHS:
            raise ValueError(f"epochs must be in [0, {MAX_EPOCHS}], got {self.epochs}")
        if not self.lr >= 0:
            raise ValueError("lr must be >= 0")


@dataclass
class Metrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    confusion: np.ndarray
    per_class_precision: np.ndarray
    per_class_recall: np.ndarray
    per_class_f1: np.ndarray


def confusion_matrix(y_true, y_pred, n_classes=N_CLASSES):
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return cm


def metrics_from_confusion(cm):
    """Accuracy plus macro precision, recall and F1; rows are the true class."""
    cm = np.asarray(cm, dtype=np.int64)
    total = cm.sum()
    if total == 0:
        raise ValueError("cannot compute metrics on an empty set")
    tp = np.diag(cm).astype(np.float64)
    predicted = cm.sum(axis=0)
    actual = cm.sum(axis=1)
    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    recall = np.divide(tp, actual, out=np.zeros_like(tp), where=actual > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    return Metrics(float(tp.sum() / total), float(precision.mean()), float(recall.mean()),
                   float(f1.mean()), cm, precision, recall, f1)


def metrics_from_predictions(y_true, y_pred, n_classes=N_CLASSES):
    return metrics_from_confusion(confusion_matrix(y_true, y_pred, n_classes))


def evaluate(model, ds, subjects=None) -> Metrics:
    """Argmax metrics over the samples of ``subjects`` (all samples if None)."""
    idx = np.arange(len(ds)) if subjects is None else ds.indices_for(subjects)
    if len(idx) == 0:
        raise ValueError("evaluation set is empty")
    pred = model.predict(ds.images[idx])
    return metrics_from_predictions(ds.labels[idx], pred)


@dataclass
class EpochRow:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class RunReport:
    config_hash: str
    seed: int
    fold_index: int
    n_train: int = 0
    n_val: int = 0
    n_test: int = 0
    epochs: list = field(default_factory=list)
    test: Metrics = None
    train_s: float = 0.0
    test_s: float = 0.0
    test_ms_per_sample: float = 0.0

    CSV_FIELDS = ("row", "epoch", "train_loss", "train_acc", "val_loss", "val_acc",
                  "test_accuracy", "test_precision", "test_recall", "test_f1",
                  "n_train", "n_val", "n_test", "fold", "seed", "config_hash")
    TIMING_FIELDS = ("fold", "train_s", "test_s", "test_ms_per_sample")

    def csv_rows(self):
        """Per-epoch rows then one summary row; timings are kept out so the
        file is reproducible byte for byte."""
        common = {"fold": self.fold_index, "seed": self.seed, "config_hash": self.config_hash}
        rows = []
        for e in self.epochs:
            rows.append({"row": "epoch", "epoch": e.epoch, "train_loss": repr(e.train_loss),
                         "train_acc": repr(e.train_acc), "val_loss": _fmt(e.val_loss),
                         "val_acc": _fmt(e.val_acc), **common})
        summary = {"row": "summary", "epoch": len(self.epochs), "n_train": self.n_train,
                   "n_val": self.n_val, "n_test": self.n_test, **common}
        if self.test is not None:
            summary.update(test_accuracy=repr(self.test.accuracy),
                           test_precision=repr(self.test.precision),
                           test_recall=repr(self.test.recall), test_f1=repr(self.test.f1))
        rows.append(summary)
        return rows

    def timing_row(self):
        return {"fold": self.fold_index, "train_s": f"{self.train_s:.6f}",
                "test_s": f"{self.test_s:.6f}",
                "test_ms_per_sample": f"{self.test_ms_per_sample:.6f}"}


def _fmt(v):
    return "" if v is None or (isinstance(v, float) and np.isnan(v)) else repr(v)


def write_report_csv(reports, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RunReport.CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in reports:
            w.writerows(r.csv_rows())


def write_timing_csv(reports, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RunReport.TIMING_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in reports:
            w.writerow(r.timing_row())


def split_train_validation(ds, fold):
    """Training and validation indices for a fold.

    Validation is the last ``validation_fraction`` of each condition's
    training samples, in dataset order.
    """
    train_idx = ds.indices_for(fold.train_subjects)
    keep, val = [], []
    for label in range(N_CLASSES):
        cls = train_idx[ds.labels[train_idx] == label]
        if len(cls) == 0:
            raise ValueError(f"training split has no samples of class {CONDITIONS[label]!r}")
        n_val = int(round(len(cls) * fold.validation_fraction))
        n_val = min(n_val, len(cls) - 1)
        keep.append(cls[: len(cls) - n_val])
        val.append(cls[len(cls) - n_val:])
    return np.sort(np.concatenate(keep)), np.sort(np.concatenate(val))


def _loss_acc(model, images, labels, batch_size=256):
    probs = model.predict_proba(images, batch_size).astype(np.float64)
    probs /= probs.sum(axis=1, keepdims=True)
    loss = F.cross_entropy_loss(probs, F.one_hot(labels, N_CLASSES))
    return loss, float(np.mean(probs.argmax(axis=1) == labels))


def train_model(cfg, ds, fold, hyper=HyperParams(), log=None):
    """Train on ``fold``'s training subjects; evaluate on its test subjects.

    Returns ``(model, report)``. Only the epoch loop is inside the train timer.
    """
    train_idx, val_idx = split_train_validation(ds, fold)
    test_idx = ds.indices_for(fold.test_subjects)
    model = Model(cfg, seed=hyper.seed, dtype=hyper.numeric_mode)
    opt = make_optimizer(hyper.optimizer, hyper.lr)
    rng = np.random.default_rng([hyper.seed, 1])
    report = RunReport(cfg.digest(), hyper.seed, fold.fold_index,
                       len(train_idx), len(val_idx), len(test_idx))

    t0 = time.perf_counter()
    for epoch in range(1, hyper.epochs + 1):
        order = rng.permutation(train_idx)
        total_loss, correct = 0.0, 0
        for start in range(0, len(order), hyper.batch):
            b = order[start:start + hyper.batch]
            loss = model.train_step(ds.images[b], ds.labels[b])
            total_loss += loss * len(b)
            correct += int(np.sum(model.last_probs.argmax(axis=1) == ds.labels[b]))
            opt.step(model.params(), model.grads())
        val_loss = val_acc = float("nan")
        if len(val_idx):
            val_loss, val_acc = _loss_acc(model, ds.images[val_idx], ds.labels[val_idx])
        row = EpochRow(epoch, total_loss / len(order), correct / len(order), val_loss, val_acc)
        report.epochs.append(row)
        if log:
            log(f"fold {fold.fold_index} epoch {epoch}: loss {row.train_loss:.4f} "
                f"acc {row.train_acc:.3f} val_loss {row.val_loss:.4f} val_acc {row.val_acc:.3f}")
    report.train_s = time.perf_counter() - t0

    if len(test_idx):
        t0 = time.perf_counter()
        pred = model.predict(ds.images[test_idx])
        report.test_s = time.perf_counter() - t0
        report.test_ms_per_sample = 1000.0 * report.test_s / len(test_idx)
        report.test = metrics_from_predictions(ds.labels[test_idx], pred)
    return model, report
