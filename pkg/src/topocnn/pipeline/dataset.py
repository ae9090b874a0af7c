"""Image datasets built from recordings, and their tensor + manifest files."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..eeg_io import CONDITIONS, Montage
from ..nn.serialize import read_tensors, write_tensors
from ..spectral import Band, band_power, extract_windows, get_band, welch_psd
from ..topomap import electrode_xy, render_field

LABELS = {cond: i for i, cond in enumerate(CONDITIONS)}
MANIFEST_MAGIC = "B2DMANIFEST 1"
IMAGE_SHAPE = (32, 32, 3)


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class SampleMeta:
    subject_id: str
    condition: str
    band: str
    window_index: int
    window_s: float


@dataclass(eq=False)
class ImageDataset:
    images: np.ndarray  # (M, 32, 32, 3) float32
    labels: np.ndarray  # (M,) int64
    meta: list

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32).reshape((-1,) + IMAGE_SHAPE)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if not len(self.images) == len(self.labels) == len(self.meta):
            raise DatasetError(
                f"images ({len(self.images)}), labels ({len(self.labels)}) and meta "
                f"({len(self.meta)}) differ in length"
            )
        for label, m in zip(self.labels, self.meta):
            if LABELS.get(m.condition) != label:
                raise DatasetError(f"label {label} does not match condition {m.condition!r}")

    def __len__(self):
        return len(self.labels)

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return ImageDataset(self.images[indices], self.labels[indices],
                            [self.meta[i] for i in indices])

    def subject_ids(self):
        return np.array([m.subject_id for m in self.meta], dtype=object)

    def indices_for(self, subjects):
        subjects = set(subjects)
        return np.array([i for i, m in enumerate(self.meta) if m.subject_id in subjects],
                        dtype=np.int64)

    def subjects_by_condition(self):
        out = defaultdict(set)
        for m in self.meta:
            out[m.condition].add(m.subject_id)
        return {c: sorted(out[c]) for c in CONDITIONS if c in out}


def empty_dataset():
    return ImageDataset(np.zeros((0,) + IMAGE_SHAPE, np.float32), np.zeros(0, np.int64), [])


def build_dataset(recordings, montage: Montage, band, window_length_s,
                  seg_len=256, overlap=0.5, idw_power=2.0) -> ImageDataset:
    """Window, Welch PSD, band power and render every recording.

    Samples are ordered by subject id, then by window position in time.
    """
    band = band if isinstance(band, Band) else get_band(band)
    recordings = sorted(recordings, key=lambda r: r.subject_id)
    ids = [r.subject_id for r in recordings]
    if len(set(ids)) != len(ids):
        raise DatasetError("duplicate subject ids among recordings")
    if recordings:
        channel_sets = {frozenset(r.channels) for r in recordings}
        if len(channel_sets) != 1:
            raise DatasetError("recordings do not share one channel set")
    images, labels, meta = [], [], []
    for rec in recordings:
        points = electrode_xy(Montage(tuple(montage.resolve(rec.channels))))
        for k, win in enumerate(extract_windows(rec, window_length_s)):
            psd = welch_psd(win, rec.sampling_rate_hz, seg_len, overlap)
            pixels, _ = render_field(band_power(psd, band), points, power=idw_power)
            images.append(pixels)
            labels.append(LABELS[rec.condition])
            meta.append(SampleMeta(rec.subject_id, rec.condition, band.name, k,
                                   float(window_length_s)))
    if not images:
        return empty_dataset()
    return ImageDataset(np.stack(images), np.array(labels), meta)


def save_dataset(ds: ImageDataset, tensor_path, manifest_path) -> None:
    """Write images as a one-entry tensor container plus a text manifest."""
    tensor_path, manifest_path = Path(tensor_path), Path(manifest_path)
    write_tensors(tensor_path, {"images": ds.images})
    try:
        ref = tensor_path.resolve().relative_to(manifest_path.resolve().parent)
    except ValueError:
        ref = tensor_path.resolve()
    lines = [MANIFEST_MAGIC]
    for i, (label, m) in enumerate(zip(ds.labels, ds.meta)):
        lines.append(f"{ref.as_posix()},{i},{label},{m.subject_id},{m.condition},"
                     f"{m.band},{m.window_index},{m.window_s!r}")
    manifest_path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_dataset(manifest_path) -> ImageDataset:
    manifest_path = Path(manifest_path)
    lines = manifest_path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != MANIFEST_MAGIC:
        raise DatasetError(f"{manifest_path}: missing {MANIFEST_MAGIC!r} header")
    tensors = {}
    images, labels, meta = [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split(",")
        if len(fields) != 8:
            raise DatasetError(f"{manifest_path}:{lineno}: expected 8 fields, got {len(fields)}")
        tfile, index, label, subject, condition, band, window_index, window_s = fields
        path = Path(tfile)
        if not path.is_absolute():
            path = manifest_path.parent / path
        if path not in tensors:
            try:
                tensors[path] = read_tensors(path)["images"]
            except (OSError, KeyError) as exc:
                raise DatasetError(f"{manifest_path}:{lineno}: cannot load {path}: {exc}") from None
        try:
            images.append(tensors[path][int(index)])
            labels.append(int(label))
            meta.append(SampleMeta(subject, condition, band, int(window_index), float(window_s)))
        except (ValueError, IndexError) as exc:
            raise DatasetError(f"{manifest_path}:{lineno}: {exc}") from None
    if not images:
        return empty_dataset()
    return ImageDataset(np.stack(images), np.array(labels), meta)
