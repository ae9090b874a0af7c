"""EEG recordings on disk, electrode montages, and a synthetic EEG generator.

Recording files (``.b2deeg``) are UTF-8 text::

    B2DEEG 1
    subject=<id> condition=<expert|nonexpert|control> fs=<hz>
    Fp1,AF7,...
    <one sample per line, comma separated>

Montage files (``.b2dloc``) hold one ``label,angle_deg,radius`` line per
electrode. Lines starting with ``#`` are comments in both formats.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

CONDITIONS = ("expert", "nonexpert", "control")
BAND_CENTERS_HZ = {"theta1": 5.5, "theta2": 7.5, "alpha1": 9.5, "alpha2": 11.5}

RECORDING_MAGIC = "B2DEEG 1"


class RecordingFormatError(ValueError):
    """A recording file does not follow the text format."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MontageError(ValueError):
    pass


def _check_condition(condition):
    if condition not in CONDITIONS:
        raise ValueError(
            f"unknown condition {condition!r}; expected one of {', '.join(CONDITIONS)}"
        )


@dataclass(frozen=True, eq=False)
class EegRecording:
    """One subject's multichannel recording, values in microvolts."""

    subject_id: str
    condition: str
    sampling_rate_hz: float
    channels: tuple
    data: np.ndarray

    def __post_init__(self):
        _check_condition(self.condition)
        if not self.subject_id or any(c.isspace() for c in self.subject_id):
            raise ValueError(f"invalid subject id {self.subject_id!r}")
        if not (self.sampling_rate_hz > 0 and math.isfinite(self.sampling_rate_hz)):
            raise ValueError(f"sampling rate must be positive, got {self.sampling_rate_hz}")
        channels = tuple(self.channels)
        if len(channels) < 1:
            raise ValueError("a recording needs at least one channel")
        if len(set(channels)) != len(channels):
            raise ValueError("duplicate channel labels")
        data = np.array(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] != len(channels):
            raise ValueError(
                f"data shape {data.shape} does not match {len(channels)} channels"
            )
        if not np.all(np.isfinite(data)):
            raise ValueError("recording contains NaN or Inf values")
        data.setflags(write=False)
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "data", data)

    @property
    def n_channels(self):
        return self.data.shape[0]

    @property
    def n_samples(self):
        return self.data.shape[1]

    @property
    def duration_s(self):
        return self.n_samples / self.sampling_rate_hz

    def __eq__(self, other):
        if not isinstance(other, EegRecording):
            return NotImplemented
        return (
            self.subject_id == other.subject_id
            and self.condition == other.condition
            and self.sampling_rate_hz == other.sampling_rate_hz
            and self.channels == other.channels
            and self.data.shape == other.data.shape
            and bool(np.array_equal(self.data, other.data))
        )

    __hash__ = None


def _content_lines(text):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield lineno, line


def read_recording(path) -> EegRecording:
    text = Path(path).read_text(encoding="utf-8")
    lines = _content_lines(text)

    try:
        lineno, magic = next(lines)
    except StopIteration:
        raise RecordingFormatError("empty file", 1) from None
    if magic != RECORDING_MAGIC:
        raise RecordingFormatError(f"expected header {RECORDING_MAGIC!r}, got {magic!r}", lineno)

    try:
        lineno, meta_line = next(lines)
    except StopIteration:
        raise RecordingFormatError("missing metadata line", lineno + 1) from None
    meta = {}
    for token in meta_line.split():
        key, sep, value = token.partition("=")
        if not sep or not value:
            raise RecordingFormatError(f"malformed metadata token {token!r}", lineno)
        meta[key] = value
    missing = {"subject", "condition", "fs"} - meta.keys()
    if missing:
        raise RecordingFormatError(f"metadata missing {sorted(missing)}", lineno)
    if meta["condition"] not in CONDITIONS:
        raise RecordingFormatError(f"unknown condition {meta['condition']!r}", lineno)
    try:
        fs = float(meta["fs"])
    except ValueError:
        raise RecordingFormatError(f"bad sampling rate {meta['fs']!r}", lineno) from None

    try:
        lineno, chan_line = next(lines)
    except StopIteration:
        raise RecordingFormatError("missing channel label line", lineno + 1) from None
    channels = [c.strip() for c in chan_line.split(",")]
    if any(not c for c in channels):
        raise RecordingFormatError("empty channel label", lineno)

    rows = []
    for lineno, line in lines:
        fields = line.split(",")
        if len(fields) != len(channels):
            raise RecordingFormatError(
                f"expected {len(channels)} values, found {len(fields)}", lineno
            )
        try:
            row = [float(v) for v in fields]
        except ValueError as exc:
            raise RecordingFormatError(f"non-numeric value ({exc})", lineno) from None
        if not all(math.isfinite(v) for v in row):
            raise RecordingFormatError("non-finite value", lineno)
        rows.append(row)

    data = np.array(rows, dtype=np.float64).reshape(len(rows), len(channels)).T
    try:
        return EegRecording(meta["subject"], meta["condition"], fs, tuple(channels), data)
    except ValueError as exc:
        raise RecordingFormatError(str(exc)) from None


def write_recording(rec: EegRecording, path) -> None:
    """Write ``rec`` as text; ``repr`` floats round-trip exactly."""
    if not np.all(np.isfinite(rec.data)):
        raise ValueError("refusing to write non-finite values")
    lines = [
        RECORDING_MAGIC,
        f"subject={rec.subject_id} condition={rec.condition} fs={rec.sampling_rate_hz!r}",
        ",".join(rec.channels),
    ]
    lines.extend(",".join(repr(float(v)) for v in column) for column in rec.data.T)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class MontageEntry:
    label: str
    angle_deg: float
    radius: float


@dataclass(frozen=True)
class Montage:
    entries: tuple

    def __post_init__(self):
        entries = tuple(self.entries)
        seen = set()
        for e in entries:
            if e.label in seen:
                raise MontageError(f"duplicate electrode label {e.label!r}")
            seen.add(e.label)
            if not 0.0 <= e.radius <= 1.0:
                raise MontageError(f"radius of {e.label!r} outside [0, 1]: {e.radius}")
            if not 0.0 <= e.angle_deg < 360.0:
                raise MontageError(f"angle of {e.label!r} outside [0, 360): {e.angle_deg}")
        object.__setattr__(self, "entries", entries)

    @property
    def labels(self):
        return tuple(e.label for e in self.entries)

    def __len__(self):
        return len(self.entries)

    def resolve(self, channels):
        """Montage entries in the order of ``channels``."""
        index = {e.label: e for e in self.entries}
        missing = [c for c in channels if c not in index]
        if missing:
            raise MontageError(f"channels not in montage: {', '.join(missing)}")
        return [index[c] for c in channels]


def load_montage(path) -> Montage:
    entries = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in _content_lines(text):
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3 or not parts[0]:
            raise MontageError(f"line {lineno}: expected 'label,angle_deg,radius'")
        try:
            angle, radius = float(parts[1]), float(parts[2])
        except ValueError:
            raise MontageError(f"line {lineno}: non-numeric position") from None
        entries.append(MontageEntry(parts[0], angle, radius))
    return Montage(tuple(entries))


def bundled_montage_path() -> Path:
    return Path(str(resources.files("topocnn") / "data" / "biosemi64.b2dloc"))


def default_montage() -> Montage:
    """The bundled 64-channel BioSemi layout."""
    return load_montage(bundled_montage_path())


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the synthetic EEG generator.

    Every channel carries one sinusoid per band at the band centre. Its
    amplitude is ``amplitude_uv * gain[condition][band] * focus(channel)``,
    where ``focus`` is a fronto-central Gaussian bump over the scalp. When
    ``background_gain`` is non-zero a second, class-independent component
    with a posterior spatial profile is added in quadrature, so the two
    powers add exactly. Without it, per-image colour normalisation would make
    all classes look identical.
    """

    n_subjects_per_condition: int
    duration_s: float
    noise_sigma: float
    class_band_gains: dict = field(default_factory=dict)
    sampling_rate_hz: float = 256.0
    amplitude_uv: float = 10.0
    background_gain: float = 0.0
    min_window_s: float = 6.0

    def __post_init__(self):
        if self.n_subjects_per_condition < 1:
            raise ValueError("n_subjects_per_condition must be >= 1")
        if not self.noise_sigma >= 0:
            raise ValueError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not self.sampling_rate_hz > 0:
            raise ValueError("sampling_rate_hz must be positive")
        if not self.duration_s >= self.min_window_s:
            raise ValueError(
                f"duration_s ({self.duration_s}) shorter than the largest window "
                f"({self.min_window_s} s)"
            )
        if self.amplitude_uv < 0 or self.background_gain < 0:
            raise ValueError("amplitudes must be >= 0")
        for cond, gains in self.class_band_gains.items():
            _check_condition(cond)
            for band, g in gains.items():
                if band not in BAND_CENTERS_HZ:
                    raise ValueError(f"unknown band {band!r} in class_band_gains")
                if not g >= 0:
                    raise ValueError(f"gain for {cond}/{band} must be >= 0, got {g}")

    def gain(self, condition, band):
        return float(self.class_band_gains.get(condition, {}).get(band, 1.0))


def _spatial_profile(montage, centre, width):
    from .topomap import electrode_xy

    xy = np.asarray(electrode_xy(montage))
    d2 = np.sum((xy - np.asarray(centre)) ** 2, axis=1)
    return np.exp(-d2 / (2.0 * width**2))


def generate_synthetic(spec: SyntheticSpec, montage: Montage, seed: int) -> list:
    """Recordings for every condition; a pure function of its arguments."""
    rng = np.random.default_rng(seed)
    fs = spec.sampling_rate_hz
    n = int(round(spec.duration_s * fs))
    t = np.arange(n) / fs
    focus = _spatial_profile(montage, (0.0, 0.35), 0.45)
    background = _spatial_profile(montage, (0.0, -0.6), 0.45)
    recordings = []
    for cond in CONDITIONS:
        for k in range(spec.n_subjects_per_condition):
            data = np.zeros((len(montage), n))
            for band, f0 in BAND_CENTERS_HZ.items():
                phase = rng.uniform(0.0, 2.0 * np.pi)
                arg = 2.0 * np.pi * f0 * t + phase
                amp = spec.amplitude_uv * spec.gain(cond, band)
                data += amp * focus[:, None] * np.sin(arg)[None, :]
                if spec.background_gain:
                    bg = spec.amplitude_uv * spec.background_gain
                    data += bg * background[:, None] * np.cos(arg)[None, :]
            noise = rng.standard_normal(data.shape)
            if spec.noise_sigma:
                data += spec.noise_sigma * noise
            recordings.append(
                EegRecording(f"{cond}{k + 1:02d}", cond, fs, montage.labels, data)
            )
    return recordings
