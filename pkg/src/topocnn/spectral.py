"""Windowing, radix-2 FFT, Welch power spectral density and band power."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Band:
    name: str
    lo_hz: float
    hi_hz: float

    def __post_init__(self):
        if not 0 < self.lo_hz <= self.hi_hz:
            raise ValueError(f"band {self.name}: need 0 < lo <= hi, got {self.lo_hz}, {self.hi_hz}")


BANDS = {
    "theta1": Band("theta1", 5.0, 6.0),
    "theta2": Band("theta2", 7.0, 8.0),
    "alpha1": Band("alpha1", 9.0, 10.0),
    "alpha2": Band("alpha2", 11.0, 12.0),
}


def get_band(name):
    try:
        return BANDS[name]
    except KeyError:
        raise ValueError(f"unknown band {name!r}; choose from {', '.join(BANDS)}") from None


@dataclass(frozen=True, eq=False)
class Window:
    data: np.ndarray
    start_sample: int
    length_s: float
    subject_id: str
    condition: str


@dataclass(frozen=True, eq=False)
class PsdEstimate:
    freqs_hz: np.ndarray
    power: np.ndarray
    df: float


def window_samples(length_s, fs):
    if not length_s > 0:
        raise ValueError(f"window length must be positive, got {length_s}")
    n = length_s * fs
    if abs(n - round(n)) > 1e-9:
        raise ValueError(f"{length_s} s at {fs} Hz is not a whole number of samples")
    return int(round(n))


def extract_windows(rec, length_s):
    """Non-overlapping windows tiled from sample 0; the remainder is dropped."""
    n = window_samples(length_s, rec.sampling_rate_hz)
    windows = []
    for k in range(rec.n_samples // n):
        start = k * n
        windows.append(
            Window(rec.data[:, start:start + n], start, length_s, rec.subject_id, rec.condition)
        )
    return windows


def _is_pow2(n):
    return n >= 1 and n & (n - 1) == 0


def fft(x, inverse=False):
    """Iterative radix-2 decimation-in-time FFT along the last axis.

    Leading axes are treated as a batch. The inverse is scaled by 1/N.
    """
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    if not _is_pow2(n):
        raise ValueError(f"FFT length must be a power of two, got {n}")
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    out = x[..., rev].copy()
    batch = out.shape[:-1]
    sign = 1.0 if inverse else -1.0
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(sign * 2j * np.pi * np.arange(half) / size)
        blocks = out.reshape(batch + (n // size, size))
        even = blocks[..., :half]
        odd = blocks[..., half:] * tw
        blocks = np.concatenate((even + odd, even - odd), axis=-1)
        out = blocks.reshape(batch + (n,))
        size *= 2
    if inverse:
        out /= n
    return out


def hamming(n):
    """Periodic Hamming taper of length ``n``."""
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * np.arange(n) / n)


def welch_psd(w, fs, seg_len=256, overlap=0.5, taper="hamming"):
    """One-sided Welch PSD in units^2/Hz, averaged over tapered segments.

    ``w`` may be a :class:`Window` or an array of shape (n_channels, n_samples).
    """
    x = np.asarray(w.data if isinstance(w, Window) else w, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if taper != "hamming":
        raise ValueError(f"unsupported taper {taper!r}")
    if not _is_pow2(seg_len):
        raise ValueError(f"seg_len must be a power of two, got {seg_len}")
    if not 0 <= overlap < 1:
        raise ValueError(f"overlap must be in [0, 1), got {overlap}")
    n = x.shape[-1]
    if seg_len > n:
        raise ValueError(f"seg_len {seg_len} exceeds window of {n} samples")
    hop = max(1, int(seg_len * (1.0 - overlap)))
    starts = np.arange(0, n - seg_len + 1, hop)
    segs = np.stack([x[:, s:s + seg_len] for s in starts], axis=1)
    segs = segs - segs.mean(axis=-1, keepdims=True)
    win = hamming(seg_len)
    spec = fft(segs * win)
    pgram = np.abs(spec) ** 2 / (fs * np.sum(win**2))
    psd = pgram.mean(axis=1)[:, : seg_len // 2 + 1]
    psd[:, 1:-1] *= 2.0
    df = fs / seg_len
    return PsdEstimate(np.arange(seg_len // 2 + 1) * df, psd, df)


def band_power(psd, band):
    """Mean PSD over bins with lo <= f <= hi, per channel."""
    nyquist = psd.freqs_hz[-1]
    if band.lo_hz > nyquist or band.hi_hz > nyquist:
        raise ValueError(f"band {band.name} ({band.lo_hz}-{band.hi_hz} Hz) exceeds Nyquist {nyquist} Hz")
    sel = (psd.freqs_hz >= band.lo_hz) & (psd.freqs_hz <= band.hi_hz)
    if not sel.any():
        raise ValueError(f"no frequency bins inside band {band.name}")
    return psd.power[:, sel].mean(axis=1)
