"""Rasterise per-electrode band powers into 32x32 RGB scalp images."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

RESOLUTION = 32
COINCIDENCE_TOL = 1e-9
DEGENERATE_RANGE = 1e-12
LEVELS = 2**16  # normalised values are snapped to multiples of 1/LEVELS


@dataclass(frozen=True, eq=False)
class HeadGrid:
    resolution: int
    x: np.ndarray
    y: np.ndarray
    mask: np.ndarray


@lru_cache(maxsize=4)
def head_grid(resolution=RESOLUTION):
    """Pixel centres over [-1, 1]^2; row 0 is the top (nose side)."""
    centres = -1.0 + (np.arange(resolution) + 0.5) * 2.0 / resolution
    x = np.broadcast_to(centres[None, :], (resolution, resolution)).copy()
    y = np.broadcast_to(centres[::-1, None], (resolution, resolution)).copy()
    mask = x**2 + y**2 <= 1.0
    for a in (x, y, mask):
        a.setflags(write=False)
    return HeadGrid(resolution, x, y, mask)


@dataclass(frozen=True, eq=False)
class SpectralImage:
    pixels: np.ndarray  # (32, 32, 3) float32 in [0, 1]
    band: object
    window_ref: tuple  # (subject_id, condition, window_index)
    scale: tuple  # (vmin, vmax)


def electrode_xy(montage):
    """Planar positions; angles run clockwise from the nose at +y."""
    out = []
    for e in montage.entries:
        a = np.deg2rad(e.angle_deg)
        out.append((e.radius * np.sin(a), e.radius * np.cos(a)))
    return out


def interpolate_idw(values, points, grid, power=2.0):
    """Inverse-distance weighted field on the masked pixels, NaN outside."""
    values = np.asarray(values, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(points) == 0:
        raise ValueError("interpolation needs at least one electrode")
    if values.shape != (len(points),):
        raise ValueError(f"{values.shape[0]} values for {len(points)} electrodes")
    if not np.all(np.isfinite(values)):
        raise ValueError("electrode values must be finite")
    gx = grid.x[grid.mask]
    gy = grid.y[grid.mask]
    d = np.hypot(gx[:, None] - points[None, :, 0], gy[:, None] - points[None, :, 1])
    hit = d < COINCIDENCE_TOL
    with np.errstate(divide="ignore"):
        w = np.where(hit, 0.0, d ** (-power))
    # offsets from the minimum keep a constant field exactly constant
    base = values.min()
    field = base + (w @ (values - base)) / w.sum(axis=1)
    rows = hit.any(axis=1)
    if rows.any():
        field[rows] = values[hit[rows].argmax(axis=1)]
    out = np.full(grid.mask.shape, np.nan)
    out[grid.mask] = field
    return out


def colormap_jet(v):
    """Piecewise-linear jet; accepts scalars or arrays, returns (..., 3)."""
    v = np.asarray(v, dtype=np.float64)
    if np.isnan(v).any():
        raise ValueError("cannot colour-map NaN")
    v = np.clip(v, 0.0, 1.0)
    r = np.clip(np.minimum(4 * v - 1.5, -4 * v + 4.5), 0.0, 1.0)
    g = np.clip(np.minimum(4 * v - 0.5, -4 * v + 3.5), 0.0, 1.0)
    b = np.clip(np.minimum(4 * v + 0.5, -4 * v + 2.5), 0.0, 1.0)
    return np.stack([r, g, b], axis=-1)


def render_field(values, points, grid=None, power=2.0):
    """Colour image (float32) and (vmin, vmax) for a set of electrode values.

    Normalisation is min-max over the in-head pixels. The normalised field is
    snapped to a 1/LEVELS grid, on which the colour map is exact in float32,
    so the last-bit noise from an affine change of the input does not reach
    the image.
    """
    grid = grid or head_grid()
    field = interpolate_idw(values, points, grid, power)
    inside = field[grid.mask]
    vmin, vmax = float(inside.min()), float(inside.max())
    span = vmax - vmin
    norm = np.zeros_like(field)
    if span < DEGENERATE_RANGE:
        norm[grid.mask] = 0.5
    else:
        norm[grid.mask] = np.round((inside - vmin) / span * LEVELS) / LEVELS
    rgb = colormap_jet(norm)
    rgb[~grid.mask] = 0.0
    return rgb.astype(np.float32), (vmin, vmax)


def render_image(band_values, montage, band, window_ref, power=2.0):
    pixels, scale = render_field(band_values, electrode_xy(montage), power=power)
    return SpectralImage(pixels, band, tuple(window_ref), scale)


def to_uint8(pixels):
    """Round [0, 1] floats half-up onto 0..255."""
    p = np.clip(np.asarray(pixels, dtype=np.float64), 0.0, 1.0)
    return np.floor(p * 255.0 + 0.5).astype(np.uint8)


def write_ppm(pixels, path):
    """Binary P6 PPM; ``pixels`` is (H, W, 3) in [0, 1] or (H, W) grey."""
    p = np.asarray(pixels)
    if p.ndim == 2:
        p = np.repeat(p[:, :, None], 3, axis=2)
    data = to_uint8(p)
    h, w, _ = data.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode("ascii") + data.tobytes())


def read_ppm(path):
    raw = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        end = pos
        while not raw[end:end + 1].isspace():
            end += 1
        fields.append(raw[pos:end])
        pos = end
    if fields[0] != b"P6":
        raise ValueError("not a binary PPM")
    w, h = int(fields[1]), int(fields[2])
    body = raw[pos + 1:pos + 1 + w * h * 3]
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3)
