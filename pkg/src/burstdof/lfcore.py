"""Light-field data model, aperture masks, and synthetic-aperture photography.

A light field samples radiance over pixel coordinates (x, y) and integer
viewpoint coordinates (u, v). Refocused synthetic-aperture images are
produced by shifting each sub-aperture view by alpha * (u, v) and averaging
over a weighted set of viewpoints (the aperture mask). A scene plane at
disparity d (pixels of apparent motion per unit viewpoint offset) is
rendered sharp when alpha == d.

All operations are pure functions; none mutate their inputs.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import fileio

# Pixels of refocus shift per unit viewpoint offset.
RefocusFactor = float

VIEW_FILE_PATTERN = "view_{row}_{col}.png"


@dataclass(frozen=True)
class LightField:
    """4D sampled radiance: a square grid of sub-aperture images.

    data is indexed [row, col, y, x, channel] where row 0 holds the topmost
    viewpoint v = +(grid_size-1)/2 and col 0 the leftmost u = -(grid_size-1)/2.
    Values are finite and lie in [0, 1].
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data)
        if arr.ndim != 5:
            raise ValueError(f"light field data must be 5D, got shape {arr.shape}")
        g0, g1, _, _, c = arr.shape
        if g0 != g1:
            raise ValueError(f"viewpoint grid must be square, got {g0}x{g1}")
        if g0 % 2 == 0:
            raise ValueError(f"grid_size must be odd so a center view exists, got {g0}")
        if c not in (1, 3):
            raise ValueError(f"channel count must be 1 or 3, got {c}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("light field contains non-finite samples")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("light field samples must lie in [0, 1]")

    @property
    def grid_size(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[2]

    @property
    def width(self) -> int:
        return self.data.shape[3]

    @property
    def channels(self) -> int:
        return self.data.shape[4]

    @property
    def max_offset(self) -> int:
        """Largest viewpoint coordinate: (grid_size - 1) / 2."""
        return (self.grid_size - 1) // 2

    def view(self, u: int, v: int) -> np.ndarray:
        """Sub-aperture image [H, W, C] at viewpoint (u, v)."""
        r, c = self._index(u, v)
        return self.data[r, c]

    def _index(self, u: int, v: int) -> tuple[int, int]:
        m = self.max_offset
        if abs(u) > m or abs(v) > m:
            raise ValueError(f"viewpoint ({u}, {v}) outside grid of half-extent {m}")
        # row 0 is the topmost viewpoint, i.e. maximal v
        return m - int(v), int(u) + m


@dataclass(frozen=True)
class ApertureMask:
    """Weighted set of (u, v) viewpoint offsets defining a simulated aperture."""

    offsets: tuple[tuple[int, int], ...]
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if len(self.offsets) != w.size:
            raise ValueError("offsets and weights must have equal length")
        if len(set(self.offsets)) != len(self.offsets):
            raise ValueError("aperture offsets must be unique")
        if np.any(w < 0):
            raise ValueError("aperture weights must be non-negative")
        total = w.sum()
        if not np.isclose(total, 1.0, atol=1e-9):
            raise ValueError(f"aperture weights must sum to 1, got {total}")
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return len(self.offsets)


@dataclass(frozen=True)
class DisparityMap:
    """Per-pixel signed disparity, in pixels per unit viewpoint offset."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"disparity map must be 2D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("disparity map contains non-finite values")
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def circular_aperture_mask(grid_size: int, radius: float) -> ApertureMask:
    """Uniform mask over all grid offsets with u^2 + v^2 <= radius^2.

    radius 0 degenerates to the center-only mask.
    """
    if grid_size % 2 == 0 or grid_size < 1:
        raise ValueError(f"grid_size must be odd and positive, got {grid_size}")
    if radius < 0:
        raise ValueError(f"radius must be non-negative, got {radius}")
    m = (grid_size - 1) // 2
    offsets = [
        (u, v)
        for v in range(m, -m - 1, -1)
        for u in range(-m, m + 1)
        if u * u + v * v <= radius * radius
    ]
    n = len(offsets)
    return ApertureMask(tuple(offsets), np.full(n, 1.0 / n))


def translate_image(img: np.ndarray, tx: float, ty: float) -> np.ndarray:
    """Translate image content by (tx, ty) pixels: out(x, y) = img(x-tx, y-ty).

    Fractional shifts use bilinear interpolation; samples outside the image
    clamp to the nearest edge pixel. Works on [H, W] or [H, W, C] arrays.
    """
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    ys = np.arange(h, dtype=np.float64) - ty
    xs = np.arange(w, dtype=np.float64) - tx

    y0 = np.floor(ys)
    x0 = np.floor(xs)
    fy = ys - y0
    fx = xs - x0
    y0i = np.clip(y0.astype(np.int64), 0, h - 1)
    y1i = np.clip(y0.astype(np.int64) + 1, 0, h - 1)
    x0i = np.clip(x0.astype(np.int64), 0, w - 1)
    x1i = np.clip(x0.astype(np.int64) + 1, 0, w - 1)

    if img.ndim == 3:
        fy = fy[:, None, None]
        fx = fx[None, :, None]
    else:
        fy = fy[:, None]
        fx = fx[None, :]

    top = img[y0i][:, x0i] * (1.0 - fx) + img[y0i][:, x1i] * fx
    bot = img[y1i][:, x0i] * (1.0 - fx) + img[y1i][:, x1i] * fx
    return top * (1.0 - fy) + bot * fy


def photograph(
    lf: LightField, mask: ApertureMask, alpha: RefocusFactor, channel: int
) -> np.ndarray:
    """Synthetic-aperture exposure of one channel.

    Computes the weighted average over mask viewpoints of each sub-aperture
    view sampled at (x - alpha*u, y - alpha*v), i.e. each view translated by
    alpha * (u, v) before averaging. Returns [H, W] float64 in [0, 1].
    """
    if not np.isfinite(alpha):
        raise ValueError(f"refocus factor must be finite, got {alpha}")
    if channel < 0 or channel >= lf.channels:
        raise ValueError(f"channel {channel} out of range for {lf.channels}-channel light field")
    out = np.zeros((lf.height, lf.width), dtype=np.float64)
    for (u, v), w in zip(mask.offsets, mask.weights):
        view = lf.view(u, v)[:, :, channel]
        out += w * translate_image(view, alpha * u, alpha * v)
    return out


def ground_truth(lf: LightField, mask: ApertureMask, alpha: RefocusFactor) -> np.ndarray:
    """Synthetic-aperture exposure of every channel, stacked as [H, W, C]."""
    return np.stack(
        [photograph(lf, mask, alpha, c) for c in range(lf.channels)], axis=-1
    )


def bias_disparity(d: DisparityMap, alpha: RefocusFactor) -> DisparityMap:
    """Re-reference disparity to the refocused plane: output = d - alpha.

    The plane rendered sharp at refocus factor alpha maps to disparity 0.
    """
    if not np.isfinite(alpha):
        raise ValueError(f"refocus factor must be finite, got {alpha}")
    return DisparityMap(d.values - alpha)


def load_lightfield(path: str | os.PathLike, grid_size: int) -> LightField:
    """Load a light field from a directory of per-view PNGs.

    Expects grid_size^2 files named view_{row}_{col}.png, row-major from the
    top-left viewpoint; all views must share dimensions. Pixel values are
    normalized to [0, 1].
    """
    if grid_size % 2 == 0 or grid_size < 1:
        raise ValueError(f"grid_size must be odd and positive, got {grid_size}")
    views = []
    shape = None
    for r in range(grid_size):
        row_views = []
        for c in range(grid_size):
            fname = os.path.join(path, VIEW_FILE_PATTERN.format(row=r, col=c))
            if not os.path.exists(fname):
                raise FileNotFoundError(f"missing view ({r},{c}): {fname}")
            img = fileio.read_image(fname)
            if img.ndim == 2:
                img = img[:, :, None]
            if shape is None:
                shape = img.shape
            elif img.shape != shape:
                raise ValueError(
                    f"view ({r},{c}) has shape {img.shape[:2]}, expected {shape[:2]}"
                )
            row_views.append(img)
        views.append(row_views)
    data = np.asarray(views, dtype=np.float32)
    return LightField(data)


def save_lightfield(lf: LightField, path: str | os.PathLike) -> None:
    """Write a light field as a directory of view_{row}_{col}.png files."""
    os.makedirs(path, exist_ok=True)
    g = lf.grid_size
    for r in range(g):
        for c in range(g):
            img = lf.data[r, c]
            fileio.write_image(
                os.path.join(path, VIEW_FILE_PATTERN.format(row=r, col=c)), img
            )
