"""Image and disparity-map file IO.

PNG (8-bit or 16-bit) carries image data; PFM (32-bit float, little-endian)
carries disparity maps. All in-memory images are float arrays in [0, 1]
(disparity maps are unbounded floats).
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image


def read_image(path: str | os.PathLike) -> np.ndarray:
    """Read a PNG into a float64 array in [0, 1].

    Returns [H, W] for grayscale input, [H, W, 3] for RGB. 16-bit images
    are normalized by 65535, 8-bit by 255.
    """
    img = Image.open(path)
    if img.mode in ("I;16", "I;16B", "I;16L"):
        arr = np.asarray(img, dtype=np.float64) / 65535.0
    elif img.mode == "I":
        arr = np.asarray(img, dtype=np.float64) / 65535.0
    elif img.mode in ("L", "RGB"):
        arr = np.asarray(img, dtype=np.float64) / 255.0
    else:
        arr = np.asarray(img.convert("RGB"), dtype=np.float64) / 255.0
    return arr


def write_image(path: str | os.PathLike, values: np.ndarray) -> None:
    """Write a [0, 1] float array as an 8-bit PNG ([H, W] or [H, W, 3])."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim not in (2, 3):
        raise ValueError(f"expected [H, W] or [H, W, C] image, got shape {arr.shape}")
    quantized = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(quantized).save(path)


def read_pfm(path: str | os.PathLike) -> np.ndarray:
    """Read a PFM file into a float32 array ([H, W] or [H, W, 3])."""
    with open(path, "rb") as f:
        header = f.readline().decode("ascii").strip()
        if header not in ("Pf", "PF"):
            raise ValueError(f"{path}: not a PFM file (header {header!r})")
        dims = f.readline().decode("ascii").split()
        width, height = int(dims[0]), int(dims[1])
        scale = float(f.readline().decode("ascii").strip())
        channels = 3 if header == "PF" else 1
        count = width * height * channels
        data = np.frombuffer(f.read(count * 4), dtype="<f4" if scale < 0 else ">f4")
        if data.size != count:
            raise ValueError(f"{path}: truncated PFM payload")
    data = data.reshape(height, width, channels)
    # PFM stores rows bottom-to-top
    data = np.flipud(data)
    return data[:, :, 0].copy() if channels == 1 else data.copy()


def write_pfm(path: str | os.PathLike, values: np.ndarray) -> None:
    """Write a float array as a little-endian PFM ([H, W] or [H, W, 3])."""
    arr = np.asarray(values, dtype=np.float32)
    if arr.ndim == 2:
        header = b"Pf"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        header = b"PF"
    else:
        raise ValueError(f"expected [H, W] or [H, W, 3], got shape {arr.shape}")
    height, width = arr.shape[:2]
    with open(path, "wb") as f:
        f.write(header + b"\n")
        f.write(f"{width} {height}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(np.flipud(arr).astype("<f4").tobytes())
