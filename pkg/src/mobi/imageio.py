"""Image file I/O: float32 single-plane TIFF and headerless raw.

Fields are stored as 32-bit float TIFF, the lingua franca of scientific
detectors; integer TIFFs up to 16 bit load losslessly into float. Headerless
``.raw`` files (float32, row-major) need their shape supplied by the caller.
Save-then-load round trips are bit-identical for float32 data.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DimensionError, UnreadableImageError, UnsupportedImageError
from .grid import as_field

__all__ = ["load_image", "save_image"]

_SUPPORTED_MODES = {"F", "I", "I;16", "I;16B", "I;16L", "L"}


def save_image(path, field) -> None:
    """Write a field as float32 TIFF (or raw, when the suffix is .raw)."""
    field = as_field(field)
    path = os.fspath(path)
    if path.lower().endswith(".raw"):
        field.astype(np.float32).tofile(path)
        return
    Image.fromarray(field.astype(np.float32), mode="F").save(path, format="TIFF")


def load_image(path, raw_shape: tuple[int, int] | None = None) -> np.ndarray:
    """Read an image file into a float64 field.

    ``raw_shape`` is required for headerless ``.raw`` files and ignored
    otherwise. Distinct errors: missing/truncated files raise
    ``UnreadableImageError``, unsupported layouts ``UnsupportedImageError``,
    raw size mismatches ``DimensionError``.
    """
    path = os.fspath(path)
    if path.lower().endswith(".raw"):
        if raw_shape is None:
            raise DimensionError(f"raw file {path} needs an explicit (rows, cols) shape")
        try:
            data = np.fromfile(path, dtype=np.float32)
        except OSError as exc:
            raise UnreadableImageError(f"cannot read {path}: {exc}") from exc
        rows, cols = raw_shape
        if data.size != rows * cols:
            raise DimensionError(
                f"{path} holds {data.size} float32 values, expected {rows}x{cols}"
            )
        return as_field(data.reshape(rows, cols).astype(np.float64), path)

    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            if mode not in _SUPPORTED_MODES:
                raise UnsupportedImageError(
                    f"{path}: unsupported image mode {mode!r} (need single-plane float or <=16-bit int)"
                )
            if getattr(img, "n_frames", 1) > 1:
                raise UnsupportedImageError(f"{path}: multi-frame stacks are not supported")
            arr = np.asarray(img)
    except FileNotFoundError as exc:
        raise UnreadableImageError(f"{path}: no such file") from exc
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise UnreadableImageError(f"{path}: unreadable or truncated image ({exc})") from exc
    if arr.ndim != 2:
        raise UnsupportedImageError(f"{path}: expected a single-plane image, got shape {arr.shape}")
    return as_field(arr.astype(np.float64), path)
