"""Synthetic random-mask reference patterns.

Stands in for the physical membrane: a granular, strictly positive intensity
pattern whose grain size and modulation depth are controlled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DataError, DimensionError

__all__ = ["SpeckleSpec", "generate_speckle"]


@dataclass(frozen=True)
class SpeckleSpec:
    """Parameters of a generated mask pattern.

    ``grain_size_px`` is the standard deviation of the pattern's spatial
    autocorrelation, so the autocorrelation FWHM is ``2.355 * grain_size_px``.
    ``contrast`` is the relative modulation depth (std / mean) of the pattern.
    """

    seed: int
    grain_size_px: float = 2.0
    contrast: float = 0.3
    mean_intensity: float = 1.0

    def __post_init__(self):
        if self.grain_size_px < 1.0:
            raise DataError(f"grain_size_px must be >= 1, got {self.grain_size_px}")
        if not 0.0 < self.contrast <= 1.0:
            raise DataError(f"contrast must be in (0, 1], got {self.contrast}")
        if self.mean_intensity <= 0:
            raise DataError(f"mean_intensity must be > 0, got {self.mean_intensity}")


def generate_speckle(spec: SpeckleSpec, rows: int, cols: int) -> np.ndarray:
    """Generate a strictly positive granular pattern.

    White Gaussian noise is low-pass filtered to the requested grain size
    (filter sigma ``grain_size_px / sqrt(2)``, so the pattern autocorrelation
    has sigma ``grain_size_px``), then mapped through a lognormal transform
    whose log-amplitude is chosen to give std/mean equal to ``contrast``.
    The transform keeps every pixel > 0 for any contrast in (0, 1].

    Identical spec and shape give a bit-identical pattern.
    """
    if rows < 32 or cols < 32:
        raise DimensionError(f"pattern must be at least 32x32, got {rows}x{cols}")
    rng = np.random.default_rng(np.uint64(spec.seed))
    white = rng.standard_normal((rows, cols))
    smooth = ndimage.gaussian_filter(white, spec.grain_size_px / np.sqrt(2.0), mode="wrap")
    z = (smooth - smooth.mean()) / smooth.std()
    # lognormal with exact population std/mean == contrast
    a = np.sqrt(np.log1p(spec.contrast**2))
    return spec.mean_intensity * np.exp(a * z - 0.5 * a * a)
