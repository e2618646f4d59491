"""Image grid primitives: field validation, finite-difference stencils, geometry.

Conventions used throughout the package:

* a scalar field is a 2D ``float64`` array indexed ``[row, col]``;
* ``x`` is the column coordinate, ``y`` the row coordinate, both in pixels;
* angles are degrees measured from the +x axis toward the +y axis, and
  orientations (headless axes) are folded into ``[0, 180)``.

All stencils work in pixel units; physical unit conversions happen only in
the refraction/phase chain and in reporting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.constants as sc

from .errors import DataError, DimensionError

__all__ = [
    "as_field",
    "gradient_x",
    "gradient_y",
    "second_x",
    "second_y",
    "laplacian",
    "mixed_derivative_xy",
    "Geometry",
    "AcquisitionSet",
]


def as_field(values, name: str = "field") -> np.ndarray:
    """Validate and return ``values`` as a 2D float64 array.

    Raises
    ------
    DimensionError
        If the input is not two-dimensional or has an empty axis.
    DataError
        If any value is NaN or infinite.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionError(f"{name} must be a non-empty 2D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError(f"{name} contains non-finite values")
    return arr


def _require_axis(f: np.ndarray, axis: int, minimum: int, op: str) -> None:
    if f.shape[axis] < minimum:
        raise DimensionError(
            f"{op} needs at least {minimum} samples along axis {axis}, got {f.shape[axis]}"
        )


def gradient_x(f) -> np.ndarray:
    """First derivative along x (columns), in value units per pixel.

    Central differences on the interior, one-sided differences at the two
    boundary columns. Exact for fields linear in the pixel index.
    """
    f = as_field(f)
    _require_axis(f, 1, 3, "gradient_x")
    return np.gradient(f, axis=1)


def gradient_y(f) -> np.ndarray:
    """First derivative along y (rows); see :func:`gradient_x`."""
    f = as_field(f)
    _require_axis(f, 0, 3, "gradient_y")
    return np.gradient(f, axis=0)


def second_x(f) -> np.ndarray:
    """Second derivative along x: ``f(x+1) - 2 f(x) + f(x-1)`` with
    replicated-edge padding at the boundary columns."""
    f = as_field(f)
    _require_axis(f, 1, 3, "second_x")
    p = np.pad(f, ((0, 0), (1, 1)), mode="edge")
    return p[:, 2:] - 2.0 * f + p[:, :-2]


def second_y(f) -> np.ndarray:
    """Second derivative along y; see :func:`second_x`."""
    f = as_field(f)
    _require_axis(f, 0, 3, "second_y")
    p = np.pad(f, ((1, 1), (0, 0)), mode="edge")
    return p[2:, :] - 2.0 * f + p[:-2, :]


def laplacian(f) -> np.ndarray:
    """Five-point Laplacian with replicated-edge padding.

    Interior pixels get ``f(x+1,y) + f(x-1,y) + f(x,y+1) + f(x,y-1) - 4 f(x,y)``;
    exact for quadratics of the pixel index there. Identical to
    ``second_x(f) + second_y(f)``.
    """
    f = as_field(f)
    if f.shape[0] < 3 or f.shape[1] < 3:
        raise DimensionError(f"laplacian needs at least a 3x3 field, got {f.shape}")
    return second_x(f) + second_y(f)


def mixed_derivative_xy(f) -> np.ndarray:
    """Mixed second derivative, the composition of the two first-derivative
    stencils. The composition order is immaterial (the stencils act on
    different axes and commute)."""
    f = as_field(f)
    if f.shape[0] < 3 or f.shape[1] < 3:
        raise DimensionError(f"mixed_derivative_xy needs at least a 3x3 field, got {f.shape}")
    return gradient_x(gradient_y(f))


@dataclass(frozen=True)
class Geometry:
    """Acquisition geometry.

    Parameters
    ----------
    z2_mm : float
        Sample-to-detector propagation distance in millimetres.
    pixel_pitch_um : float
        Detector pixel pitch in micrometres.
    energy_keV : float
        Photon energy in keV (monochromatic or effective).
    """

    z2_mm: float
    pixel_pitch_um: float
    energy_keV: float

    def __post_init__(self):
        for name in ("z2_mm", "pixel_pitch_um", "energy_keV"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise DataError(f"Geometry.{name} must be finite and > 0, got {v!r}")

    @property
    def wavelength_m(self) -> float:
        return sc.h * sc.c / (sc.e * self.energy_keV * 1e3)

    @property
    def wavenumber_inv_m(self) -> float:
        """2*pi / wavelength; always > 0 for a valid geometry."""
        return 2.0 * np.pi / self.wavelength_m

    @property
    def pixels_per_radian(self) -> float:
        """Pattern displacement in pixels produced by a unit refraction angle."""
        return self.z2_mm * 1e3 / self.pixel_pitch_um


@dataclass
class AcquisitionSet:
    """A stack of reference/sample image pairs sharing one geometry.

    ``references`` and ``samples`` are ``(K, rows, cols)`` stacks ordered by
    mask position ``k``. Reference images must be strictly positive: they are
    divided into nothing, but their gradients drive the retrieval and a
    non-positive reference indicates dead pixels or a broken flat-field.
    """

    references: np.ndarray
    samples: np.ndarray
    geometry: Geometry
    _validated: bool = field(default=False, repr=False)

    def __post_init__(self):
        refs = np.asarray(self.references, dtype=np.float64)
        sams = np.asarray(self.samples, dtype=np.float64)
        if refs.ndim != 3 or sams.ndim != 3:
            raise DimensionError("references and samples must be (K, rows, cols) stacks")
        if refs.shape != sams.shape:
            raise DimensionError(
                f"reference stack {refs.shape} and sample stack {sams.shape} disagree"
            )
        if refs.shape[0] < 1:
            raise DimensionError("an acquisition needs at least one image pair")
        if not (np.all(np.isfinite(refs)) and np.all(np.isfinite(sams))):
            raise DataError("acquisition images contain non-finite values")
        if refs.min() <= 0:
            raise DataError("reference images must be strictly positive")
        self.references = refs
        self.samples = sams
        self._validated = True

    @classmethod
    def from_pairs(cls, pairs, geometry: Geometry) -> "AcquisitionSet":
        """Build from an ordered iterable of ``(reference, sample)`` arrays."""
        pairs = list(pairs)
        if not pairs:
            raise DimensionError("an acquisition needs at least one image pair")
        refs = np.stack([as_field(r, "reference") for r, _ in pairs])
        sams = np.stack([as_field(s, "sample") for _, s in pairs])
        return cls(refs, sams, geometry)

    @property
    def n_pairs(self) -> int:
        return self.references.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.references.shape[1:]

    @property
    def pairs(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return list(zip(self.references, self.samples))
