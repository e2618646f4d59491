"""Azimuthal anisotropy analysis of 2D small-angle scattering patterns.

Used to cross-validate the directional dark-field output: the mean
scattering orientation of a pattern is extracted from the azimuthal
intensity profile via its second-moment (structure) tensor, and compared to
the tensor retrieval's orientation over a region of interest after folding
both onto the fiber-axis convention.

Angle conventions match the rest of the package: azimuth measured from the
+x (column) axis toward +y (rows), orientations folded to [0, 180).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ddf import EllipseMaps, circular_mean_deg, orientation_difference
from .errors import CoverageError, DataError, DimensionError, DomainError
from .grid import as_field

__all__ = [
    "SaxsPattern",
    "AzimuthalProfile",
    "PatternOrientation",
    "DdfSaxsComparison",
    "azimuthal_profile",
    "orientation_from_pattern",
    "compare_ddf_saxs",
    "synthetic_lobe_pattern",
]


@dataclass
class SaxsPattern:
    """A 2D scattering image with beam geometry.

    ``beam_center`` is ``(row, col)`` in pixels; ``q_per_px`` converts a
    radial pixel distance to the scattering-vector magnitude (any consistent
    unit). ``mask`` is True on pixels to exclude (beamstop, dead pixels).
    """

    image: np.ndarray
    beam_center: tuple[float, float]
    q_per_px: float
    mask: np.ndarray | None = None

    def __post_init__(self):
        self.image = as_field(self.image, "saxs image")
        r, c = self.beam_center
        rows, cols = self.image.shape
        if not (0 <= r < rows and 0 <= c < cols):
            raise DomainError(f"beam center {self.beam_center} outside {rows}x{cols} image")
        if self.q_per_px <= 0:
            raise DataError("q_per_px must be > 0")
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != self.image.shape:
                raise DimensionError("mask shape must match the image")


@dataclass
class AzimuthalProfile:
    """Mean intensity per azimuth bin over one q annulus.

    ``chi_deg`` holds bin centers on [0, 360); bins with no contributing
    pixel have ``counts == 0`` and NaN intensity (flagged, never zero-filled).
    """

    chi_deg: np.ndarray
    intensity: np.ndarray
    counts: np.ndarray
    q_range: tuple[float, float]

    @property
    def n_filled(self) -> int:
        return int(np.count_nonzero(self.counts))


@dataclass
class PatternOrientation:
    """Mean scattering orientation of a profile.

    ``defined`` is False when the profile carries no orientation information
    (all-zero or perfectly isotropic); ``psi_deg`` is then arbitrary and must
    not be interpreted.
    """

    psi_deg: float
    anisotropy: float
    defined: bool


@dataclass
class DdfSaxsComparison:
    ddf_mean_deg: float
    saxs_fiber_deg: float
    difference_deg: float
    valid_fraction: float


def azimuthal_profile(p: SaxsPattern, q_min: float, q_max: float, n_bins: int) -> AzimuthalProfile:
    """Bin the annulus ``q_min <= q < q_max`` by azimuth.

    Mask-aware mean counts per bin. Raises ``DomainError`` when the annulus
    contains no usable pixel.
    """
    if not 0 < q_min < q_max:
        raise DomainError(f"need 0 < q_min < q_max, got ({q_min}, {q_max})")
    if n_bins < 8:
        raise DomainError(f"n_bins must be >= 8, got {n_bins}")
    rows, cols = p.image.shape
    yy, xx = np.mgrid[0:rows, 0:cols].astype(float)
    dy = yy - p.beam_center[0]
    dx = xx - p.beam_center[1]
    q = np.hypot(dx, dy) * p.q_per_px
    sel = (q >= q_min) & (q < q_max)
    if p.mask is not None:
        sel &= ~p.mask
    if not sel.any():
        raise DomainError("annulus contains no unmasked pixels")

    chi = np.degrees(np.arctan2(dy[sel], dx[sel])) % 360.0
    idx = np.minimum((chi / 360.0 * n_bins).astype(int), n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    sums = np.bincount(idx, weights=p.image[sel], minlength=n_bins)
    with np.errstate(invalid="ignore"):
        intensity = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    chi_centers = (np.arange(n_bins) + 0.5) * (360.0 / n_bins)
    return AzimuthalProfile(
        chi_deg=chi_centers, intensity=intensity, counts=counts, q_range=(q_min, q_max)
    )


def orientation_from_pattern(profile: AzimuthalProfile) -> PatternOrientation:
    """Mean orientation from the intensity-weighted second-moment tensor.

    Builds ``M = sum_bins I(chi) u(chi) u(chi)^T`` with ``u = (cos, sin)``
    over the filled bins; the principal eigenvector angle folded to [0, 180)
    is the orientation, the eigenvalue contrast its anisotropy. Invariant
    under uniform intensity scaling; an isotropic background lowers the
    anisotropy without moving the eigenvector.
    """
    filled = profile.counts > 0
    if np.count_nonzero(filled) < 8:
        raise DomainError("profile needs at least 8 non-empty bins")
    chi = np.radians(profile.chi_deg[filled])
    inten = profile.intensity[filled]
    if np.any(inten < 0):
        inten = np.maximum(inten, 0.0)
    mxx = float(np.sum(inten * np.cos(chi) ** 2))
    myy = float(np.sum(inten * np.sin(chi) ** 2))
    mxy = float(np.sum(inten * np.sin(chi) * np.cos(chi)))
    trace = mxx + myy
    if trace <= 0:
        return PatternOrientation(psi_deg=0.0, anisotropy=0.0, defined=False)
    gap = np.hypot(mxx - myy, 2.0 * mxy)
    anisotropy = gap / trace
    psi = np.degrees(0.5 * np.arctan2(2.0 * mxy, mxx - myy)) % 180.0
    defined = anisotropy > 1e-9
    return PatternOrientation(psi_deg=float(psi), anisotropy=float(anisotropy), defined=defined)


def _roi_mask(roi, shape) -> np.ndarray:
    if isinstance(roi, np.ndarray) and roi.dtype == bool:
        if roi.shape != shape:
            raise DimensionError("boolean ROI shape must match the maps")
        return roi
    r0, r1, c0, c1 = (int(v) for v in roi)
    rows, cols = shape
    if not (0 <= r0 < r1 <= rows and 0 <= c0 < c1 <= cols):
        raise DomainError(f"ROI box {roi} outside {rows}x{cols} maps")
    out = np.zeros(shape, dtype=bool)
    out[r0:r1, c0:c1] = True
    return out


def compare_ddf_saxs(ellipse: EllipseMaps, roi, psi_deg: float) -> DdfSaxsComparison:
    """Compare tensor-retrieval orientation with a scattering orientation.

    ``roi`` is a boolean mask or an ``(r0, r1, c0, c1)`` box. The directional
    dark-field map reports the scattering axis, so both measurements are
    folded by 90 degrees onto the fiber axis before differencing; the
    difference is therefore ``orientation_difference(ddf_mean, psi + 90)``.
    At least half the ROI must carry a valid orientation.
    """
    if not 0 <= psi_deg < 180:
        raise DomainError("psi_deg must lie in [0, 180)")
    sel = _roi_mask(roi, ellipse.orientation_deg.shape)
    n_roi = int(np.count_nonzero(sel))
    if n_roi == 0:
        raise DomainError("empty ROI")
    valid = sel & ellipse.valid_mask
    frac = np.count_nonzero(valid) / n_roi
    if frac < 0.5:
        raise CoverageError(
            f"only {frac:.0%} of the ROI has a valid orientation (need >= 50%)"
        )
    ddf_mean = circular_mean_deg(ellipse.orientation_deg[valid], period=180.0)
    saxs_fiber = (psi_deg + 90.0) % 180.0
    diff = orientation_difference(ddf_mean, saxs_fiber)
    return DdfSaxsComparison(
        ddf_mean_deg=ddf_mean,
        saxs_fiber_deg=saxs_fiber,
        difference_deg=diff,
        valid_fraction=float(frac),
    )


def synthetic_lobe_pattern(
    rows: int,
    cols: int,
    beam_center: tuple[float, float],
    q_per_px: float,
    axis_deg: float,
    q_lobe: float,
    q_sigma: float,
    chi_sigma_deg: float = 15.0,
    amplitude: float = 1000.0,
    background: float = 10.0,
    seed: int | None = None,
) -> SaxsPattern:
    """Build a two-lobe scattering pattern whose mean orientation is
    ``axis_deg``.

    Two Gaussian lobes sit at radius ``q_lobe`` along ``axis_deg`` and its
    centrosymmetric partner, on an isotropic background. With a ``seed`` the
    pattern is Poisson-sampled (counts), otherwise it is noiseless.
    """
    yy, xx = np.mgrid[0:rows, 0:cols].astype(float)
    dy = yy - beam_center[0]
    dx = xx - beam_center[1]
    q = np.hypot(dx, dy) * q_per_px
    chi = np.arctan2(dy, dx)

    radial = np.exp(-0.5 * ((q - q_lobe) / q_sigma) ** 2)
    sig = np.radians(chi_sigma_deg)
    img = background * np.ones((rows, cols))
    for lobe_deg in (axis_deg, axis_deg + 180.0):
        dchi = np.angle(np.exp(1j * (chi - np.radians(lobe_deg))))
        img += amplitude * radial * np.exp(-0.5 * (dchi / sig) ** 2)
    if seed is not None:
        img = np.random.default_rng(seed).poisson(img).astype(float)
    return SaxsPattern(image=img, beam_center=beam_center, q_per_px=q_per_px)
