"""Phase map recovery from retrieved refraction angles.

The displacement maps are proportional to the transverse phase gradient
(deflection angle times the wavenumber), so the phase is recovered by
least-squares integration of a gradient field. The integration runs in the
Fourier domain on a 2x2 mirror-extended copy of the gradients (gradients are
continued antisymmetrically, the potential symmetrically), which removes the
wrap-around streaks a plain periodic solve would produce on non-periodic
retrieval output. Absolute phase is unobservable here, so the result is
gauge-fixed to zero mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .grid import Geometry, as_field
from .lcs import RetrievalMaps, refraction_from_displacement

__all__ = ["PhaseMap", "integrate_gradient", "phase_from_retrieval"]


@dataclass
class PhaseMap:
    """Integrated phase in radians under the named gauge (mean zero)."""

    phi: np.ndarray
    gauge: str = "mean-zero"


def integrate_gradient(gx, gy, pixel_pitch: float = 1.0) -> PhaseMap:
    """Least-squares integration of a gradient field.

    ``gx`` and ``gy`` are d(phi)/dx and d(phi)/dy sampled on the pixel grid,
    in radians per length; ``pixel_pitch`` is the grid spacing in the same
    length unit. The curl-free part of the input is integrated exactly (up
    to spectral accuracy); any curl component is projected out.
    """
    gx = as_field(gx, "gx")
    gy = as_field(gy, "gy")
    if gx.shape != gy.shape:
        raise DimensionError(f"gradient shapes differ: {gx.shape} vs {gy.shape}")
    rows, cols = gx.shape

    # antisymmetric continuation of the derivatives == symmetric phase
    gx2 = np.block([[gx, -gx[:, ::-1]], [gx[::-1, :], -gx[::-1, ::-1]]])
    gy2 = np.block([[gy, gy[:, ::-1]], [-gy[::-1, :], -gy[::-1, ::-1]]])

    fx = np.fft.fft2(gx2)
    fy = np.fft.fft2(gy2)
    kx = 2.0 * np.pi * np.fft.fftfreq(2 * cols, d=pixel_pitch)
    ky = 2.0 * np.pi * np.fft.fftfreq(2 * rows, d=pixel_pitch)
    kxg, kyg = np.meshgrid(kx, ky)
    denom = kxg**2 + kyg**2
    denom[0, 0] = 1.0  # the DC mode is explicitly zeroed below

    phi_hat = (-1j) * (kxg * fx + kyg * fy) / denom
    phi_hat[0, 0] = 0.0
    phi = np.fft.ifft2(phi_hat).real[:rows, :cols]
    return PhaseMap(phi=phi - phi.mean())


def phase_from_retrieval(maps: RetrievalMaps, geometry: Geometry) -> PhaseMap:
    """Phase map from retrieved displacements.

    Chains displacement -> refraction angle -> phase gradient (angle times
    wavenumber) -> integration on the physical pixel pitch.
    """
    alpha_x, alpha_y = refraction_from_displacement(maps, geometry)
    k = geometry.wavenumber_inv_m
    pitch_m = geometry.pixel_pitch_um * 1e-6
    return integrate_gradient(k * alpha_x, k * alpha_y, pitch_m)
