"""Directional dark-field: tensor retrieval and ellipse decomposition.

The scalar diffusion term generalises to an anisotropic one with three
per-pixel unknowns, turning the model into::

    ref_k = a * sam_k + Dx * dx(ref_k) + Dy * dy(ref_k)
            - Dxx * dxx(ref_k) - Dyy * dyy(ref_k) - Dxy * dxy(ref_k)

``Dxy`` is the full coefficient of the mixed second derivative, so the
symmetric matrix describing the blur ellipse at a pixel is
``[[Dxx, Dxy/2], [Dxy/2, Dyy]]`` (for a quadratic form A the mixed term
appears as 2*A01). Eigenvalues of that matrix are half the blur variances
along the principal axes; the leading eigenvector is the scattering axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, DomainError, InsufficientMeasurementsError
from .grid import AcquisitionSet
from .lcs import (
    FLAT_COLUMN_FRACTION,
    RetrievalMaps,
    SolverOptions,
    _absorption_only,
    _design_stack,
    _flat_pixels,
    _solve_batched,
    _transmission_from,
)

__all__ = [
    "DiffusionTensorField",
    "EllipseMaps",
    "solve_tensor",
    "decompose_tensor",
    "orientation_difference",
    "circular_mean_deg",
]


@dataclass
class DiffusionTensorField:
    """Per-pixel symmetric diffusion tensor in pixel^2 effective units.

    ``dxy`` stores the full mixed-derivative coefficient; the matrix form
    used for decomposition places ``dxy / 2`` off-diagonal. ``clamped``
    (when present) flags pixels where a negative eigenvalue was raised to
    zero after the solve.
    """

    dxx: np.ndarray
    dyy: np.ndarray
    dxy: np.ndarray
    clamped: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.dxx.shape


def _eigen2x2(dxx: np.ndarray, dyy: np.ndarray, dxy: np.ndarray):
    """Closed-form eigensystem of [[dxx, dxy/2], [dxy/2, dyy]].

    Returns ``(l1, l2, theta_rad)`` with ``l1 >= l2`` and ``theta`` the angle
    of the leading eigenvector.
    """
    off = 0.5 * dxy
    half_tr = 0.5 * (dxx + dyy)
    disc = np.sqrt((0.5 * (dxx - dyy)) ** 2 + off**2)
    l1 = half_tr + disc
    l2 = half_tr - disc
    theta = 0.5 * np.arctan2(dxy, dxx - dyy)
    return l1, l2, theta


def _recompose(l1, l2, theta) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    ct, st = np.cos(theta), np.sin(theta)
    dxx = l1 * ct * ct + l2 * st * st
    dyy = l1 * st * st + l2 * ct * ct
    dxy = 2.0 * (l1 - l2) * ct * st
    return dxx, dyy, dxy


def solve_tensor(
    acq: AcquisitionSet, opts: SolverOptions | None = None
) -> tuple[RetrievalMaps, DiffusionTensorField]:
    """Retrieve transmission, displacement and the diffusion tensor.

    Needs at least 6 mask positions (6 unknowns per pixel). Negative
    eigenvalues of the solved tensor are raised to zero and the tensor
    recomposed; affected pixels are flagged in ``tensor.clamped``.
    """
    opts = opts or SolverOptions()
    if acq.n_pairs < 6:
        raise InsufficientMeasurementsError(
            f"tensor retrieval needs at least 6 membrane positions, got {acq.n_pairs}"
        )
    A, b = _design_stack(acq, tensor=True)
    if np.abs(A[..., 1:]).max() < FLAT_COLUMN_FRACTION * acq.references.mean():
        raise DataError("reference pattern has no usable gradients anywhere")

    sol, residual_rms, condition = _solve_batched(A, b, opts, n_unknowns=6)

    flat = _flat_pixels(A, acq.references.mean())
    if flat.any():
        a_flat = _absorption_only(A, b)
        sol = sol.copy()
        sol[flat] = 0.0
        sol[flat, 0] = a_flat[flat]
        resid_flat = A[..., 0] * a_flat[..., None] - b
        residual_rms = np.where(flat, np.sqrt(np.mean(resid_flat**2, axis=-1)), residual_rms)

    l1, l2, theta = _eigen2x2(sol[..., 3], sol[..., 4], sol[..., 5])
    clamped = (l1 < 0) | (l2 < 0)
    dxx, dyy, dxy = _recompose(np.maximum(l1, 0.0), np.maximum(l2, 0.0), theta)

    maps = RetrievalMaps(
        transmission=_transmission_from(sol[..., 0], opts),
        disp_x=sol[..., 1],
        disp_y=sol[..., 2],
        diffusion=None,
        residual_rms=residual_rms,
        condition=condition,
    )
    return maps, DiffusionTensorField(dxx=dxx, dyy=dyy, dxy=dxy, clamped=clamped)


@dataclass
class EllipseMaps:
    """Ellipse view of a tensor field: axis orientation, fractional
    anisotropy, mean diffusion and a validity mask.

    Orientation is meaningful only where ``valid_mask`` is true; isotropic or
    empty pixels keep an arbitrary angle but are masked out.
    """

    orientation_deg: np.ndarray
    anisotropy: np.ndarray
    mean_diffusion: np.ndarray
    valid_mask: np.ndarray


def decompose_tensor(
    t: DiffusionTensorField,
    anisotropy_floor: float = 0.05,
    diffusion_floor: float = 1e-3,
) -> EllipseMaps:
    """Eigen-decompose a tensor field into ellipse maps.

    ``orientation_deg`` is the leading-eigenvector angle folded to
    [0, 180); ``anisotropy`` the fractional anisotropy (l1-l2)/(l1+l2),
    forced to 0 where the trace is at or below ``diffusion_floor``;
    ``mean_diffusion`` is (l1+l2)/2. ``valid_mask`` requires both floors to
    be cleared. Total function: never raises on numeric input.
    """
    l1, l2, theta = _eigen2x2(t.dxx, t.dyy, t.dxy)
    total = l1 + l2
    with np.errstate(invalid="ignore", divide="ignore"):
        anisotropy = np.where(total > diffusion_floor, (l1 - l2) / np.where(total > 0, total, 1.0), 0.0)
    anisotropy = np.clip(anisotropy, 0.0, 1.0)
    orientation = np.degrees(theta) % 180.0
    mean_diffusion = 0.5 * total
    valid = (anisotropy >= anisotropy_floor) & (mean_diffusion >= diffusion_floor)
    return EllipseMaps(
        orientation_deg=orientation,
        anisotropy=anisotropy,
        mean_diffusion=mean_diffusion,
        valid_mask=valid,
    )


def orientation_difference(a_deg, b_deg):
    """Smallest angle between two orientations, in degrees within [0, 90].

    Inputs must lie in [0, 180); orientations are headless, so 179 and 1
    differ by 2, and 30 and 120 are perpendicular. Works elementwise on
    arrays and returns a scalar for scalar input.
    """
    a = np.asarray(a_deg, dtype=float)
    b = np.asarray(b_deg, dtype=float)
    if np.any((a < 0) | (a >= 180)) or np.any((b < 0) | (b >= 180)):
        raise DomainError("orientations must lie in [0, 180)")
    d = np.abs(a - b)
    out = np.minimum(d, 180.0 - d)
    return float(out) if out.ndim == 0 else out


def circular_mean_deg(angles_deg, period: float = 180.0, weights=None) -> float:
    """Circular mean of angles with the given period (180 for orientations)."""
    a = np.asarray(angles_deg, dtype=float).ravel()
    if a.size == 0:
        raise DataError("cannot average an empty set of angles")
    w = np.ones_like(a) if weights is None else np.asarray(weights, dtype=float).ravel()
    scale = 2.0 * np.pi / period
    s = np.sum(w * np.sin(scale * a))
    c = np.sum(w * np.cos(scale * a))
    return float((np.arctan2(s, c) / scale) % period)
