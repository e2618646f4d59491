"""Per-pixel least-squares retrieval of transmission, displacement and
scalar dark-field from a stack of mask-position image pairs.

The model solved at every pixel, one equation per mask position k, is::

    ref_k = a * sam_k + Dx * d(ref_k)/dx + Dy * d(ref_k)/dy - Df * lap(ref_k)

with unknowns ``a`` (reciprocal transmission), the pattern displacement
``(Dx, Dy)`` in pixels, and the effective diffusion ``Df`` in pixel^2.
``Df`` is the coefficient of the Laplacian in this model, i.e. half the
variance of the local blur experienced by the pattern.

Pixels are solved independently; the implementation batches all per-pixel
systems through one LAPACK SVD call, so results are bit-identical regardless
of how the underlying BLAS is threaded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, InsufficientMeasurementsError
from .grid import (
    AcquisitionSet,
    Geometry,
    gradient_x,
    gradient_y,
    laplacian,
    mixed_derivative_xy,
    second_x,
    second_y,
)

__all__ = [
    "SolverOptions",
    "RetrievalMaps",
    "assemble_pixel_system",
    "solve_scalar",
    "refraction_from_displacement",
]

# Columns of the per-pixel gradient block below this fraction of the mean
# reference level are treated as rank-deficient (flat pattern) and only the
# absorption unknown is fitted there.
FLAT_COLUMN_FRACTION = 1e-9

# Condition numbers beyond the reach of double precision are reported as this
# finite sentinel so retrieved maps stay free of infinities.
CONDITION_CAP = 1e15

# Reciprocal-transmission fits of ~0 would map to infinite transmission; the
# reported transmission is capped here (far above any physical value).
TRANSMISSION_CAP = 1e6


@dataclass(frozen=True)
class SolverOptions:
    """Numerical knobs of the per-pixel solve.

    ``tikhonov_lambda`` damps the displacement and diffusion columns (never
    the absorption one). ``clamp_negative_diffusion`` floors the scalar
    diffusion at zero after solving, since a negative blur variance is
    unphysical. ``min_transmission`` floors the reported transmission so dead
    or fully absorbed pixels cannot blow up downstream divisions.
    """

    tikhonov_lambda: float = 0.0
    clamp_negative_diffusion: bool = True
    min_transmission: float = 0.01

    def __post_init__(self):
        if self.tikhonov_lambda < 0:
            raise DataError("tikhonov_lambda must be >= 0")
        if not 0.0 < self.min_transmission < 1.0:
            raise DataError("min_transmission must be in (0, 1)")


@dataclass
class RetrievalMaps:
    """Per-pixel outputs of a retrieval.

    ``diffusion`` is present for the scalar solve and ``None`` for the tensor
    solve (whose diffusion lives in its own tensor field). ``residual_rms``
    is the RMS misfit of the undamped, unclamped least-squares solution over
    the K data equations; ``condition`` the 2-norm condition number of the
    per-pixel design matrix, capped at ``CONDITION_CAP``.
    """

    transmission: np.ndarray
    disp_x: np.ndarray
    disp_y: np.ndarray
    residual_rms: np.ndarray
    condition: np.ndarray
    diffusion: np.ndarray | None = None


def _design_stack(acq: AcquisitionSet, tensor: bool) -> tuple[np.ndarray, np.ndarray]:
    """Stack per-pixel design matrices: A is (rows, cols, K, n), b (rows, cols, K)."""
    K = acq.n_pairs
    rows, cols = acq.shape
    n = 6 if tensor else 4
    A = np.empty((rows, cols, K, n))
    b = np.empty((rows, cols, K))
    for k in range(K):
        ref = acq.references[k]
        A[:, :, k, 0] = acq.samples[k]
        A[:, :, k, 1] = gradient_x(ref)
        A[:, :, k, 2] = gradient_y(ref)
        if tensor:
            A[:, :, k, 3] = -second_x(ref)
            A[:, :, k, 4] = -second_y(ref)
            A[:, :, k, 5] = -mixed_derivative_xy(ref)
        else:
            A[:, :, k, 3] = -laplacian(ref)
        b[:, :, k] = ref
    return A, b


def assemble_pixel_system(acq: AcquisitionSet, x: int, y: int, tensor: bool = False):
    """Assemble the K-equation linear system of one pixel.

    Returns ``(matrix, rhs)`` with matrix shape (K, 4) for the scalar model
    (columns: absorption, Dx, Dy, Df) or (K, 6) for the tensor model
    (columns: absorption, Dx, Dy, Dxx, Dyy, Dxy). ``x`` is the column index,
    ``y`` the row index. Mostly a diagnostic/testing aid; the bulk solvers
    assemble all pixels at once.
    """
    A, b = _design_stack(acq, tensor)
    return A[y, x].copy(), b[y, x].copy()


def _solve_batched(A: np.ndarray, b: np.ndarray, opts: SolverOptions, n_unknowns: int):
    """Minimum-norm least squares for a batch of small systems via SVD.

    Returns ``(solution, residual_rms, condition)`` where the residual is
    evaluated over the data rows only (Tikhonov rows excluded) and the
    condition number is that of the raw data matrix.
    """
    if opts.tikhonov_lambda > 0:
        svals = np.linalg.svd(A, compute_uv=False)
        damp = np.zeros(A.shape[:-2] + (n_unknowns - 1, n_unknowns))
        idx = np.arange(1, n_unknowns)
        damp[..., idx - 1, idx] = opts.tikhonov_lambda
        A_solve = np.concatenate([A, damp], axis=-2)
        b_solve = np.concatenate([b, np.zeros(b.shape[:-1] + (n_unknowns - 1,))], axis=-1)
        U, s, Vt = np.linalg.svd(A_solve, full_matrices=False)
    else:
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
        svals = s
        b_solve = b

    condition = np.minimum(
        svals[..., 0] / np.maximum(svals[..., -1], svals[..., 0] / CONDITION_CAP),
        CONDITION_CAP,
    )
    condition = np.maximum(condition, 1.0)

    # pseudo-inverse with a relative cutoff; rank-deficient pixels get the
    # minimum-norm solution instead of garbage
    s_inv = np.where(s > s[..., :1] * 1e-12, 1.0, 0.0) / np.where(s > 0, s, 1.0)
    ub = np.einsum("...ki,...k->...i", U, b_solve)
    sol = np.einsum("...ji,...j->...i", Vt, s_inv * ub)

    resid = np.einsum("...ki,...i->...k", A, sol) - b
    residual_rms = np.sqrt(np.mean(resid**2, axis=-1))
    return sol, residual_rms, condition


def _flat_pixels(A: np.ndarray, scale: float) -> np.ndarray:
    """Mask of pixels whose gradient columns are all negligible."""
    gcols = np.abs(A[..., 1:])
    return gcols.max(axis=(-2, -1)) < FLAT_COLUMN_FRACTION * scale


def _absorption_only(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """One-unknown fit ref = a * sam used on flat-pattern pixels."""
    sam = A[..., 0]
    denom = np.sum(sam * sam, axis=-1)
    num = np.sum(sam * b, axis=-1)
    return num / np.where(denom > 0, denom, 1.0)


def _transmission_from(a: np.ndarray, opts: SolverOptions) -> np.ndarray:
    with np.errstate(divide="ignore", over="ignore"):
        t = np.where(a > 1.0 / TRANSMISSION_CAP, 1.0 / np.maximum(a, 1e-300), TRANSMISSION_CAP)
    return np.clip(t, opts.min_transmission, TRANSMISSION_CAP)


def solve_scalar(acq: AcquisitionSet, opts: SolverOptions | None = None) -> RetrievalMaps:
    """Retrieve transmission, displacement and scalar diffusion maps.

    Needs at least 4 mask positions (4 unknowns per pixel). Flat-pattern
    pixels (all gradient columns negligible) get an absorption-only fit with
    the other unknowns set to zero, so local rank deficiency cannot leak into
    neighbouring statistics.
    """
    opts = opts or SolverOptions()
    if acq.n_pairs < 4:
        raise InsufficientMeasurementsError(
            f"scalar retrieval needs at least 4 membrane positions, got {acq.n_pairs}"
        )
    A, b = _design_stack(acq, tensor=False)
    gmax = np.abs(A[..., 1:]).max()
    if gmax < FLAT_COLUMN_FRACTION * acq.references.mean():
        raise DataError("reference pattern has no usable gradients anywhere")

    sol, residual_rms, condition = _solve_batched(A, b, opts, n_unknowns=4)

    flat = _flat_pixels(A, acq.references.mean())
    if flat.any():
        a_flat = _absorption_only(A, b)
        sol = sol.copy()
        sol[flat] = 0.0
        sol[flat, 0] = a_flat[flat]
        resid_flat = A[..., 0] * a_flat[..., None] - b
        residual_rms = np.where(flat, np.sqrt(np.mean(resid_flat**2, axis=-1)), residual_rms)

    diffusion = sol[..., 3]
    if opts.clamp_negative_diffusion:
        diffusion = np.maximum(diffusion, 0.0)
    return RetrievalMaps(
        transmission=_transmission_from(sol[..., 0], opts),
        disp_x=sol[..., 1],
        disp_y=sol[..., 2],
        diffusion=diffusion,
        residual_rms=residual_rms,
        condition=condition,
    )


def refraction_from_displacement(
    maps: RetrievalMaps, geometry: Geometry
) -> tuple[np.ndarray, np.ndarray]:
    """Convert the pixel displacement maps to refraction angles in radians.

    A pattern shift of one pixel at pitch p and propagation distance z2
    corresponds to a deflection of p / z2 radians.
    """
    scale = 1.0 / geometry.pixels_per_radian
    return maps.disp_x * scale, maps.disp_y * scale
