"""Forward simulator: reference pattern -> sample image.

The sample image is built by reading the retrieval model left to right:
the reference is warped by the displacement field (bilinear pull-back, so
sub-pixel truth is representable), blurred by a spatially varying
anisotropic Gaussian whose covariance is set by the local diffusion tensor,
attenuated by the transmission map, and optionally Poisson-degraded.

The blur is scatter-accumulation: every input pixel deposits a normalised
Gaussian kernel parameterised by its own tensor. Deposits are accumulated in
a fixed offset order, so the result is deterministic and independent of any
library threading. Because the stored tensor is the coefficient of the
second-derivative terms in the retrieval model, the deposited kernel uses
covariance ``C = [[2 dxx, dxy], [dxy, 2 dyy]]``.

Validity notes: kernels are point-sampled Gaussians, so per-axis diffusion
below ~0.15 px^2 (blur sigma < ~0.5 px) is under-resolved on the integer
grid, and diffusion well above the squared pattern grain size leaves the
small-blur regime the retrieval model linearises. Scenes meant for
quantitative round trips should stay between those bounds.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy import ndimage

from .ddf import DiffusionTensorField, _eigen2x2, _recompose
from .errors import DataError, DimensionError, ModelValidityWarning
from .grid import AcquisitionSet, Geometry, as_field
from .phantom import GroundTruth
from .speckle import SpeckleSpec, generate_speckle

__all__ = [
    "warp_bilinear",
    "anisotropic_blur",
    "apply_poisson",
    "simulate_acquisition",
    "simulate_pairs",
]

# Eigenvalue floor (pixel^2) for kernel construction only: keeps degenerate
# tensors invertible while leaving the deposit a numerical delta along the
# degenerate axis.
_KERNEL_EIGEN_FLOOR = 1e-4

# Kernel support radius in units of the largest blur sigma.
_KERNEL_SUPPORT_SIGMAS = 3.0


def warp_bilinear(field, disp_x, disp_y) -> np.ndarray:
    """Displace a field by ``(disp_x, disp_y)`` pixels using bilinear
    interpolation: ``out(x, y) = field(x - disp_x, y - disp_y)``, i.e. the
    pattern moves along positive displacement. Edge values are replicated."""
    field = as_field(field)
    disp_x = as_field(disp_x, "disp_x")
    disp_y = as_field(disp_y, "disp_y")
    if field.shape != disp_x.shape or field.shape != disp_y.shape:
        raise DimensionError("field and displacement maps must share a shape")
    yy, xx = np.mgrid[0 : field.shape[0], 0 : field.shape[1]].astype(float)
    return ndimage.map_coordinates(field, [yy - disp_y, xx - disp_x], order=1, mode="nearest")


def anisotropic_blur(field, tensor: DiffusionTensorField) -> np.ndarray:
    """Blur a field with a per-pixel anisotropic Gaussian.

    Each input pixel deposits a kernel with covariance ``2 * tensor`` (matrix
    form) normalised to unit sum, so total intensity is conserved except for
    deposits clipped at the image border. A zero tensor deposits a delta.
    """
    field = as_field(field)
    dxx = as_field(tensor.dxx, "dxx")
    dyy = as_field(tensor.dyy, "dyy")
    dxy = as_field(tensor.dxy, "dxy")
    if not (field.shape == dxx.shape == dyy.shape == dxy.shape):
        raise DimensionError("field and tensor components must share a shape")

    # covariance C = [[2dxx, dxy], [dxy, 2dyy]]; floor its eigenvalues
    l1, l2, theta = _eigen2x2(2.0 * dxx, 2.0 * dyy, 2.0 * dxy)
    if l2.min() < -1e-9:
        raise DataError("blur tensor must be positive semi-definite")
    cl1 = np.maximum(l1, _KERNEL_EIGEN_FLOOR)
    cl2 = np.maximum(l2, _KERNEL_EIGEN_FLOOR)
    cxx, cyy, cxy_doubled = _recompose(cl1, cl2, theta)
    cxy = 0.5 * cxy_doubled  # _recompose returns the doubled off-diagonal

    det = cxx * cyy - cxy**2
    inv_xx = cyy / det
    inv_yy = cxx / det
    inv_xy = -cxy / det

    radius = max(1, int(np.ceil(_KERNEL_SUPPORT_SIGMAS * np.sqrt(cl1.max()))))
    rows, cols = field.shape

    offsets = [(oy, ox) for oy in range(-radius, radius + 1) for ox in range(-radius, radius + 1)]
    weights = []
    wsum = np.zeros_like(field)
    for oy, ox in offsets:
        w = np.exp(-0.5 * (inv_xx * ox * ox + 2.0 * inv_xy * ox * oy + inv_yy * oy * oy))
        weights.append(w)
        wsum += w

    out = np.zeros_like(field)
    for (oy, ox), w in zip(offsets, weights):
        contrib = field * (w / wsum)
        ty0, ty1 = max(oy, 0), rows + min(oy, 0)
        sy0, sy1 = max(-oy, 0), rows + min(-oy, 0)
        tx0, tx1 = max(ox, 0), cols + min(ox, 0)
        sx0, sx1 = max(-ox, 0), cols + min(-ox, 0)
        out[ty0:ty1, tx0:tx1] += contrib[sy0:sy1, sx0:sx1]
    return out


def apply_poisson(field, mean_counts: float, rng: np.random.Generator, mean_level: float | None = None) -> np.ndarray:
    """Poisson-degrade a field at ``mean_counts`` expected counts for a pixel
    at ``mean_level`` intensity (the field's own mean by default). The output
    keeps the input's intensity scale."""
    field = as_field(field)
    if mean_counts <= 0:
        raise DataError("mean_counts must be > 0")
    level = field.mean() if mean_level is None else float(mean_level)
    if level <= 0:
        raise DataError("mean_level must be > 0")
    gain = mean_counts / level
    return rng.poisson(np.maximum(field, 0.0) * gain) / gain


def simulate_acquisition(
    reference,
    truth: GroundTruth,
    photons: float | None = None,
    seed: int | None = None,
) -> np.ndarray:
    """Produce a sample image from a reference pattern and a ground truth.

    Order of operations: warp by the displacement field, blur by the local
    tensor, multiply by transmission, then (optionally) apply Poisson noise
    at ``photons`` expected counts per mean-reference pixel using ``seed``.
    An identity truth returns the reference unchanged (before noise).
    """
    reference = as_field(reference)
    if reference.shape != truth.shape:
        raise DimensionError(
            f"reference {reference.shape} does not match truth {truth.shape}"
        )
    max_disp = max(np.abs(truth.disp_x).max(), np.abs(truth.disp_y).max())
    if max_disp > 10.0:
        warnings.warn(
            f"displacements up to {max_disp:.1f} px exceed the small-shift regime",
            ModelValidityWarning,
            stacklevel=2,
        )

    sample = reference
    if max_disp > 0:
        sample = warp_bilinear(sample, truth.disp_x, truth.disp_y)
    if max(truth.tensor.dxx.max(), truth.tensor.dyy.max(), np.abs(truth.tensor.dxy).max()) > 0:
        sample = anisotropic_blur(sample, truth.tensor)
    sample = truth.transmission * sample
    if photons is not None:
        rng = np.random.default_rng(seed)
        sample = apply_poisson(sample, photons, rng, mean_level=reference.mean())
    return sample


def simulate_pairs(
    truth: GroundTruth,
    geometry: Geometry,
    n_pairs: int,
    speckle: SpeckleSpec,
    photons: float | None = None,
    seed: int | None = 0,
) -> AcquisitionSet:
    """Simulate a full acquisition: ``n_pairs`` independent mask positions.

    The master ``seed`` deterministically derives one pattern seed and one
    noise seed per pair; ``speckle.seed`` itself is ignored in favour of the
    derived ones. When ``photons`` is set, reference images receive Poisson
    noise too (both images of a pair are detector images).
    """
    if n_pairs < 1:
        raise DataError("n_pairs must be >= 1")
    rows, cols = truth.shape
    children = np.random.SeedSequence(seed).spawn(n_pairs)
    refs, sams = [], []
    for k in range(n_pairs):
        pattern_seed, ref_noise, sam_noise = children[k].spawn(3)
        spec_k = SpeckleSpec(
            seed=int(pattern_seed.generate_state(1, dtype=np.uint64)[0]),
            grain_size_px=speckle.grain_size_px,
            contrast=speckle.contrast,
            mean_intensity=speckle.mean_intensity,
        )
        ref = generate_speckle(spec_k, rows, cols)
        sam = simulate_acquisition(ref, truth)
        if photons is not None:
            level = ref.mean()
            ref = apply_poisson(ref, photons, np.random.default_rng(ref_noise), mean_level=level)
            sam = apply_poisson(sam, photons, np.random.default_rng(sam_noise), mean_level=level)
        refs.append(ref)
        sams.append(sam)
    return AcquisitionSet(np.stack(refs), np.stack(sams), geometry)
