"""Analytic phantoms and their rendered ground-truth maps.

Two primitives cover the validation scenes used throughout the project:

* ``Cylinder``: a wire lying in the image plane. Contributes attenuation
  from its projected thickness and a refraction-driven pattern displacement
  perpendicular to its axis.
* ``FiberBundle``: a polygonal region of oriented micro-structure.
  Contributes attenuation and an anisotropic diffusion tensor whose leading
  axis is perpendicular to the fiber direction (scatter is strongest across
  the fibers).

Both accept an optional ``edge_sigma_px`` that apodises the rendered maps
with a small Gaussian. A hard-edged wire has a diverging refraction angle at
grazing incidence which no pattern-tracking method can follow at pixel
resolution; a small apodisation models the finite resolution of any real
system and keeps the scene inside the forward model's validity range.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from matplotlib.path import Path
from scipy import ndimage

from .ddf import DiffusionTensorField
from .errors import DataError, DimensionError
from .grid import Geometry

__all__ = [
    "Cylinder",
    "FiberBundle",
    "PhantomSpec",
    "GroundTruth",
    "polygon_mask",
    "render_phantom",
]


@dataclass(frozen=True)
class Cylinder:
    """Wire of radius ``radius_px`` whose axis passes through ``center_px``
    (an ``(x, y)`` pair) at ``axis_angle_deg`` from the +x axis.

    ``delta`` is the refractive index decrement, ``mu_t`` the attenuation
    coefficient per pixel of projected thickness.
    """

    center_px: tuple[float, float]
    radius_px: float
    axis_angle_deg: float = 90.0
    delta: float = 1e-6
    mu_t: float = 0.0
    edge_sigma_px: float = 0.0

    def __post_init__(self):
        if self.radius_px <= 0:
            raise DataError("cylinder radius must be > 0")
        if self.mu_t < 0 or self.delta < 0 or self.edge_sigma_px < 0:
            raise DataError("cylinder delta, mu_t and edge_sigma_px must be >= 0")


@dataclass(frozen=True)
class FiberBundle:
    """Polygonal bundle of fibers oriented along ``orientation_deg``.

    ``d_perp`` and ``d_parallel`` are the diffusion eigenvalues (pixel^2)
    across and along the fibers; scattering across the fibers dominates, so
    ``d_perp >= d_parallel`` is required. ``mu_t`` is the attenuation optical
    depth of the bundle (unit projected thickness).
    """

    polygon_px: tuple[tuple[float, float], ...]
    orientation_deg: float
    d_parallel: float = 0.0
    d_perp: float = 0.0
    mu_t: float = 0.0
    edge_sigma_px: float = 0.0

    def __post_init__(self):
        if len(self.polygon_px) < 3:
            raise DataError("fiber bundle polygon needs at least 3 vertices")
        if not 0.0 <= self.orientation_deg < 180.0:
            raise DataError("fiber orientation must lie in [0, 180)")
        if self.d_parallel < 0 or self.d_perp < self.d_parallel:
            raise DataError("need d_perp >= d_parallel >= 0")
        if self.mu_t < 0 or self.edge_sigma_px < 0:
            raise DataError("mu_t and edge_sigma_px must be >= 0")

    @property
    def scatter_axis_deg(self) -> float:
        """Orientation of the dominant scattering (blur) axis."""
        return (self.orientation_deg + 90.0) % 180.0


@dataclass(frozen=True)
class PhantomSpec:
    """An ordered collection of primitives; overlaps sum their attenuation
    and tensor contributions."""

    elements: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "elements", tuple(self.elements))
        for el in self.elements:
            if not isinstance(el, (Cylinder, FiberBundle)):
                raise DataError(f"unknown phantom element {type(el).__name__}")

    def bundles(self) -> list[FiberBundle]:
        return [el for el in self.elements if isinstance(el, FiberBundle)]


@dataclass
class GroundTruth:
    """Rendered per-pixel truth: transmission in (0, 1], displacement in
    pixels, and the diffusion tensor (pixel^2 effective units)."""

    transmission: np.ndarray
    disp_x: np.ndarray
    disp_y: np.ndarray
    tensor: DiffusionTensorField

    @property
    def shape(self) -> tuple[int, int]:
        return self.transmission.shape

    @property
    def scalar_diffusion(self) -> np.ndarray:
        """Mean diffusion (dxx + dyy) / 2, the scalar-model equivalent."""
        return 0.5 * (self.tensor.dxx + self.tensor.dyy)


def polygon_mask(polygon_px, rows: int, cols: int) -> np.ndarray:
    """Boolean mask of pixel centers inside a polygon of ``(x, y)`` vertices."""
    verts = np.asarray(polygon_px, dtype=float)
    if verts.ndim != 2 or verts.shape[1] != 2 or verts.shape[0] < 3:
        raise DataError("polygon must be an (N, 2) array of (x, y) vertices, N >= 3")
    yy, xx = np.mgrid[0:rows, 0:cols]
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    return Path(verts).contains_points(pts).reshape(rows, cols)


def _smooth(arr: np.ndarray, sigma: float) -> np.ndarray:
    return ndimage.gaussian_filter(arr, sigma, mode="nearest") if sigma > 0 else arr


def _check_fit(name: str, xs, ys, rows: int, cols: int) -> None:
    if np.min(xs) < 0 or np.max(xs) > cols - 1 or np.min(ys) < 0 or np.max(ys) > rows - 1:
        raise DimensionError(f"{name} does not fit inside the {rows}x{cols} grid")


def _render_cylinder(cyl: Cylinder, xx, yy, geometry: Geometry):
    cx, cy = cyl.center_px
    rows, cols = xx.shape
    th = np.radians(cyl.axis_angle_deg)
    nx, ny = -np.sin(th), np.cos(th)  # unit normal across the axis
    s = (xx - cx) * nx + (yy - cy) * ny  # signed distance from the axis line
    _check_fit("cylinder", [cx - cyl.radius_px, cx + cyl.radius_px],
               [cy - cyl.radius_px, cy + cyl.radius_px], rows, cols)

    inside = np.abs(s) < cyl.radius_px
    chord = np.sqrt(np.maximum(cyl.radius_px**2 - s**2, 0.0))
    thickness = np.where(inside, 2.0 * chord, 0.0)
    # alpha = -delta * d(thickness)/ds, diverging toward the rim
    alpha = np.where(inside, 2.0 * cyl.delta * s / np.maximum(chord, 1e-9), 0.0)

    thickness = _smooth(thickness, cyl.edge_sigma_px)
    alpha = _smooth(alpha, cyl.edge_sigma_px)

    disp = geometry.pixels_per_radian * alpha
    return cyl.mu_t * thickness, disp * nx, disp * ny


def _render_bundle(fb: FiberBundle, rows: int, cols: int):
    verts = np.asarray(fb.polygon_px, dtype=float)
    _check_fit("fiber bundle", verts[:, 0], verts[:, 1], rows, cols)
    weight = _smooth(polygon_mask(verts, rows, cols).astype(float), fb.edge_sigma_px)

    th = np.radians(fb.orientation_deg)
    ax, ay = np.cos(th), np.sin(th)  # fiber direction
    px, py = -np.sin(th), np.cos(th)  # scattering direction
    mxx = fb.d_perp * px * px + fb.d_parallel * ax * ax
    myy = fb.d_perp * py * py + fb.d_parallel * ay * ay
    mxy = fb.d_perp * px * py + fb.d_parallel * ax * ay
    return weight, mxx, myy, mxy


def render_phantom(phantom: PhantomSpec, rows: int, cols: int, geometry: Geometry) -> GroundTruth:
    """Render a phantom onto a ``rows x cols`` grid.

    An empty phantom gives unit transmission and zero displacement and
    tensor. The tensor is positive semi-definite everywhere by construction
    (a sum of scaled PSD contributions).
    """
    if rows < 3 or cols < 3:
        raise DimensionError(f"grid must be at least 3x3, got {rows}x{cols}")
    yy, xx = np.mgrid[0:rows, 0:cols].astype(float)
    optical_depth = np.zeros((rows, cols))
    disp_x = np.zeros((rows, cols))
    disp_y = np.zeros((rows, cols))
    dxx = np.zeros((rows, cols))
    dyy = np.zeros((rows, cols))
    dxy = np.zeros((rows, cols))

    for el in phantom.elements:
        if isinstance(el, Cylinder):
            depth, dx, dy = _render_cylinder(el, xx, yy, geometry)
            optical_depth += depth
            disp_x += dx
            disp_y += dy
        else:
            weight, mxx, myy, mxy = _render_bundle(el, rows, cols)
            optical_depth += el.mu_t * weight
            dxx += weight * mxx
            dyy += weight * myy
            dxy += weight * 2.0 * mxy

    return GroundTruth(
        transmission=np.exp(-optical_depth),
        disp_x=disp_x,
        disp_y=disp_y,
        tensor=DiffusionTensorField(dxx=dxx, dyy=dyy, dxy=dxy),
    )
