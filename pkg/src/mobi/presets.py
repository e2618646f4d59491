"""Ready-made scenes and configs for demos, experiments and validation.

The scenes keep displacement below ~1 px and per-axis diffusion within the
simulator's well-resolved band (see ``mobi.forward``), so quantitative round
trips are meaningful.
"""

from __future__ import annotations

import numpy as np

from .grid import Geometry
from .phantom import Cylinder, FiberBundle, PhantomSpec

__all__ = [
    "table_geometry",
    "rotated_rectangle",
    "wire_and_disk_phantom",
    "fiber_orientation_phantom",
    "demo_phantom",
    "demo_config_dict",
]


def table_geometry(energy_keV: float = 8.6) -> Geometry:
    """Bench geometry used by the demo configs: 3200 mm propagation,
    75 um pixels."""
    return Geometry(z2_mm=3200.0, pixel_pitch_um=75.0, energy_keV=energy_keV)


def rotated_rectangle(center_xy, length: float, width: float, angle_deg: float):
    """Corner list (x, y) of a rectangle with its long side along ``angle_deg``."""
    cx, cy = center_xy
    t = np.radians(angle_deg)
    ax, ay = np.cos(t), np.sin(t)
    px, py = -np.sin(t), np.cos(t)
    hl, hw = 0.5 * length, 0.5 * width
    return tuple(
        (cx + sa * hl * ax + sp * hw * px, cy + sa * hl * ay + sp * hw * py)
        for sa, sp in ((-1, -1), (1, -1), (1, 1), (-1, 1))
    )


def wire_and_disk_phantom(rows: int, cols: int) -> PhantomSpec:
    """A refracting, absorbing wire next to an isotropically scattering disk.

    The scatter disk is a degenerate fiber bundle with equal eigenvalues, so
    the scalar diffusion model is exact there; used for scalar round trips.
    """
    wire_x = 0.27 * cols + 0.25
    # 16-gon disk approximation; edge apodisation smooths the rest
    cx, cy, r = 0.68 * cols, 0.5 * rows, 0.21 * rows
    disk = tuple(
        (cx + r * np.cos(a), cy + r * np.sin(a)) for a in np.linspace(0, 2 * np.pi, 16, endpoint=False)
    )
    return PhantomSpec(
        elements=(
            Cylinder(
                center_px=(wire_x, rows / 2.0),
                radius_px=0.13 * rows,
                axis_angle_deg=90.0,
                delta=2.0e-6,
                mu_t=0.004,
                edge_sigma_px=2.0,
            ),
            FiberBundle(
                polygon_px=disk,
                orientation_deg=0.0,
                d_parallel=0.2,
                d_perp=0.2,
                mu_t=0.2,
                edge_sigma_px=2.0,
            ),
        )
    )


def fiber_orientation_phantom(
    rows: int, cols: int, angles_deg: tuple[float, float] = (30.0, 120.0)
) -> PhantomSpec:
    """Two fiber bundles at the requested orientations, for directional
    dark-field validation."""
    bundles = []
    xs = np.linspace(0.3 * cols, 0.7 * cols, len(angles_deg))
    for x, ang in zip(xs, angles_deg):
        bundles.append(
            FiberBundle(
                polygon_px=rotated_rectangle((x, rows / 2.0), 0.42 * rows, 0.2 * rows, ang),
                orientation_deg=ang,
                d_parallel=0.2,
                d_perp=0.6,
                mu_t=0.25,
                edge_sigma_px=2.0,
            )
        )
    return PhantomSpec(elements=tuple(bundles))


def demo_phantom(rows: int, cols: int) -> PhantomSpec:
    """Wire plus two oriented bundles: the full multimodal demo scene."""
    wire = Cylinder(
        center_px=(0.18 * cols + 0.25, rows / 2.0),
        radius_px=0.1 * rows,
        axis_angle_deg=90.0,
        delta=2.0e-6,
        mu_t=0.004,
        edge_sigma_px=2.0,
    )
    bundles = fiber_orientation_phantom(rows, cols).elements
    shifted = []
    for b in bundles:
        poly = tuple((x + 0.12 * cols, y) for x, y in b.polygon_px)
        shifted.append(
            FiberBundle(
                polygon_px=poly,
                orientation_deg=b.orientation_deg,
                d_parallel=b.d_parallel,
                d_perp=b.d_perp,
                mu_t=b.mu_t,
                edge_sigma_px=b.edge_sigma_px,
            )
        )
    return PhantomSpec(elements=(wire, *shifted))


def _phantom_to_dicts(phantom: PhantomSpec) -> list[dict]:
    out = []
    for el in phantom.elements:
        if isinstance(el, Cylinder):
            out.append(
                {
                    "kind": "cylinder",
                    "center_px": [float(el.center_px[0]), float(el.center_px[1])],
                    "radius_px": float(el.radius_px),
                    "axis_angle_deg": float(el.axis_angle_deg),
                    "delta": float(el.delta),
                    "mu_t": float(el.mu_t),
                    "edge_sigma_px": float(el.edge_sigma_px),
                }
            )
        else:
            out.append(
                {
                    "kind": "fiber_bundle",
                    "polygon_px": [[float(x), float(y)] for x, y in el.polygon_px],
                    "orientation_deg": float(el.orientation_deg),
                    "d_parallel": float(el.d_parallel),
                    "d_perp": float(el.d_perp),
                    "mu_t": float(el.mu_t),
                    "edge_sigma_px": float(el.edge_sigma_px),
                }
            )
    return out


def demo_config_dict(
    rows: int = 256,
    cols: int = 256,
    n_pairs: int = 10,
    seed: int = 1234,
    output_dir: str = "runs/demo",
    tensor: bool = True,
    photons: float | None = None,
) -> dict:
    """A complete run configuration (as a plain dict, ready for YAML)."""
    return {
        "seed": seed,
        "output_dir": output_dir,
        "geometry": {"z2_mm": 3200.0, "pixel_pitch_um": 75.0, "energy_keV": 8.6},
        "simulate": {
            "rows": rows,
            "cols": cols,
            "n_pairs": n_pairs,
            "photons": photons,
            "speckle": {"grain_size_px": 3.0, "contrast": 0.3, "mean_intensity": 1000.0},
            "phantom": _phantom_to_dicts(demo_phantom(rows, cols)),
        },
        "retrieve": {
            "tensor": tensor,
            "tikhonov_lambda": 0.0,
            "clamp_negative_diffusion": True,
            "min_transmission": 0.01,
            "anisotropy_floor": 0.05,
            "diffusion_floor": 1e-3,
        },
        "saxs": {
            "beam_center": [rows / 2.0, cols / 2.0],
            "q_per_px": 0.002,
            "q_min": 0.05,
            "q_max": 0.25,
            "n_bins": 72,
            "synthetic_from_phantom": True,
            "q_lobe": 0.15,
            "q_sigma": 0.03,
            "chi_sigma_deg": 15.0,
        },
    }
