"""Run configuration: one YAML file drives every pipeline command.

Command-line flags only override keys defined here, so a run is fully
described by its config plus the recorded overrides in the manifest.
Validation is collective: every offending key is reported in one error, not
just the first.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import yaml

from .errors import ConfigError
from .grid import Geometry
from .phantom import Cylinder, FiberBundle, PhantomSpec
from .speckle import SpeckleSpec

__all__ = ["RunConfig", "SimulateConfig", "RetrieveConfig", "AcquisitionFiles", "SaxsConfig", "load_config"]


@dataclass
class SimulateConfig:
    rows: int
    cols: int
    n_pairs: int
    speckle: SpeckleSpec
    phantom: PhantomSpec
    photons: float | None = None


@dataclass
class RetrieveConfig:
    tensor: bool = False
    tikhonov_lambda: float = 0.0
    clamp_negative_diffusion: bool = True
    min_transmission: float = 0.01
    anisotropy_floor: float = 0.05
    diffusion_floor: float = 1e-3


@dataclass
class AcquisitionFiles:
    reference: list[str]
    sample: list[str]
    raw_shape: tuple[int, int] | None = None


@dataclass
class SaxsConfig:
    beam_center: tuple[float, float]
    q_per_px: float
    q_min: float
    q_max: float
    n_bins: int = 72
    pattern: str | None = None
    roi: tuple[int, int, int, int] | None = None
    synthetic_from_phantom: bool = False
    q_lobe: float | None = None
    q_sigma: float | None = None
    chi_sigma_deg: float = 15.0


@dataclass
class RunConfig:
    geometry: Geometry
    output_dir: str
    seed: int = 0
    simulate: SimulateConfig | None = None
    retrieve: RetrieveConfig | None = None
    acquisition: AcquisitionFiles | None = None
    saxs: SaxsConfig | None = None
    raw: dict = field(default_factory=dict, repr=False)

    def snapshot(self) -> dict:
        """Plain-dict copy of the effective configuration for manifests."""
        snap = dict(self.raw)
        snap["seed"] = self.seed
        snap["output_dir"] = self.output_dir
        return snap


def _get(cfg: dict, key: str, issues: list, required: bool = False, default=None):
    if key in cfg:
        return cfg[key]
    if required:
        issues.append(f"missing key: {key}")
    return default


def _number(value, key: str, issues: list, minimum=None, strict_min=None):
    try:
        v = float(value)
    except (TypeError, ValueError):
        issues.append(f"{key}: expected a number, got {value!r}")
        return None
    if minimum is not None and v < minimum:
        issues.append(f"{key}: must be >= {minimum}, got {v}")
        return None
    if strict_min is not None and v <= strict_min:
        issues.append(f"{key}: must be > {strict_min}, got {v}")
        return None
    return v


def _parse_geometry(cfg: dict, issues: list) -> Geometry | None:
    g = _get(cfg, "geometry", issues, required=True)
    if not isinstance(g, dict):
        if g is not None:
            issues.append("geometry: expected a mapping")
        return None
    z2 = _number(_get(g, "z2_mm", issues, required=True), "geometry.z2_mm", issues, strict_min=0)
    pitch = _number(
        _get(g, "pixel_pitch_um", issues, required=True), "geometry.pixel_pitch_um", issues, strict_min=0
    )
    energy = _number(
        _get(g, "energy_keV", issues, required=True), "geometry.energy_keV", issues, strict_min=0
    )
    if None in (z2, pitch, energy):
        return None
    return Geometry(z2_mm=z2, pixel_pitch_um=pitch, energy_keV=energy)


def _parse_phantom(items, issues: list) -> PhantomSpec:
    elements = []
    if not isinstance(items, list):
        issues.append("simulate.phantom: expected a list of elements")
        return PhantomSpec()
    for i, el in enumerate(items):
        key = f"simulate.phantom[{i}]"
        if not isinstance(el, dict) or "kind" not in el:
            issues.append(f"{key}: each element needs a 'kind'")
            continue
        kind = el["kind"]
        try:
            if kind == "cylinder":
                elements.append(
                    Cylinder(
                        center_px=tuple(el["center_px"]),
                        radius_px=float(el["radius_px"]),
                        axis_angle_deg=float(el.get("axis_angle_deg", 90.0)),
                        delta=float(el.get("delta", 0.0)),
                        mu_t=float(el.get("mu_t", 0.0)),
                        edge_sigma_px=float(el.get("edge_sigma_px", 0.0)),
                    )
                )
            elif kind == "fiber_bundle":
                elements.append(
                    FiberBundle(
                        polygon_px=tuple(tuple(v) for v in el["polygon_px"]),
                        orientation_deg=float(el["orientation_deg"]),
                        d_parallel=float(el.get("d_parallel", 0.0)),
                        d_perp=float(el.get("d_perp", 0.0)),
                        mu_t=float(el.get("mu_t", 0.0)),
                        edge_sigma_px=float(el.get("edge_sigma_px", 0.0)),
                    )
                )
            else:
                issues.append(f"{key}: unknown kind {kind!r}")
        except (KeyError, TypeError, ValueError) as exc:
            issues.append(f"{key}: {exc}")
        except Exception as exc:  # invariant violations from the dataclasses
            issues.append(f"{key}: {exc}")
    return PhantomSpec(elements=tuple(elements))


def _parse_simulate(cfg: dict, seed: int, issues: list) -> SimulateConfig | None:
    s = cfg.get("simulate")
    if s is None:
        return None
    if not isinstance(s, dict):
        issues.append("simulate: expected a mapping")
        return None
    rows = _get(s, "rows", issues, required=True)
    cols = _get(s, "cols", issues, required=True)
    n_pairs = _get(s, "n_pairs", issues, required=True)
    for key, v in (("simulate.rows", rows), ("simulate.cols", cols), ("simulate.n_pairs", n_pairs)):
        if v is not None and (not isinstance(v, int) or v < 1):
            issues.append(f"{key}: expected a positive integer, got {v!r}")
    sp = s.get("speckle", {})
    speckle = None
    try:
        speckle = SpeckleSpec(
            seed=seed,
            grain_size_px=float(sp.get("grain_size_px", 2.0)),
            contrast=float(sp.get("contrast", 0.3)),
            mean_intensity=float(sp.get("mean_intensity", 1.0)),
        )
    except Exception as exc:
        issues.append(f"simulate.speckle: {exc}")
    phantom = _parse_phantom(s.get("phantom", []), issues)
    photons = s.get("photons")
    if photons is not None:
        photons = _number(photons, "simulate.photons", issues, strict_min=0)
    ok = (
        speckle is not None
        and all(isinstance(v, int) and v >= 1 for v in (rows, cols, n_pairs))
    )
    if not ok:
        return None
    return SimulateConfig(
        rows=rows, cols=cols, n_pairs=n_pairs, speckle=speckle, phantom=phantom, photons=photons
    )


def _parse_retrieve(cfg: dict, issues: list) -> RetrieveConfig | None:
    r = cfg.get("retrieve")
    if r is None:
        return None
    if not isinstance(r, dict):
        issues.append("retrieve: expected a mapping")
        return None
    out = RetrieveConfig()
    out.tensor = bool(r.get("tensor", False))
    lam = _number(r.get("tikhonov_lambda", 0.0), "retrieve.tikhonov_lambda", issues, minimum=0.0)
    out.tikhonov_lambda = 0.0 if lam is None else lam
    out.clamp_negative_diffusion = bool(r.get("clamp_negative_diffusion", True))
    mt = _number(r.get("min_transmission", 0.01), "retrieve.min_transmission", issues, strict_min=0.0)
    if mt is not None and mt >= 1.0:
        issues.append(f"retrieve.min_transmission: must be < 1, got {mt}")
    out.min_transmission = 0.01 if mt is None else mt
    af = _number(r.get("anisotropy_floor", 0.05), "retrieve.anisotropy_floor", issues, minimum=0.0)
    out.anisotropy_floor = 0.05 if af is None else af
    df = _number(r.get("diffusion_floor", 1e-3), "retrieve.diffusion_floor", issues, minimum=0.0)
    out.diffusion_floor = 1e-3 if df is None else df
    return out


def _parse_acquisition(cfg: dict, base_dir: str, issues: list) -> AcquisitionFiles | None:
    a = cfg.get("acquisition")
    if a is None:
        return None
    if not isinstance(a, dict):
        issues.append("acquisition: expected a mapping")
        return None
    refs = a.get("reference") or []
    sams = a.get("sample") or []
    if not isinstance(refs, list) or not isinstance(sams, list):
        issues.append("acquisition.reference/sample: expected lists of paths")
        return None
    if len(refs) != len(sams):
        issues.append(
            f"acquisition: {len(refs)} reference files vs {len(sams)} sample files"
        )
    refs = [os.path.join(base_dir, p) for p in refs]
    sams = [os.path.join(base_dir, p) for p in sams]
    for p in refs + sams:
        if not os.path.exists(p):
            issues.append(f"acquisition: missing file {p}")
    raw_shape = a.get("raw_shape")
    if raw_shape is not None:
        raw_shape = tuple(int(v) for v in raw_shape)
    return AcquisitionFiles(reference=refs, sample=sams, raw_shape=raw_shape)


def _parse_saxs(cfg: dict, base_dir: str, issues: list) -> SaxsConfig | None:
    s = cfg.get("saxs")
    if s is None:
        return None
    if not isinstance(s, dict):
        issues.append("saxs: expected a mapping")
        return None
    bc = _get(s, "beam_center", issues, required=True)
    qpp = _number(_get(s, "q_per_px", issues, required=True), "saxs.q_per_px", issues, strict_min=0)
    qmin = _number(_get(s, "q_min", issues, required=True), "saxs.q_min", issues, strict_min=0)
    qmax = _number(_get(s, "q_max", issues, required=True), "saxs.q_max", issues, strict_min=0)
    if qmin is not None and qmax is not None and qmin >= qmax:
        issues.append(f"saxs: q_min ({qmin}) must be < q_max ({qmax})")
    n_bins = s.get("n_bins", 72)
    if not isinstance(n_bins, int) or n_bins < 8:
        issues.append(f"saxs.n_bins: expected an integer >= 8, got {n_bins!r}")
    pattern = s.get("pattern")
    if pattern is not None:
        pattern = os.path.join(base_dir, pattern)
        if not os.path.exists(pattern):
            issues.append(f"saxs.pattern: missing file {pattern}")
    roi = s.get("roi")
    if roi is not None:
        roi = tuple(int(v) for v in roi)
        if len(roi) != 4:
            issues.append(f"saxs.roi: expected [r0, r1, c0, c1], got {roi}")
    if bc is None or qpp is None or qmin is None or qmax is None:
        return None
    q_lobe = s.get("q_lobe")
    q_sigma = s.get("q_sigma")
    return SaxsConfig(
        beam_center=tuple(float(v) for v in bc),
        q_per_px=qpp,
        q_min=qmin,
        q_max=qmax,
        n_bins=n_bins,
        pattern=pattern,
        roi=roi,
        synthetic_from_phantom=bool(s.get("synthetic_from_phantom", False)),
        q_lobe=None if q_lobe is None else float(q_lobe),
        q_sigma=None if q_sigma is None else float(q_sigma),
        chi_sigma_deg=float(s.get("chi_sigma_deg", 15.0)),
    )


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Load and validate a YAML run configuration.

    ``overrides`` maps top-level keys (``seed``, ``output_dir``,
    ``retrieve.tensor``) to values from command-line flags. All validation
    failures are collected and raised together as one ``ConfigError``.
    """
    path = os.fspath(path)
    try:
        with open(path) as fh:
            cfg = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"config {path} is not valid YAML: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path} must be a YAML mapping")

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value

    base_dir = os.path.dirname(os.path.abspath(path))
    issues: list[str] = []

    seed = cfg.get("seed", 0)
    if not isinstance(seed, int):
        issues.append(f"seed: expected an integer, got {seed!r}")
        seed = 0
    output_dir = cfg.get("output_dir")
    if not isinstance(output_dir, str) or not output_dir:
        issues.append("missing key: output_dir")
        output_dir = "."
    elif not os.path.isabs(output_dir):
        output_dir = os.path.join(base_dir, output_dir)

    geometry = _parse_geometry(cfg, issues)
    simulate = _parse_simulate(cfg, seed, issues)
    retrieve = _parse_retrieve(cfg, issues)
    acquisition = _parse_acquisition(cfg, base_dir, issues)
    saxs = _parse_saxs(cfg, base_dir, issues)

    # cross-stage contract: a configured retrieval constrains the pair count
    if simulate is not None and retrieve is not None and isinstance(simulate.n_pairs, int):
        need = 6 if retrieve.tensor else 4
        label = "tensor" if retrieve.tensor else "scalar"
        if simulate.n_pairs < need:
            issues.append(
                f"simulate.n_pairs: {label} retrieval needs at least {need} membrane "
                f"positions ({'6 unknowns' if retrieve.tensor else '4 unknowns'}), got {simulate.n_pairs}"
            )

    if issues:
        raise ConfigError("invalid configuration:\n  - " + "\n  - ".join(issues))
    if geometry is None:
        raise ConfigError("invalid configuration: geometry could not be parsed")

    return RunConfig(
        geometry=geometry,
        output_dir=output_dir,
        seed=seed,
        simulate=simulate,
        retrieve=retrieve,
        acquisition=acquisition,
        saxs=saxs,
        raw=cfg,
    )
