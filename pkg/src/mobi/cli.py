"""Command-line pipeline.

Subcommands::

    mobi simulate    --config run.yaml [--seed N] [--out DIR]
    mobi retrieve    --config run.yaml [--tensor] [--seed N] [--out DIR]
    mobi decompose   --config run.yaml [--out DIR]
    mobi saxs-orient --config run.yaml [--out DIR]
    mobi compare     --config run.yaml [--truth DIR] [--retrieved DIR] [--out DIR]
    mobi init-config PATH [--rows N] [--cols N] [--pairs K]

Every command is deterministic given the config and seed, writes its outputs
under the config's ``output_dir`` and finishes by emitting a manifest with
per-output checksums. Exit code 0 on success; each error class has its own
nonzero code (see ``mobi.errors``).

Layout under ``output_dir``::

    acquisition/ref_00.tif, sam_00.tif, ...   (simulate)
    truth/transmission.tif, disp_x.tif, disp_y.tif, dxx.tif, dyy.tif, dxy.tif
    retrieved/transmission.tif, disp_x.tif, disp_y.tif, diffusion.tif,
              residual_rms.tif, condition.tif, phase.tif
              [tensor_*.tif with --tensor; orientation_deg.tif etc. after decompose]
    metrics.txt, saxs_metrics.txt, *_manifest.json

The orientation preview PNG encodes hue = 2 * orientation (so 0 and 180
degrees share a color), saturation = anisotropy, value = mean diffusion
normalised to its 99th percentile and zeroed outside the valid mask.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np
import yaml

from . import __version__
from .config import RunConfig, load_config
from .ddf import DiffusionTensorField, circular_mean_deg, decompose_tensor, orientation_difference, solve_tensor
from .errors import (
    ConfigError,
    InsufficientMeasurementsError,
    MissingArtifactError,
    MobiError,
)
from .forward import simulate_pairs
from .grid import AcquisitionSet
from .imageio import load_image, save_image
from .lcs import SolverOptions, solve_scalar
from .manifest import StageTimer, write_manifest
from .phantom import polygon_mask, render_phantom
from .phase import phase_from_retrieval
from .presets import demo_config_dict
from .saxs import SaxsPattern, azimuthal_profile, compare_ddf_saxs, orientation_from_pattern, synthetic_lobe_pattern

TRUTH_MAPS = ("transmission", "disp_x", "disp_y", "dxx", "dyy", "dxy")
SCALAR_MAPS = ("transmission", "disp_x", "disp_y", "diffusion", "residual_rms", "condition")


def _outdir(cfg: RunConfig, sub: str = "") -> str:
    path = os.path.join(cfg.output_dir, sub) if sub else cfg.output_dir
    os.makedirs(path, exist_ok=True)
    return path


def _save_maps(directory: str, named_maps: dict) -> list[str]:
    paths = []
    for name, arr in named_maps.items():
        path = os.path.join(directory, f"{name}.tif")
        save_image(path, arr)
        paths.append(path)
    return paths


def cmd_simulate(cfg: RunConfig) -> int:
    if cfg.simulate is None:
        raise ConfigError("config has no 'simulate' section")
    sim = cfg.simulate
    timer = StageTimer()
    with timer.stage("render_phantom"):
        truth = render_phantom(sim.phantom, sim.rows, sim.cols, cfg.geometry)
    with timer.stage("simulate_pairs"):
        acq = simulate_pairs(
            truth, cfg.geometry, sim.n_pairs, sim.speckle, photons=sim.photons, seed=cfg.seed
        )
    acq_dir = _outdir(cfg, "acquisition")
    truth_dir = _outdir(cfg, "truth")
    outputs = []
    with timer.stage("write_images"):
        for k in range(acq.n_pairs):
            for tag, img in (("ref", acq.references[k]), ("sam", acq.samples[k])):
                path = os.path.join(acq_dir, f"{tag}_{k:02d}.tif")
                save_image(path, img)
                outputs.append(path)
        outputs += _save_maps(
            truth_dir,
            {
                "transmission": truth.transmission,
                "disp_x": truth.disp_x,
                "disp_y": truth.disp_y,
                "dxx": truth.tensor.dxx,
                "dyy": truth.tensor.dyy,
                "dxy": truth.tensor.dxy,
            },
        )
    write_manifest(
        os.path.join(cfg.output_dir, "simulate_manifest.json"),
        "simulate",
        cfg.snapshot(),
        timer.timings,
        outputs,
    )
    print(f"simulate: wrote {2 * acq.n_pairs} images and 6 truth maps to {cfg.output_dir}")
    return 0


def _load_acquisition(cfg: RunConfig) -> AcquisitionSet:
    if cfg.acquisition is not None:
        files = cfg.acquisition
        pairs = [
            (load_image(r, files.raw_shape), load_image(s, files.raw_shape))
            for r, s in zip(files.reference, files.sample)
        ]
        return AcquisitionSet.from_pairs(pairs, cfg.geometry)
    acq_dir = os.path.join(cfg.output_dir, "acquisition")
    if not os.path.isdir(acq_dir):
        raise MissingArtifactError(
            f"no 'acquisition' file list in the config and no {acq_dir}; run 'mobi simulate' first"
        )
    refs, sams = [], []
    k = 0
    while True:
        ref_path = os.path.join(acq_dir, f"ref_{k:02d}.tif")
        sam_path = os.path.join(acq_dir, f"sam_{k:02d}.tif")
        if not os.path.exists(ref_path):
            break
        if not os.path.exists(sam_path):
            raise MissingArtifactError(f"found {ref_path} but not {sam_path}")
        refs.append(load_image(ref_path))
        sams.append(load_image(sam_path))
        k += 1
    if not refs:
        raise MissingArtifactError(f"no ref_*.tif images in {acq_dir}")
    return AcquisitionSet(np.stack(refs), np.stack(sams), cfg.geometry)


def cmd_retrieve(cfg: RunConfig) -> int:
    rcfg = cfg.retrieve
    if rcfg is None:
        raise ConfigError("config has no 'retrieve' section")
    opts = SolverOptions(
        tikhonov_lambda=rcfg.tikhonov_lambda,
        clamp_negative_diffusion=rcfg.clamp_negative_diffusion,
        min_transmission=rcfg.min_transmission,
    )
    timer = StageTimer()
    with timer.stage("load_acquisition"):
        acq = _load_acquisition(cfg)
    need = 6 if rcfg.tensor else 4
    if acq.n_pairs < need:
        raise InsufficientMeasurementsError(
            f"{'tensor' if rcfg.tensor else 'scalar'} retrieval needs at least {need} "
            f"membrane positions, got {acq.n_pairs}"
        )

    out_dir = _outdir(cfg, "retrieved")
    outputs = []
    with timer.stage("solve_scalar"):
        maps = solve_scalar(acq, opts)
    with timer.stage("phase"):
        phase = phase_from_retrieval(maps, cfg.geometry)
    outputs += _save_maps(
        out_dir,
        {
            "transmission": maps.transmission,
            "disp_x": maps.disp_x,
            "disp_y": maps.disp_y,
            "diffusion": maps.diffusion,
            "residual_rms": maps.residual_rms,
            "condition": maps.condition,
            "phase": phase.phi,
        },
    )
    if rcfg.tensor:
        with timer.stage("solve_tensor"):
            tmaps, tensor = solve_tensor(acq, opts)
        outputs += _save_maps(
            out_dir,
            {
                "tensor_transmission": tmaps.transmission,
                "tensor_disp_x": tmaps.disp_x,
                "tensor_disp_y": tmaps.disp_y,
                "tensor_residual_rms": tmaps.residual_rms,
                "tensor_condition": tmaps.condition,
                "tensor_dxx": tensor.dxx,
                "tensor_dyy": tensor.dyy,
                "tensor_dxy": tensor.dxy,
            },
        )
    write_manifest(
        os.path.join(cfg.output_dir, "retrieve_manifest.json"),
        "retrieve",
        cfg.snapshot(),
        timer.timings,
        outputs,
    )
    print(f"retrieve: wrote {len(outputs)} maps to {out_dir}")
    return 0


def _orientation_png(path: str, ellipse) -> None:
    from matplotlib.colors import hsv_to_rgb
    from PIL import Image

    value_scale = np.percentile(ellipse.mean_diffusion[ellipse.valid_mask], 99) if ellipse.valid_mask.any() else 1.0
    value = np.clip(ellipse.mean_diffusion / max(value_scale, 1e-12), 0.0, 1.0)
    value[~ellipse.valid_mask] = 0.0
    hsv = np.stack(
        [
            (2.0 * ellipse.orientation_deg % 360.0) / 360.0,
            np.clip(ellipse.anisotropy, 0.0, 1.0),
            value,
        ],
        axis=-1,
    )
    rgb = (hsv_to_rgb(hsv) * 255).astype(np.uint8)
    Image.fromarray(rgb, mode="RGB").save(path)


def _load_tensor(retrieved_dir: str) -> DiffusionTensorField:
    comps = {}
    for name in ("tensor_dxx", "tensor_dyy", "tensor_dxy"):
        path = os.path.join(retrieved_dir, f"{name}.tif")
        if not os.path.exists(path):
            raise MissingArtifactError(f"missing {path}; run 'mobi retrieve --tensor' first")
        comps[name] = load_image(path)
    return DiffusionTensorField(
        dxx=comps["tensor_dxx"], dyy=comps["tensor_dyy"], dxy=comps["tensor_dxy"]
    )


def cmd_decompose(cfg: RunConfig) -> int:
    rcfg = cfg.retrieve
    floors = (rcfg.anisotropy_floor, rcfg.diffusion_floor) if rcfg else (0.05, 1e-3)
    out_dir = _outdir(cfg, "retrieved")
    timer = StageTimer()
    with timer.stage("decompose"):
        tensor = _load_tensor(out_dir)
        ellipse = decompose_tensor(tensor, *floors)
    outputs = _save_maps(
        out_dir,
        {
            "orientation_deg": ellipse.orientation_deg,
            "anisotropy": ellipse.anisotropy,
            "mean_diffusion": ellipse.mean_diffusion,
            "valid_mask": ellipse.valid_mask.astype(float),
        },
    )
    png = os.path.join(out_dir, "orientation_hsv.png")
    _orientation_png(png, ellipse)
    outputs.append(png)
    write_manifest(
        os.path.join(cfg.output_dir, "decompose_manifest.json"),
        "decompose",
        cfg.snapshot(),
        timer.timings,
        outputs,
    )
    print(f"decompose: wrote ellipse maps to {out_dir}")
    return 0


def _write_metrics(path: str, metrics: dict) -> None:
    with open(path, "w") as fh:
        for key, value in metrics.items():
            fh.write(f"{key} = {value}\n")


def cmd_saxs_orient(cfg: RunConfig) -> int:
    if cfg.saxs is None:
        raise ConfigError("config has no 'saxs' section")
    s = cfg.saxs
    if s.pattern is None:
        raise ConfigError("saxs.pattern: no pattern file configured")
    timer = StageTimer()
    with timer.stage("orient"):
        pattern = SaxsPattern(load_image(s.pattern), beam_center=s.beam_center, q_per_px=s.q_per_px)
        profile = azimuthal_profile(pattern, s.q_min, s.q_max, s.n_bins)
        result = orientation_from_pattern(profile)
    metrics = {
        "psi_deg": f"{result.psi_deg:.4f}",
        "anisotropy": f"{result.anisotropy:.6f}",
        "defined": str(result.defined).lower(),
        "filled_bins": profile.n_filled,
    }
    out = os.path.join(_outdir(cfg), "saxs_metrics.txt")
    _write_metrics(out, metrics)
    write_manifest(
        os.path.join(cfg.output_dir, "saxs_orient_manifest.json"),
        "saxs-orient",
        cfg.snapshot(),
        timer.timings,
        [out],
    )
    print(f"saxs-orient: psi = {result.psi_deg:.2f} deg (anisotropy {result.anisotropy:.3f})")
    return 0


def _bundle_rois(cfg: RunConfig, shape) -> list[tuple[int, object, float]]:
    """(index, roi mask, truth scattering axis) for each configured bundle."""
    if cfg.simulate is None:
        return []
    from scipy import ndimage

    rois = []
    for i, bundle in enumerate(cfg.simulate.phantom.bundles()):
        mask = polygon_mask(bundle.polygon_px, *shape)
        core = ndimage.binary_erosion(mask, iterations=8)
        if core.any():
            rois.append((i, core, bundle.scatter_axis_deg))
    return rois


def cmd_compare(cfg: RunConfig, truth_dir: str | None, retrieved_dir: str | None) -> int:
    truth_dir = truth_dir or os.path.join(cfg.output_dir, "truth")
    retrieved_dir = retrieved_dir or os.path.join(cfg.output_dir, "retrieved")
    for d in (truth_dir, retrieved_dir):
        if not os.path.isdir(d):
            raise MissingArtifactError(f"missing directory {d}")

    timer = StageTimer()
    metrics: dict[str, object] = {}
    rows_out = []
    with timer.stage("compare"):
        # RMS of every truth map against its same-named counterpart
        truth_maps = {}
        for fname in sorted(os.listdir(truth_dir)):
            if not fname.endswith(".tif"):
                continue
            name = fname[:-4]
            other = os.path.join(retrieved_dir, fname)
            truth_maps[name] = load_image(os.path.join(truth_dir, fname))
            if not os.path.exists(other):
                raise MissingArtifactError(f"{retrieved_dir} lacks {fname}")
            got = load_image(other)
            if got.shape != truth_maps[name].shape:
                raise MobiError(f"{fname}: shape mismatch {got.shape} vs {truth_maps[name].shape}")
            rms = float(np.sqrt(np.mean((got - truth_maps[name]) ** 2)))
            metrics[f"rms_{name}"] = f"{rms:.6e}"
            rows_out.append((f"rms({name})", f"{rms:.3e}"))

        # scalar diffusion against the tensor truth, where it is significant
        diff_path = os.path.join(retrieved_dir, "diffusion.tif")
        if {"dxx", "dyy"} <= truth_maps.keys() and os.path.exists(diff_path):
            got = load_image(diff_path)
            true_scalar = 0.5 * (truth_maps["dxx"] + truth_maps["dyy"])
            sel = true_scalar > 0.1
            if sel.any():
                rel = np.sqrt(np.mean((got[sel] - true_scalar[sel]) ** 2)) / np.sqrt(
                    np.mean(true_scalar[sel] ** 2)
                )
                metrics["diffusion_rel_error"] = f"{float(rel):.6f}"
                rows_out.append(("diffusion rel err (>0.1 px^2)", f"{float(rel):.4f}"))

        # per-bundle orientation table
        ori_path = os.path.join(retrieved_dir, "orientation_deg.tif")
        if os.path.exists(ori_path) and cfg.simulate is not None:
            orientation = load_image(ori_path)
            valid = load_image(os.path.join(retrieved_dir, "valid_mask.tif")) > 0.5 \
                if os.path.exists(os.path.join(retrieved_dir, "valid_mask.tif")) \
                else np.ones_like(orientation, dtype=bool)
            psi_by_bundle = _synthetic_saxs_psis(cfg)
            for i, roi, truth_axis in _bundle_rois(cfg, orientation.shape):
                sel = roi & valid
                if not sel.any():
                    continue
                ddf_deg = circular_mean_deg(orientation[sel], period=180.0)
                d_truth = orientation_difference(ddf_deg, truth_axis)
                metrics[f"bundle{i}_truth_deg"] = f"{truth_axis:.2f}"
                metrics[f"bundle{i}_ddf_deg"] = f"{ddf_deg:.2f}"
                metrics[f"bundle{i}_ddf_vs_truth_deg"] = f"{d_truth:.3f}"
                rows_out.append((f"bundle {i} axis truth/ddf", f"{truth_axis:.1f} / {ddf_deg:.1f} (d={d_truth:.2f})"))
                if i in psi_by_bundle:
                    rep = compare_ddf_saxs(_ellipse_from_dir(retrieved_dir), roi, psi_by_bundle[i])
                    metrics[f"bundle{i}_saxs_psi_deg"] = f"{psi_by_bundle[i]:.2f}"
                    metrics[f"bundle{i}_ddf_vs_saxs_deg"] = f"{rep.difference_deg:.3f}"
                    rows_out.append(
                        (f"bundle {i} ddf vs saxs", f"{rep.difference_deg:.2f} deg")
                    )

    out = os.path.join(_outdir(cfg), "metrics.txt")
    _write_metrics(out, metrics)
    write_manifest(
        os.path.join(cfg.output_dir, "compare_manifest.json"),
        "compare",
        cfg.snapshot(),
        timer.timings,
        [out],
    )
    width = max(len(k) for k, _ in rows_out) if rows_out else 0
    print(f"compare: {truth_dir} vs {retrieved_dir}")
    for key, value in rows_out:
        print(f"  {key:<{width}}  {value}")
    return 0


def _ellipse_from_dir(retrieved_dir: str):
    from .ddf import EllipseMaps

    return EllipseMaps(
        orientation_deg=load_image(os.path.join(retrieved_dir, "orientation_deg.tif")),
        anisotropy=load_image(os.path.join(retrieved_dir, "anisotropy.tif")),
        mean_diffusion=load_image(os.path.join(retrieved_dir, "mean_diffusion.tif")),
        valid_mask=load_image(os.path.join(retrieved_dir, "valid_mask.tif")) > 0.5,
    )


def _synthetic_saxs_psis(cfg: RunConfig) -> dict[int, float]:
    """Mean scattering orientation of matched synthetic lobe patterns.

    For each configured fiber bundle a lobe pattern is generated along the
    fiber axis and pushed through the azimuthal analysis, mirroring a
    measurement on the scattering instrument.
    """
    s = cfg.saxs
    if s is None or not s.synthetic_from_phantom or cfg.simulate is None:
        return {}
    q_lobe = s.q_lobe if s.q_lobe is not None else 0.5 * (s.q_min + s.q_max)
    q_sigma = s.q_sigma if s.q_sigma is not None else 0.2 * (s.q_max - s.q_min)
    rows, cols = 256, 256
    out = {}
    for i, bundle in enumerate(cfg.simulate.phantom.bundles()):
        pattern = synthetic_lobe_pattern(
            rows,
            cols,
            beam_center=(rows / 2.0, cols / 2.0),
            q_per_px=s.q_per_px,
            axis_deg=bundle.orientation_deg,
            q_lobe=q_lobe,
            q_sigma=q_sigma,
            chi_sigma_deg=s.chi_sigma_deg,
            seed=cfg.seed + i,
        )
        profile = azimuthal_profile(pattern, s.q_min, s.q_max, s.n_bins)
        result = orientation_from_pattern(profile)
        if result.defined:
            out[i] = result.psi_deg
    return out


def cmd_init_config(path: str, rows: int, cols: int, pairs: int) -> int:
    cfg = demo_config_dict(rows=rows, cols=cols, n_pairs=pairs)
    with open(path, "w") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=False)
    print(f"wrote demo config to {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mobi", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"mobi {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="run configuration (YAML)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the config output_dir")

    p_sim = sub.add_parser("simulate", help="generate a synthetic acquisition and truth maps")
    add_common(p_sim)

    p_ret = sub.add_parser("retrieve", help="solve the per-pixel systems and integrate the phase")
    add_common(p_ret)
    p_ret.add_argument("--tensor", action="store_true", default=None,
                       help="also solve the directional (tensor) dark-field")

    p_dec = sub.add_parser("decompose", help="eigen-decompose retrieved tensor maps")
    add_common(p_dec)

    p_sax = sub.add_parser("saxs-orient", help="mean scattering orientation of a 2D pattern")
    add_common(p_sax)

    p_cmp = sub.add_parser("compare", help="score retrieved maps against ground truth")
    add_common(p_cmp)
    p_cmp.add_argument("--truth", default=None, help="truth directory (default: <out>/truth)")
    p_cmp.add_argument("--retrieved", default=None, help="retrieved directory (default: <out>/retrieved)")

    p_ini = sub.add_parser("init-config", help="write a ready-to-run demo configuration")
    p_ini.add_argument("path")
    p_ini.add_argument("--rows", type=int, default=256)
    p_ini.add_argument("--cols", type=int, default=256)
    p_ini.add_argument("--pairs", type=int, default=10)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "init-config":
            return cmd_init_config(args.path, args.rows, args.cols, args.pairs)
        overrides = {"seed": args.seed, "output_dir": args.out}
        if args.command == "retrieve" and args.tensor:
            overrides["retrieve.tensor"] = True
        cfg = load_config(args.config, overrides)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "retrieve":
            return cmd_retrieve(cfg)
        if args.command == "decompose":
            return cmd_decompose(cfg)
        if args.command == "saxs-orient":
            return cmd_saxs_orient(cfg)
        if args.command == "compare":
            return cmd_compare(cfg, args.truth, args.retrieved)
        raise ConfigError(f"unknown command {args.command!r}")
    except MobiError as exc:
        print(f"mobi {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
