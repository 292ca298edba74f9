"""
Batch command-line front end.

Every subcommand reads the run configuration (TOML file, flags, ``--set``
overrides), writes its outputs atomically and records a JSON manifest next to
its primary output. Exit codes:

    0  success
    1  unexpected error
    2  configuration error
    3  I/O or file-format error
    4  numerical degeneracy (clamped reconstruction, no usable sideband,
       zero field amplitude, undefined correlation)

Errors are printed to stderr as a single JSON line.
"""
from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .analysis import (MetricReport, Plane, edge_contrast_ratio, export_slice, ncc, ringing_energy)
from .config import RunConfig, parse_override
from .core import OpticalConfig, RytovField, Volume3D
from .darkfield import (CutoffUnits, FilterShape, FilterSpec, Modality, apply_darkfield, make_ctf_support,
                        make_filter, one_bin)
from .errors import (ConfigError, DegenerateReconstructionError, FormatError, GridMismatchError, LowSNRError,
                     SeparabilityError,
                     UndefinedCorrelationError, ZeroAmplitudeError)
from .forward import simulate_fields
from .holography import default_tilt, retrieve_field, rytov_transform, synthesize_interferogram
from .io import (atomic_write_bytes, read_field_stack, read_interferogram_stack, read_stack_config,
                 read_volume, read_volume_config, write_field_stack, write_interferogram_stack,
                 write_support_mask, write_volume)
from .phantoms import Sphere, build_phantom, generate_illuminations, sphere_edge_masks, sphere_masks
from .tomography import gerchberg_papoulis, map_ewald, reconstruct

EXIT_OK, EXIT_OTHER, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3, 4

# ringing comparison cutoff, in multiples of the inverse field of view
RINGING_CUTOFF_FOV = 10.0
RINGING_GUARD_VOXELS = 2


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _out_path(args, cfg: RunConfig, default_name: str) -> Path:
    if getattr(args, "out", None):
        return Path(args.out)
    return Path(cfg["run"]["output_dir"]) / default_name


def _ensure_parent(path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)


def _optical_for(path: Path, stored: Optional[OpticalConfig], cfg: RunConfig) -> OpticalConfig:
    """the run's optical config, checked against one stored in an input file"""
    optical = cfg.optical()
    if stored is not None and stored != optical:
        raise ConfigError(f"{path} was produced with {stored.to_dict()}, which differs from the run's "
                          f"optical config {optical.to_dict()}")
    return optical


def _rng(cfg: RunConfig) -> Optional[np.random.Generator]:
    seed = cfg["noise"]["seed"]
    return None if seed is None else np.random.default_rng(seed)


# commands; each returns (outputs, inputs, metrics)

def cmd_phantom(args, cfg: RunConfig):
    out = _out_path(args, cfg, "phantom.dfodt")
    _ensure_parent(out)
    vol = build_phantom(cfg.phantom(), cfg.grid())
    write_volume(out, vol, cfg.optical())
    return [out], [], {"min": float(vol.values.min()), "max": float(vol.values.max())}


def _simulate(phantom: Volume3D, cfg: RunConfig):
    optical = cfg.optical()
    illum = generate_illuminations(optical, cfg.illumination())
    workers = cfg["run"]["workers"]
    fields = simulate_fields(phantom, optical, illum, workers=workers)
    sigma = float(cfg["noise"]["sigma"])
    rng = _rng(cfg)
    holo = cfg["holography"]
    if holo["enabled"]:
        up = int(holo["upsample"])
        f0 = fields[0]
        tilt = holo["tilt"] or default_tilt(optical, f0.nx * up, f0.ny * up, f0.pitch / up)
        amp = float(holo["ref_amplitude"])
        holos = [synthesize_interferogram(f, tilt, amp, optical, up, sigma, rng) for f in fields]
        bgs = [synthesize_interferogram(f.with_values(f.incident()), tilt, amp, optical, up)
               for f in fields]
        return holos, bgs
    if sigma > 0:
        noisy = []
        for f in fields:
            n = rng.standard_normal((2, f.nx, f.ny))
            noisy.append(f.with_values(f.values + sigma * (n[0] + 1j * n[1]) / np.sqrt(2)))
        fields = noisy
    return fields, None


def cmd_simulate(args, cfg: RunConfig):
    src = Path(args.input)
    phantom = read_volume(src)
    optical = _optical_for(src, read_volume_config(src), cfg)
    frames, bgs = _simulate(phantom, cfg)
    if bgs is None:
        out = _out_path(args, cfg, "fields.dfodt")
        _ensure_parent(out)
        write_field_stack(out, frames, optical)
        return [out], [src], {"frames": len(frames)}
    out = _out_path(args, cfg, "holograms.dfodt")
    _ensure_parent(out)
    bg_out = Path(args.background_out) if args.background_out else out.with_name(out.stem + "_background.dfodt")
    write_interferogram_stack(out, frames, optical)
    write_interferogram_stack(bg_out, bgs, optical)
    return [out, bg_out], [src], {"frames": len(frames), "reference_tilt": list(frames[0].reference_tilt)}


def _retrieve(holos, optical: OpticalConfig, upsample: int):
    shape = (holos[0].nx // upsample, holos[0].ny // upsample)
    return [retrieve_field(h, optical, output_shape=shape, normalize_phase=False) for h in holos]


def cmd_retrieve(args, cfg: RunConfig):
    src = Path(args.input)
    optical = _optical_for(src, read_stack_config(src), cfg)
    holos = read_interferogram_stack(src)
    fields = _retrieve(holos, optical, int(cfg["holography"]["upsample"]))
    out = _out_path(args, cfg, "retrieved.dfodt")
    _ensure_parent(out)
    write_field_stack(out, fields, optical)
    return [out], [src], {"frames": len(fields)}


def _to_rytov(fields, backgrounds=None) -> list:
    if backgrounds is not None and len(backgrounds) != len(fields):
        raise ConfigError("background stack length does not match the field stack")
    out = []
    for i, f in enumerate(fields):
        if isinstance(f, RytovField):
            out.append(f)
        else:
            out.append(rytov_transform(f, background=None if backgrounds is None else backgrounds[i]))
    return out


def _reconstruct(psis, cfg: RunConfig, use_gp: Optional[bool] = None):
    optical = cfg.optical()
    workers = cfg["run"]["workers"]
    grid = cfg.grid()
    spectrum, report = map_ewald(psis, optical, grid, workers=workers)
    use_gp = cfg["gp"]["enabled"] if use_gp is None else use_gp
    if use_gp:
        vol = gerchberg_papoulis(spectrum, optical, cfg.gp(), workers=workers)
    else:
        vol = reconstruct(spectrum, optical, workers=workers)
    return spectrum, report, vol


def _recon_metrics(report, vol: Volume3D) -> dict:
    m = {"mapping": asdict(report),
         "clamped_voxels": vol.meta.get("clamped_voxels", 0), "imag_residue": vol.meta.get("imag_residue")}
    if "violation_energy" in vol.meta:
        m["violation_energy"] = vol.meta["violation_energy"]
    return m


def cmd_reconstruct(args, cfg: RunConfig):
    src = Path(args.input)
    _optical_for(src, read_stack_config(src), cfg)
    fields = read_field_stack(src)
    inputs = [src]
    backgrounds = None
    if args.background:
        inputs.append(Path(args.background))
        backgrounds = read_field_stack(args.background)
    psis = _to_rytov(fields, backgrounds)
    _, report, vol = _reconstruct(psis, cfg)
    out = _out_path(args, cfg, "recon.dfodt")
    _ensure_parent(out)
    write_volume(out, vol, cfg.optical())
    return [out], inputs, _recon_metrics(report, vol)


def cmd_darkfield(args, cfg: RunConfig):
    src = Path(args.input)
    vol = read_volume(src)
    spec = cfg.filter()
    filt = make_filter(spec, vol.grid)
    out_vol = apply_darkfield(vol, filt, workers=cfg["run"]["workers"])
    out = _out_path(args, cfg, "darkfield.dfodt")
    _ensure_parent(out)
    write_volume(out, out_vol)
    return [out], [src], {"cutoff_cycles_per_um": filt.cutoff, "shape": spec.shape.value}


def cmd_ctf(args, cfg: RunConfig):
    optical, grid = cfg.optical(), cfg.grid()
    modality = cfg.modality()
    c = cfg["ctf"]
    eps = c["epsilon"]
    if modality is Modality.DARK_FIELD and eps is None:
        eps = one_bin(grid)
    if modality is Modality.DARK_FIELD_ODT and c["cutoff"] is None:
        raise ConfigError("ctf.cutoff is required for the DarkFieldODT modality")
    try:
        mask = make_ctf_support(optical, grid, modality, epsilon=eps, cutoff=c["cutoff"], n_angles=c["n_angles"])
    except ValueError as e:
        raise ConfigError(str(e)) from None
    out = _out_path(args, cfg, "ctf.dfodt")
    _ensure_parent(out)
    write_support_mask(out, mask)
    return [out], [], {"modality": modality.value, "voxels": int(mask.mask.sum()), "epsilon": eps,
                       "cutoff": c["cutoff"], "hermitian": mask.is_hermitian()}


def cmd_compare(args, cfg: RunConfig):
    a, b = Path(args.a), Path(args.b)
    va, vb = read_volume(a), read_volume(b)
    diff = va.values.astype(float) - vb.values.astype(float)
    report = MetricReport(ncc=ncc(va, vb), extra={"max_abs_difference": float(np.max(np.abs(diff))),
                                                  "rms_difference": float(np.sqrt(np.mean(diff ** 2)))})
    out = _out_path(args, cfg, "compare.json")
    _ensure_parent(out)
    atomic_write_bytes(out, (report.to_json() + "\n").encode())
    return [out], [a, b], report.to_dict()


def cmd_slice(args, cfg: RunConfig):
    src = Path(args.input)
    vol = read_volume(src)
    plane = Plane(args.plane)
    axis = {Plane.XY: 2, Plane.XZ: 1, Plane.YZ: 0}[plane]
    index = vol.grid.shape[axis] // 2 if args.index is None else args.index
    vrange = tuple(args.range) if args.range else None
    out = _out_path(args, cfg, f"slice_{plane.value}_{index}.pgm")
    _ensure_parent(out)
    try:
        export_slice(vol, plane, index, out, vrange)
    except IndexError as e:
        raise ConfigError(str(e)) from None
    return [out, out.with_name(out.name + ".json")], [src], {"plane": plane.value, "index": index}


def _interior_error(vol: Volume3D, interior: np.ndarray, n_inside: float) -> float:
    return float(np.mean(vol.values[interior]) - n_inside)


def cmd_run(args, cfg: RunConfig):
    """full pipeline: phantom, simulate, [retrieve], reconstruct with and without GP, filter, compare"""
    optical, grid = cfg.optical(), cfg.grid()
    outdir = Path(cfg["run"]["output_dir"])
    outdir.mkdir(parents=True, exist_ok=True)
    spec = cfg.phantom()
    phantom = build_phantom(spec, grid)
    outputs = [outdir / "phantom.dfodt"]
    write_volume(outputs[-1], phantom, optical)

    frames, bgs = _simulate(phantom, cfg)
    if bgs is not None:
        write_interferogram_stack(outdir / "holograms.dfodt", frames, optical)
        up = int(cfg["holography"]["upsample"])
        fields = _retrieve(frames, optical, up)
        backgrounds = _retrieve(bgs, optical, up)
        outputs.append(outdir / "holograms.dfodt")
    else:
        fields, backgrounds = frames, None
        write_field_stack(outdir / "fields.dfodt", fields, optical)
        outputs.append(outdir / "fields.dfodt")
    psis = _to_rytov(fields, backgrounds)

    _, report, direct = _reconstruct(psis, cfg, use_gp=False)
    _, _, gp_vol = _reconstruct(psis, cfg, use_gp=True)
    write_volume(outdir / "recon_direct.dfodt", direct, optical)
    write_volume(outdir / "recon_gp.dfodt", gp_vol, optical)
    outputs += [outdir / "recon_direct.dfodt", outdir / "recon_gp.dfodt"]

    fspec = cfg.filter()
    filtered = apply_darkfield(gp_vol, make_filter(fspec, grid))
    write_volume(outdir / "darkfield.dfodt", filtered)
    outputs.append(outdir / "darkfield.dfodt")

    metrics = {"mapping": asdict(report), "clamped_voxels_direct": direct.meta["clamped_voxels"],
               "clamped_voxels_gp": gp_vol.meta["clamped_voxels"],
               "violation_energy": gp_vol.meta["violation_energy"],
               "ncc_direct": ncc(direct, phantom), "ncc_gp": ncc(gp_vol, phantom)}

    obj = phantom.values != spec.n_medium
    ring_spec = dict(cutoff=RINGING_CUTOFF_FOV, units=CutoffUnits.INVERSE_FOV)
    for shape in FilterShape:
        f = apply_darkfield(phantom, make_filter(FilterSpec(shape, **ring_spec), grid))
        metrics[f"ringing_energy_{shape.value}"] = ringing_energy(f, obj, RINGING_GUARD_VOXELS)

    if isinstance(spec.variant, Sphere):
        interior, _ = sphere_masks(grid, spec.variant)
        n_in = spec.variant.n_inside
        metrics["interior_error_direct"] = _interior_error(direct, interior, n_in)
        metrics["interior_error_gp"] = _interior_error(gp_vol, interior, n_in)
        core, shell = sphere_edge_masks(grid, spec.variant)
        metrics["edge_contrast_filtered"] = edge_contrast_ratio(filtered, core, shell)
        metrics["edge_contrast_unfiltered"] = edge_contrast_ratio(gp_vol, core, shell, offset=spec.n_medium)

    report_obj = MetricReport(ncc=metrics["ncc_gp"], ringing_energy=metrics[f"ringing_energy_{FilterShape.GAUSSIAN.value}"],
                              edge_contrast_ratio=metrics.get("edge_contrast_filtered"),
                              clamped_voxels=gp_vol.meta["clamped_voxels"], extra=metrics)
    atomic_write_bytes(outdir / "metrics.json", (report_obj.to_json() + "\n").encode())
    outputs.append(outdir / "metrics.json")
    return outputs, [], metrics


# plumbing

def _manifest(command: str, cfg: RunConfig, outputs, inputs, metrics) -> dict:
    return {"command": command, "version": __version__, "config_hash": cfg.hash(), "config": cfg.data,
            "inputs": {str(p): _sha256(Path(p)) for p in inputs},
            "outputs": {str(p): _sha256(Path(p)) for p in outputs},
            "metrics": metrics,
            "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat()}


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("-c", "--config", type=Path, help="TOML run configuration")
    p.add_argument("--set", action="append", default=[], metavar="TABLE.KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("--workers", type=int, help="run.workers")
    p.add_argument("--output-dir", help="run.output_dir")
    p.add_argument("--manifest", type=Path, help="manifest path (default: next to the primary output)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dfodt", description="dark-field optical diffraction tomography")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="voxelize a ground-truth phantom")
    _add_common(p)
    p.add_argument("-o", "--out")
    p.add_argument("--type", dest="phantom_type", help="phantom.type")

    p = sub.add_parser("simulate", help="simulate fields or interferograms from a phantom")
    _add_common(p)
    p.add_argument("input")
    p.add_argument("-o", "--out")
    p.add_argument("--background-out", help="background interferogram stack path (holography only)")
    p.add_argument("--holography", action="store_true", default=None, help="holography.enabled")
    p.add_argument("--seed", type=int, help="noise.seed")
    p.add_argument("--noise-sigma", type=float, help="noise.sigma")

    p = sub.add_parser("retrieve", help="retrieve complex fields from an interferogram stack")
    _add_common(p)
    p.add_argument("input")
    p.add_argument("-o", "--out")

    p = sub.add_parser("reconstruct", help="map fields to the 3D spectrum and invert")
    _add_common(p)
    p.add_argument("input")
    p.add_argument("-o", "--out")
    p.add_argument("--background", help="field stack of incident fields to divide by")
    p.add_argument("--iterations", type=int, help="gp.iterations")
    p.add_argument("--no-gp", action="store_true", default=None, help="gp.enabled = false")

    p = sub.add_parser("darkfield", help="apply a dark-field high-pass filter to a volume")
    _add_common(p)
    p.add_argument("input")
    p.add_argument("-o", "--out")
    p.add_argument("--shape", help="filter.shape (step | gaussian)")
    p.add_argument("--cutoff", type=float, help="filter.cutoff")
    p.add_argument("--units", help="filter.units (cycles_per_um | fov)")

    p = sub.add_parser("ctf", help="write a modality's Fourier support mask")
    _add_common(p)
    p.add_argument("-o", "--out")
    p.add_argument("--modality", help="ctf.modality")
    p.add_argument("--epsilon", type=float, help="ctf.epsilon, cycles/um")
    p.add_argument("--cutoff", type=float, help="ctf.cutoff, cycles/um")

    p = sub.add_parser("compare", help="normalized cross-correlation of two volumes")
    _add_common(p)
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("-o", "--out")

    p = sub.add_parser("slice", help="export a volume slice as an 8-bit PGM")
    _add_common(p)
    p.add_argument("input")
    p.add_argument("-o", "--out")
    p.add_argument("--plane", default="XY", choices=[pl.value for pl in Plane])
    p.add_argument("--index", type=int)
    p.add_argument("--range", type=float, nargs=2, metavar=("LO", "HI"))

    p = sub.add_parser("run", help="run the full pipeline into run.output_dir")
    _add_common(p)
    p.add_argument("--holography", action="store_true", default=None, help="holography.enabled")
    p.add_argument("--seed", type=int, help="noise.seed")
    p.add_argument("--noise-sigma", type=float, help="noise.sigma")
    p.add_argument("--iterations", type=int, help="gp.iterations")
    return parser


# flag attribute -> config key
_FLAG_KEYS = {
    "workers": ("run", "workers"), "output_dir": ("run", "output_dir"),
    "phantom_type": ("phantom", "type"), "holography": ("holography", "enabled"),
    "seed": ("noise", "seed"), "noise_sigma": ("noise", "sigma"),
    "iterations": ("gp", "iterations"), "shape": ("filter", "shape"), "units": ("filter", "units"),
    "modality": ("ctf", "modality"), "epsilon": ("ctf", "epsilon"),
}

COMMANDS = {"phantom": cmd_phantom, "simulate": cmd_simulate, "retrieve": cmd_retrieve,
            "reconstruct": cmd_reconstruct, "darkfield": cmd_darkfield, "ctf": cmd_ctf,
            "compare": cmd_compare, "slice": cmd_slice, "run": cmd_run}


def _flag_overrides(args) -> list[dict]:
    out = []
    for attr, (table, key) in _FLAG_KEYS.items():
        val = getattr(args, attr, None)
        if val is not None:
            out.append({table: {key: val}})
    if getattr(args, "no_gp", None):
        out.append({"gp": {"enabled": False}})
    cutoff = getattr(args, "cutoff", None)
    if cutoff is not None:
        out.append({"ctf" if args.command == "ctf" else "filter": {"cutoff": cutoff}})
    return out


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, GridMismatchError, SeparabilityError)):
        return EXIT_CONFIG
    if isinstance(exc, (FormatError, OSError)):
        return EXIT_IO
    if isinstance(exc, (DegenerateReconstructionError, LowSNRError, ZeroAmplitudeError,
                        UndefinedCorrelationError)):
        return EXIT_NUMERIC
    return EXIT_OTHER


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        overrides = [parse_override(s) for s in args.set] + _flag_overrides(args)
        cfg = RunConfig.load(args.config, overrides)
        outputs, inputs, metrics = COMMANDS[args.command](args, cfg)
        inputs = list(inputs) + ([args.config] if args.config else [])
        manifest = _manifest(args.command, cfg, outputs, inputs, metrics)
        mpath = args.manifest or Path(outputs[0]).with_name(Path(outputs[0]).name + ".manifest.json")
        if args.command == "run" and args.manifest is None:
            mpath = Path(cfg["run"]["output_dir"]) / "manifest.json"
        atomic_write_bytes(mpath, (json.dumps(manifest, indent=1, sort_keys=True) + "\n").encode())
        print(json.dumps({"manifest": str(mpath), "outputs": [str(p) for p in outputs]}))
        return EXIT_OK
    except Exception as exc:  # noqa: BLE001 - every failure becomes one JSON line and an exit code
        code = _exit_code(exc)
        print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}),
              file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
