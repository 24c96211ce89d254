"""Command-line entry points and file plumbing.

Commands: simulate, reconstruct, metrics, curate, toy.  Volumes and image
stacks travel as MRC2014 mode-2 files, poses/CTFs/metrics as JSON, and toy
sweeps as CSV.  Every command writes a run manifest (config snapshot, input
hashes, seed, version, outputs) sufficient to reproduce its outputs
byte-identically, timing aside.

Exit codes: 0 success, 2 usage/config error, 3 unreadable or invalid input,
4 numerical failure.
"""

import argparse
import hashlib
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .driver import (EmpmConfig, curate_octiles, empm_run,
                     octile_keep_indices, quality_against_volume)
from .grids import build_radial_quadrature, default_polar_grid
from .imaging import (CTFParams, DistributionSpec, NoiseModel, flat_ctf,
                      simulate_dataset)
from .metrics import (fsc, mask_radius, masked_volume_correlation,
                      volume_correlation, volume_to_voxels, voxels_to_volume)
from .mrcio import read_mrc, write_mrc
from .polar import PixelImage, image_to_polar, polar_to_pixel
from .toys import STRATEGIES, mra_experiment, msa_experiment, sweep_to_csv
from .volume import volume_from_function

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_NUMERICAL = 4

THREADS_ENV = "EMPM_THREADS"


class UsageError(Exception):
    """Bad flags or configuration values."""


class InputError(Exception):
    """Missing or malformed input files."""


# ---------------------------------------------------------------- plumbing

def _apply_threads(n: int | None) -> None:
    """Cap worker threads in the numerical backends (flag beats env var)."""
    if n is None:
        raw = os.environ.get(THREADS_ENV)
        if raw is None:
            return
        try:
            n = int(raw)
        except ValueError as e:
            raise UsageError(f"{THREADS_ENV} must be an integer") from e
    if n < 1:
        raise UsageError("thread count must be >= 1")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)
    try:
        import threadpoolctl
        threadpoolctl.threadpool_limits(n)
    except ImportError:
        pass


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(f"not JSON serializable: {type(o)}")


def write_json(path, obj) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")


def load_config(path, allowed: set[str]) -> dict[str, str]:
    """Flat key=value file; '#' starts a comment; unknown keys rejected."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise InputError(f"cannot read config {path}: {e}") from e
    out: dict[str, str] = {}
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{ln}: expected key=value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in allowed:
            raise UsageError(f"{path}:{ln}: unknown key {key!r}")
        out[key] = val
    return out


def write_manifest(out_dir: Path, command: str, config: dict,
                   inputs: list, outputs: list[str], seed,
                   elapsed: float) -> None:
    man = {
        "command": command,
        "version": __version__,
        "seed": int(seed),
        "config": config,
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": sorted(outputs),
        "elapsed_seconds": round(float(elapsed), 3),
    }
    write_json(out_dir / "manifest.json", man)


def _read_stack(path, K: float) -> list:
    """MRC stack -> list of polar images on the default grid for K."""
    try:
        data, _ = read_mrc(path)
    except OSError as e:
        raise InputError(f"cannot read stack {path}: {e}") from e
    except ValueError as e:
        raise InputError(str(e)) from e
    grid = default_polar_grid(K)
    return [image_to_polar(PixelImage(values=np.asarray(sec, dtype=float)),
                           grid) for sec in data]


def _read_volume(path, K: float):
    try:
        data, _ = read_mrc(path)
    except OSError as e:
        raise InputError(f"cannot read volume {path}: {e}") from e
    except ValueError as e:
        raise InputError(str(e)) from e
    if data.ndim != 3 or len(set(data.shape)) != 1:
        raise InputError(f"{path}: volume must be a cube")
    radial = build_radial_quadrature(K, int(math.ceil(K)))
    return voxels_to_volume(np.asarray(data, dtype=float), radial)


def _read_ctf_table(path, n_images: int) -> tuple[list[CTFParams], list[int]]:
    """CTF group table -> per-image params (round-robin when fewer groups)."""
    try:
        entries = json.loads(Path(path).read_text())
    except OSError as e:
        raise InputError(f"cannot read CTF table {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise InputError(f"malformed CTF table {path}: {e}") from e
    if not isinstance(entries, list) or not entries:
        raise InputError(f"{path}: CTF table must be a nonempty JSON array")
    try:
        groups = [CTFParams(defocus=float(e["defocus"]),
                            amplitude_contrast=float(
                                e.get("amplitude_contrast", 0.1)),
                            envelope=float(e.get("envelope", 0.0)),
                            micrograph_id=int(e.get("micrograph_id", i)))
                  for i, e in enumerate(entries)]
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(f"{path}: bad CTF entry: {e}") from e
    ids = [j % len(groups) for j in range(n_images)]
    return [groups[i] for i in ids], ids


def _pose_records(poses, ctf_ids) -> list[dict]:
    return [{"index": j, "alpha": float(p.tau.alpha),
             "beta": float(p.tau.beta), "gamma": float(p.tau.gamma),
             "dx": float(p.delta[0]), "dy": float(p.delta[1]),
             "ctf_id": int(c)} for j, (p, c) in enumerate(zip(poses, ctf_ids))]


def _parse_float_list(text: str, flag: str) -> list[float]:
    vals = [s for s in (t.strip() for t in text.split(",")) if s]
    if not vals:
        raise UsageError(f"{flag} needs at least one value")
    try:
        return [float(v) for v in vals]
    except ValueError as e:
        raise UsageError(f"{flag}: {e}") from e


# ------------------------------------------------------- simulate command

SIM_KEYS = {"n_images", "pixels", "K", "sigma", "seed", "n_blobs",
            "delta_sigma", "defocus_list"}
SIM_DEFAULTS = {"n_images": "64", "pixels": "64", "K": "8.0", "sigma": "0.0",
                "seed": "0", "n_blobs": "3", "delta_sigma": "0.0",
                "defocus_list": ""}


def random_blob_volume(radial, n_blobs: int, seed):
    """Random mixture of off-center Gaussian blobs (real in real space).

    Blob widths scale with the band limit K so the spectrum has decayed at
    the cutoff; otherwise truncation ringing leaks outside the pixel box and
    the rendered stack no longer matches the frequency-domain model.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xB10B]))
    s_lo = max(0.12, 2.8 / radial.K)
    s_hi = max(0.18, 3.8 / radial.K)
    blobs = []
    for _ in range(n_blobs):
        c = rng.uniform(-0.3, 0.3, 3)
        s = rng.uniform(s_lo, s_hi)
        a = rng.uniform(0.5, 1.5)
        blobs.append((c, s, a))

    def fhat(kx, ky, kz):
        out = np.zeros(np.broadcast(kx, ky, kz).shape, dtype=complex)
        for (cx, cy, cz), s, a in blobs:
            amp = a * (2 * np.pi * s * s) ** 1.5
            out += amp * np.exp(-(s * s) * (kx**2 + ky**2 + kz**2) / 2.0) \
                * np.exp(-1j * (kx * cx + ky * cy + kz * cz))
        return out

    return volume_from_function(fhat, radial)


def _sim_config(args) -> dict:
    cfg = dict(SIM_DEFAULTS)
    if args.config:
        cfg.update(load_config(args.config, SIM_KEYS))
    for key in ("n_images", "pixels", "K", "sigma", "seed", "n_blobs",
                "delta_sigma", "defocus_list"):
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = str(v)
    try:
        out = {"n_images": int(cfg["n_images"]), "pixels": int(cfg["pixels"]),
               "K": float(cfg["K"]), "sigma": float(cfg["sigma"]),
               "seed": int(cfg["seed"]), "n_blobs": int(cfg["n_blobs"]),
               "delta_sigma": float(cfg["delta_sigma"]),
               "defocus_list": cfg["defocus_list"]}
    except ValueError as e:
        raise UsageError(f"bad config value: {e}") from e
    if out["n_images"] < 1 or out["pixels"] < 2 or out["n_blobs"] < 1:
        raise UsageError("n_images, pixels, and n_blobs must be positive")
    if out["K"] <= 0 or out["sigma"] < 0 or out["delta_sigma"] < 0:
        raise UsageError("K must be positive; sigma bounds nonnegative")
    return out


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    cfg = _sim_config(args)
    inputs = [args.config] if args.config else []
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    grid = default_polar_grid(cfg["K"])
    volume = random_blob_volume(grid.radial, cfg["n_blobs"], cfg["seed"])
    if cfg["defocus_list"]:
        ctf_groups = tuple(CTFParams(defocus=d, micrograph_id=i)
                           for i, d in enumerate(_parse_float_list(
                               cfg["defocus_list"], "defocus_list")))
    else:
        ctf_groups = (flat_ctf(),)
    dist = DistributionSpec(delta_sigma=cfg["delta_sigma"], ctfs=ctf_groups)
    # noise is added in the pixel domain (per-pixel std = sigma), where it
    # survives the write/ingest round trip; frequency-domain node noise has
    # no pixel-image counterpart
    images, poses, ctf_ids = simulate_dataset(
        volume, cfg["n_images"], dist, NoiseModel(0.0), grid,
        cfg["seed"], dx=2.0 / cfg["pixels"])
    sections = []
    for j, im in enumerate(images):
        pix = polar_to_pixel(im, cfg["pixels"]).values
        if cfg["sigma"] > 0.0:
            rng = np.random.default_rng(
                np.random.SeedSequence([cfg["seed"], j, 2]))
            pix = pix + rng.normal(0.0, cfg["sigma"], pix.shape)
        sections.append(pix)
    stack = np.stack(sections).astype(np.float32)
    write_mrc(out_dir / "stack.mrc", stack, is_stack=True)
    write_mrc(out_dir / "truth.mrc",
              volume_to_voxels(volume, cfg["pixels"]).astype(np.float32))
    write_json(out_dir / "poses.json", _pose_records(poses, ctf_ids))
    write_json(out_dir / "ctfs.json",
               [{"defocus": c.defocus,
                 "amplitude_contrast": c.amplitude_contrast,
                 "envelope": c.envelope, "micrograph_id": c.micrograph_id}
                for c in ctf_groups])
    write_manifest(out_dir, "simulate", cfg, inputs,
                   ["stack.mrc", "truth.mrc", "poses.json", "ctfs.json"],
                   cfg["seed"], time.perf_counter() - t0)
    return EXIT_OK


# ---------------------------------------------------- reconstruct command

RECON_KEYS = {"K", "eps_tol", "delta_local", "delta_max", "iterations",
              "ml_percentile", "seed", "backend", "direction_cap",
              "strategy", "l_cap"}


def _recon_config(args) -> EmpmConfig:
    cfg = {}
    if args.config:
        cfg.update(load_config(args.config, RECON_KEYS))
    for key in RECON_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = str(v)
    kwargs = {}
    casts = {"K": float, "eps_tol": float, "delta_local": float,
             "delta_max": float, "iterations": int, "ml_percentile": float,
             "seed": int, "backend": str, "direction_cap": int,
             "strategy": str, "l_cap": int}
    try:
        for key, val in cfg.items():
            kwargs[key] = casts[key](val)
        return EmpmConfig(**kwargs)
    except ValueError as e:
        raise UsageError(f"bad config value: {e}") from e


def cmd_reconstruct(args) -> int:
    t0 = time.perf_counter()
    cfg = _recon_config(args)
    images = _read_stack(args.stack, cfg.K)
    ctfs, ctf_ids = _read_ctf_table(args.ctf_table, len(images))
    reference = _read_volume(args.reference, cfg.K) if args.reference \
        else None
    inputs = [args.stack, args.ctf_table] \
        + ([args.config] if args.config else []) \
        + ([args.reference] if args.reference else [])

    volume, poses, history = empm_run(images, ctfs, cfg, reference=reference)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    n_vox = int(args.voxels)
    write_mrc(out_dir / "volume.mrc",
              volume_to_voxels(volume, n_vox).astype(np.float32))
    write_json(out_dir / "poses.json", _pose_records(poses, ctf_ids))
    write_json(out_dir / "history.json",
               [{"kind": r.kind, "pose_hash": r.pose_hash,
                 "z_reference": r.z_reference, "seconds": round(r.seconds, 3)}
                for r in history.records])
    config_snapshot = {k: getattr(cfg, k) for k in
                       ("K", "eps_tol", "delta_local", "delta_max",
                        "iterations", "ml_percentile", "seed", "backend",
                        "direction_cap")}
    write_manifest(out_dir, "reconstruct", config_snapshot, inputs,
                   ["volume.mrc", "poses.json", "history.json"],
                   cfg.seed, time.perf_counter() - t0)
    return EXIT_OK


# -------------------------------------------------------- metrics command

def cmd_metrics(args) -> int:
    t0 = time.perf_counter()
    va = _read_volume(args.volume_a, args.K)
    vb = _read_volume(args.volume_b, args.K)
    radius = args.mask_radius if args.mask_radius is not None \
        else mask_radius(vb)
    curve = fsc(va, vb)
    result = {
        "Z": volume_correlation(va, vb),
        "Z_mask": masked_volume_correlation(va, vb, radius=radius),
        "mask_radius": float(radius),
        "fsc": [None if math.isnan(x) else float(x) for x in curve],
        "k": [float(k) for k in va.radial.nodes],
    }
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_json(out_path, result)
    out_dir = out_path.parent
    write_manifest(out_dir, "metrics",
                   {"K": args.K, "mask_radius": args.mask_radius},
                   [args.volume_a, args.volume_b], [out_path.name],
                   0, time.perf_counter() - t0)
    return EXIT_OK


# --------------------------------------------------------- curate command

def cmd_curate(args) -> int:
    t0 = time.perf_counter()
    if not (0 <= args.k_exclude <= 7):
        raise UsageError("--k-exclude must lie in [0, 7]")
    images = _read_stack(args.stack, args.K)
    volume = _read_volume(args.volume, args.K)
    if args.ctf_table:
        ctfs, _ = _read_ctf_table(args.ctf_table, len(images))
    else:
        ctfs = [flat_ctf()] * len(images)
    inputs = [args.stack, args.volume] \
        + ([args.ctf_table] if args.ctf_table else [])

    quality = quality_against_volume(images, ctfs, volume,
                                     delta_local=args.delta_local,
                                     direction_cap=args.direction_cap)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    order = np.argsort(-quality, kind="stable")
    lines = ["index,Q"] + [f"{int(j)},{quality[j]:.10g}" for j in order]
    (out_dir / "quality.csv").write_text("\n".join(lines) + "\n")

    raw, _ = read_mrc(args.stack)
    keep = octile_keep_indices(quality, args.k_exclude)
    write_mrc(out_dir / "filtered_stack.mrc", raw[keep], is_stack=True)
    write_manifest(out_dir, "curate",
                   {"K": args.K, "k_exclude": args.k_exclude,
                    "delta_local": args.delta_local,
                    "direction_cap": args.direction_cap},
                   inputs, ["quality.csv", "filtered_stack.mrc"],
                   0, time.perf_counter() - t0)
    return EXIT_OK


# ------------------------------------------------------------ toy command

def cmd_toy(args) -> int:
    t0 = time.perf_counter()
    sigma_grid = _parse_float_list(args.sigma_grid, "--sigma-grid")
    param_grid = _parse_float_list(args.param_grid, "--param-grid")
    if args.kind == "msa":
        rows = msa_experiment(sigma_grid, param_grid, list(STRATEGIES),
                              trials=args.trials, seed=args.seed,
                              beta=args.beta, max_iters=args.max_iters)
    else:
        rows = mra_experiment(sigma_grid, param_grid, trials=args.trials,
                              seed=args.seed, max_iters=args.max_iters)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(sweep_to_csv(rows))
    write_manifest(out_path.parent, f"toy-{args.kind}",
                   {"sigma_grid": sigma_grid, "param_grid": param_grid,
                    "trials": args.trials, "beta": args.beta,
                    "max_iters": args.max_iters},
                   [], [out_path.name], args.seed, time.perf_counter() - t0)
    return EXIT_OK


# --------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="empm",
        description="Ab initio reconstruction pipeline and toy testbeds.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--threads", type=int, default=None,
                        help=f"worker thread cap (default: ${THREADS_ENV})")

    sp = sub.add_parser("simulate", help="synthesize an image stack")
    sp.add_argument("--config", default=None)
    sp.add_argument("--out", required=True)
    sp.add_argument("--n-images", dest="n_images", type=int)
    sp.add_argument("--pixels", type=int)
    sp.add_argument("--K", type=float)
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--n-blobs", dest="n_blobs", type=int)
    sp.add_argument("--delta-sigma", dest="delta_sigma", type=float)
    sp.add_argument("--defocus-list", dest="defocus_list")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("reconstruct", help="run the alternating refinement")
    sp.add_argument("--stack", required=True)
    sp.add_argument("--ctf-table", dest="ctf_table", required=True)
    sp.add_argument("--config", default=None)
    sp.add_argument("--out", required=True)
    sp.add_argument("--reference", default=None,
                    help="known volume for per-step correlation tracking")
    sp.add_argument("--voxels", type=int, default=64,
                    help="output volume grid size")
    sp.add_argument("--K", type=float)
    sp.add_argument("--eps-tol", dest="eps_tol", type=float)
    sp.add_argument("--delta-local", dest="delta_local", type=float)
    sp.add_argument("--delta-max", dest="delta_max", type=float)
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--ml-percentile", dest="ml_percentile", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--backend", choices=["QBP", "LSQ"])
    sp.add_argument("--direction-cap", dest="direction_cap", type=int)
    sp.add_argument("--strategy", choices=["EMPM", "ML"])
    sp.add_argument("--l-cap", dest="l_cap", type=int,
                    help="angular-degree cap on reconstructions")
    common(sp)
    sp.set_defaults(func=cmd_reconstruct)

    sp = sub.add_parser("metrics", help="compare two volumes")
    sp.add_argument("--volume-a", dest="volume_a", required=True)
    sp.add_argument("--volume-b", dest="volume_b", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--K", type=float, default=8.0)
    sp.add_argument("--mask-radius", dest="mask_radius", type=float,
                    default=None)
    common(sp)
    sp.set_defaults(func=cmd_metrics)

    sp = sub.add_parser("curate", help="score and filter an image stack")
    sp.add_argument("--stack", required=True)
    sp.add_argument("--volume", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--ctf-table", dest="ctf_table", default=None)
    sp.add_argument("--K", type=float, default=8.0)
    sp.add_argument("--k-exclude", dest="k_exclude", type=int, default=0)
    sp.add_argument("--delta-local", dest="delta_local", type=float,
                    default=0.0)
    sp.add_argument("--direction-cap", dest="direction_cap", type=int,
                    default=None)
    common(sp)
    sp.set_defaults(func=cmd_curate)

    sp = sub.add_parser("toy", help="run a ring-model strategy sweep")
    sp.add_argument("--kind", choices=["msa", "mra"], required=True)
    sp.add_argument("--sigma-grid", dest="sigma_grid", required=True,
                    help="comma-separated noise levels")
    sp.add_argument("--param-grid", dest="param_grid", required=True,
                    help="comma-separated second-axis values "
                         "(msa: init blend; mra: assumed noise)")
    sp.add_argument("--trials", type=int, default=4)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--beta", type=float, default=0.0)
    sp.add_argument("--max-iters", dest="max_iters", type=int, default=32)
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_toy)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code else EXIT_OK
    try:
        _apply_threads(args.threads)
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (InputError, FileNotFoundError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (RuntimeError, FloatingPointError, np.linalg.LinAlgError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
