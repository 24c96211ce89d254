"""Two-phase alternating refinement driver and reference pipelines.

The driver alternates reconstruction with maximum-likelihood and
maximum-entropy alignment: phase one uses principal modes estimated from the
data themselves, phase two re-estimates them from the phase-one volume and
continues from the carried poses.  Oracle pipelines align against a known
volume (or the current estimate) and serve as accuracy references.
"""

import hashlib
import time
from dataclasses import dataclass, field

import numpy as np

from .align import (CorrelationTable, correlate, displacement_set, me_align,
                    ml_align, project_templates)
from .imaging import CTFParams, DistributionSpec, Pose, ctf_eval, sample_pose
from .metrics import volume_correlation
from .modes import (KernelMatrix, ctf_svd, empirical_kernel, estimated_kernel,
                    select_modes)
from .polar import PolarImage, polar_to_bessel, translation_phase
from .recon import PosedDataset, lsq_reconstruct, qbp_reconstruct
from .volume import EulerAngles, VolumeSH, generate_templates


@dataclass(frozen=True)
class EmpmConfig:
    """Knobs for the alternating refinement run.

    delta_local is the per-half-step displacement search radius (0 disables
    the search); delta_max caps the accumulated displacement estimate.
    direction_cap optionally coarsens the template direction grid for speed.
    """

    K: float = 48.0
    eps_tol: float = 0.01
    delta_local: float = 0.03
    delta_max: float = 0.1
    iterations: int = 32
    ml_percentile: float = 5.0
    seed: int = 0
    backend: str = "QBP"
    direction_cap: int | None = None
    strategy: str = "EMPM"   # "EMPM" alternates ML/ME; "ML" is ML-only
    l_cap: int | None = None  # optional angular-degree cap on reconstructions

    def __post_init__(self):
        if self.K <= 0:
            raise ValueError("band limit must be positive")
        if self.eps_tol <= 0:
            raise ValueError("eps_tol must be positive")
        if self.delta_local < 0 or self.delta_max < 0:
            raise ValueError("displacement bounds must be nonnegative")
        if self.delta_local > self.delta_max:
            raise ValueError("delta_local must not exceed delta_max")
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        if not (0.0 < self.ml_percentile <= 100.0):
            raise ValueError("ml_percentile must lie in (0, 100]")
        if self.backend not in ("QBP", "LSQ"):
            raise ValueError("backend must be QBP or LSQ")
        if self.strategy not in ("EMPM", "ML"):
            raise ValueError("strategy must be EMPM or ML")
        if self.l_cap is not None and self.l_cap < 0:
            raise ValueError("l_cap must be nonnegative")


@dataclass(frozen=True)
class HalfStep:
    kind: str            # "ML" | "ME"
    pose_hash: str       # sha256 over the pose snapshot
    z_reference: float | None
    seconds: float


@dataclass(frozen=True)
class RunHistory:
    records: tuple[HalfStep, ...] = ()

    def __len__(self) -> int:
        return len(self.records)

    @property
    def z_series(self) -> list[float | None]:
        return [r.z_reference for r in self.records]


def pose_hash(poses: list[Pose]) -> str:
    arr = np.array([[p.tau.alpha, p.tau.beta, p.tau.gamma,
                     p.delta[0], p.delta[1]] for p in poses])
    return hashlib.sha256(arr.tobytes()).hexdigest()


def _ctf_columns(ctfs, radial) -> np.ndarray:
    return np.stack([ctf_eval(c, radial.nodes) for c in ctfs], axis=1)


def _shift_images(images, poses) -> list[PolarImage]:
    """Undo each image's current displacement estimate so the candidate
    search is local around it."""
    out = []
    for im, p in zip(images, poses):
        if p.delta == (0.0, 0.0):
            out.append(im)
        else:
            phase = np.conj(translation_phase(im.grid, np.asarray(p.delta)))
            out.append(PolarImage(grid=im.grid, values=im.values * phase))
    return out


def _accumulate_deltas(new_poses, old_poses, delta_max) -> list[Pose]:
    out = []
    for np_, op in zip(new_poses, old_poses):
        d = np.asarray(op.delta) + np.asarray(np_.delta)
        mag = float(np.hypot(d[0], d[1]))
        if mag > delta_max:
            d = d * (delta_max / mag)
        out.append(Pose(tau=np_.tau, delta=(float(d[0]), float(d[1]))))
    return out


def _reconstruct(data: PosedDataset, backend: str, label: str,
                 l_cap: int | None = None) -> VolumeSH:
    v = qbp_reconstruct(data, l_cap=l_cap) if backend == "QBP" \
        else lsq_reconstruct(data, l_cap=l_cap)
    if not np.any(v.coeffs):
        raise RuntimeError(f"degenerate all-zero reconstruction at {label}; "
                           "check input images and pose initialization")
    return v


def _random_poses(n: int, seed) -> list[Pose]:
    dist = DistributionSpec()
    poses = []
    for j in range(n):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), j]))
        p = sample_pose(rng, dist)
        poses.append(Pose(tau=p.tau, delta=(0.0, 0.0)))
    return poses


def empm_run(images: list[PolarImage], ctfs: list[CTFParams],
             cfg: EmpmConfig, reference: VolumeSH | None = None
             ) -> tuple[VolumeSH, list[Pose], RunHistory]:
    """Full two-phase alternating refinement.

    Phase one: principal modes from the data, random uniform initial
    orientations, zero displacements, `iterations` rounds of
    {reconstruct; ML align; reconstruct; ME align}.  Phase two: modes
    re-estimated from the phase-one volume, poses carried forward, another
    `iterations` rounds.  Returns the final least-squares polish, the final
    poses, and the per-half-step history.
    """
    if len(images) < 1:
        raise ValueError("need at least one image")
    if len(ctfs) != len(images):
        raise ValueError("one CTF per image required")
    grid = images[0].grid
    radial = grid.radial
    ctf_cols = _ctf_columns(ctfs, radial)              # [R, N]
    fact = ctf_svd(ctf_cols, eps_tol=min(cfg.eps_tol, 1e-6))
    disp = displacement_set(cfg.delta_local)

    bessels = [polar_to_bessel(im) for im in images]
    basis = select_modes(empirical_kernel(bessels), cfg.eps_tol)

    poses = _random_poses(len(images), np.random.SeedSequence(
        [int(cfg.seed), 0x1A17]).generate_state(1)[0])
    records: list[HalfStep] = []
    volume: VolumeSH | None = None
    step = 0

    def half_step(kind: str, basis, poses, label: str):
        nonlocal step
        t0 = time.perf_counter()
        data = PosedDataset(images=tuple(images), poses=tuple(poses),
                            ctfs=tuple(ctfs))
        vol = _reconstruct(data, cfg.backend, label, l_cap=cfg.l_cap)
        ts = generate_templates(vol, grid, direction_cap=cfg.direction_cap)
        tpl = project_templates(ts, basis, fact)
        table = correlate(_shift_images(images, poses), tpl, disp)
        seed = (int(cfg.seed) << 16) + step
        step += 1
        if kind == "ML":
            new = ml_align(table, percentile=cfg.ml_percentile, seed=seed)
        else:
            new = me_align(table, seed=seed)
        new = _accumulate_deltas(new, poses, cfg.delta_max)
        z = volume_correlation(vol, reference) \
            if reference is not None else None
        records.append(HalfStep(kind=kind, pose_hash=pose_hash(new),
                                z_reference=z,
                                seconds=time.perf_counter() - t0))
        return vol, new

    kinds = ("ML", "ME") if cfg.strategy == "EMPM" else ("ML",)
    for phase in range(2):
        for it in range(cfg.iterations):
            label = f"phase {phase + 1}, iteration {it + 1}"
            for kind in kinds:
                volume, poses = half_step(kind, basis, poses,
                                          f"{label} ({kind})")
        if phase == 0:
            if cfg.iterations == 0:
                data = PosedDataset(images=tuple(images), poses=tuple(poses),
                                    ctfs=tuple(ctfs))
                volume = _reconstruct(data, cfg.backend, "random init",
                                      l_cap=cfg.l_cap)
            mags = np.array([np.hypot(*p.delta) for p in poses])
            sigma_delta = float(np.sqrt(np.mean(mags**2) / 2.0))
            basis = select_modes(
                estimated_kernel(volume, sigma_delta, ctf_cols.T),
                cfg.eps_tol, source="estimated")

    if cfg.strategy == "EMPM" and cfg.iterations > 0:
        # finish on a likelihood alignment: the entropy step is an
        # exploration device, not a pose estimate worth polishing
        volume, poses = half_step("ML", basis, poses, "final alignment")
    data = PosedDataset(images=tuple(images), poses=tuple(poses),
                        ctfs=tuple(ctfs))
    final = lsq_reconstruct(data, l_cap=cfg.l_cap) if cfg.iterations > 0 \
        else _reconstruct(data, cfg.backend, "random init", l_cap=cfg.l_cap)
    if not np.any(final.coeffs):
        raise RuntimeError("degenerate all-zero final reconstruction")
    return final, poses, RunHistory(records=tuple(records))


def _full_basis(R: int):
    return select_modes(KernelMatrix(C=np.eye(R)), eps_tol=0.5)


@dataclass(frozen=True)
class OracleResult:
    volume: VolumeSH
    poses: list[Pose]
    z_trace: list[float] = field(default_factory=list)


def _aligned_poses(images, poses, tpl, disp, delta_max) -> list[Pose]:
    table = correlate(_shift_images(images, poses), tpl, disp)
    best = [int(t) for t in np.argmax(table.Z, axis=0)]
    new = []
    for j, t in enumerate(best):
        tau = EulerAngles(float(table.alphas[t]), float(table.betas[t]),
                          float(table.gamma[t, j]))
        new.append(Pose(tau=tau, delta=tuple(table.delta[t, j])))
    return _accumulate_deltas(new, poses, delta_max)


def oracle_align(images: list[PolarImage], ctfs: list[CTFParams],
                 truth: VolumeSH, delta_local: float = 0.03,
                 delta_max: float = 0.25, tol: float = 1e-3,
                 max_iters: int = 8,
                 direction_cap: int | None = None,
                 l_cap: int | None = None) -> OracleResult:
    """Iterated best-match alignment against a fixed known volume.

    Repeats {align to truth templates; least-squares reconstruct} until the
    reconstruction's correlation to truth plateaus (|dZ| < tol), capped at
    max_iters rounds.
    """
    grid = images[0].grid
    fact = ctf_svd(_ctf_columns(ctfs, grid.radial), eps_tol=1e-8)
    ts = generate_templates(truth, grid, direction_cap=direction_cap)
    tpl = project_templates(ts, _full_basis(grid.R), fact)
    disp = displacement_set(delta_local)
    cur = [Pose(tau=EulerAngles(0.0, 0.0, 0.0), delta=(0.0, 0.0))
           for _ in images]
    trace: list[float] = []
    volume = truth
    for _ in range(max_iters):
        cur = _aligned_poses(images, cur, tpl, disp, delta_max)
        data = PosedDataset(images=tuple(images), poses=tuple(cur),
                            ctfs=tuple(ctfs))
        volume = lsq_reconstruct(data, l_cap=l_cap)
        z = volume_correlation(volume, truth)
        if trace and abs(z - trace[-1]) < tol:
            trace.append(z)
            break
        trace.append(z)
    return OracleResult(volume=volume, poses=cur, z_trace=trace)


def oracle_am(images: list[PolarImage], ctfs: list[CTFParams],
              truth: VolumeSH, delta_local: float = 0.03,
              delta_max: float = 0.25, tol: float = 1e-3,
              max_iters: int = 8,
              direction_cap: int | None = None,
              l_cap: int | None = None) -> OracleResult:
    """Alternating refinement seeded by the truth-aligned poses but
    re-aligning against the CURRENT estimate each round."""
    grid = images[0].grid
    fact = ctf_svd(_ctf_columns(ctfs, grid.radial), eps_tol=1e-8)
    basis = _full_basis(grid.R)
    disp = displacement_set(delta_local)
    start = oracle_align(images, ctfs, truth, delta_local=delta_local,
                         delta_max=delta_max, tol=tol, max_iters=max_iters,
                         direction_cap=direction_cap, l_cap=l_cap)
    poses, volume = start.poses, start.volume
    trace: list[float] = []
    for _ in range(max_iters):
        ts = generate_templates(volume, grid, direction_cap=direction_cap)
        tpl = project_templates(ts, basis, fact)
        poses = _aligned_poses(images, poses, tpl, disp, delta_max)
        data = PosedDataset(images=tuple(images), poses=tuple(poses),
                            ctfs=tuple(ctfs))
        volume = lsq_reconstruct(data, l_cap=l_cap)
        z = volume_correlation(volume, truth)
        if trace and abs(z - trace[-1]) < tol:
            trace.append(z)
            break
        trace.append(z)
    return OracleResult(volume=volume, poses=poses, z_trace=trace)


def quality_against_volume(images: list[PolarImage], ctfs: list[CTFParams],
                           volume: VolumeSH, delta_local: float = 0.0,
                           direction_cap: int | None = None) -> np.ndarray:
    """Per-image best correlation against templates of a given volume."""
    grid = images[0].grid
    fact = ctf_svd(_ctf_columns(ctfs, grid.radial), eps_tol=1e-8)
    ts = generate_templates(volume, grid, direction_cap=direction_cap)
    tpl = project_templates(ts, _full_basis(grid.R), fact)
    table = correlate(images, tpl, displacement_set(delta_local))
    return image_quality(table)


def image_quality(table: CorrelationTable) -> np.ndarray:
    """Per-image quality score: the best correlation over all templates."""
    return np.max(table.Z, axis=0)


def octile_keep_indices(quality: np.ndarray, k_exclude: int) -> np.ndarray:
    """Indices kept after dropping the k lowest-quality octiles.

    Octiles are formed by sorting ascending; any remainder after dividing
    into eight goes to the top octile.  Kept indices return in their
    original order.
    """
    q = np.asarray(quality, dtype=float)
    if not (0 <= int(k_exclude) <= 7):
        raise ValueError("k_exclude must lie in [0, 7]")
    n = q.size
    base = n // 8
    order = np.argsort(q, kind="stable")
    dropped = order[: int(k_exclude) * base]
    keep = np.setdiff1d(np.arange(n), dropped)
    return keep


def curate_octiles(images: list, quality: np.ndarray,
                   k_exclude: int) -> list:
    """All images except those in the k lowest-quality octiles."""
    keep = octile_keep_indices(quality, k_exclude)
    return [images[i] for i in keep]
