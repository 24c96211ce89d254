"""Image formation: CTF, additive frequency-domain noise, dataset simulation.

Noise is drawn directly at the polar nodes with per-node variance
sigma_hat^2 / (w_r dpsi), sigma_hat^2 = pi^2 sigma^2 / dx^2, which is the
frequency-domain image of white pixel noise at unit scale; rescaling rings by
sqrt(w_r dpsi) therefore whitens them across nodes.
"""

from dataclasses import dataclass, field

import numpy as np

from .grids import PolarGrid
from .polar import PolarImage, translate_polar
from .volume import EulerAngles, VolumeSH, slice_template


@dataclass(frozen=True)
class CTFParams:
    """Weak-phase radial contrast transfer function parameters."""

    defocus: float
    amplitude_contrast: float = 0.1
    envelope: float = 0.0
    micrograph_id: int = 0

    def __post_init__(self):
        if not (0.0 <= self.amplitude_contrast <= 1.0):
            raise ValueError("amplitude contrast must lie in [0, 1]")
        if self.envelope < 0.0:
            raise ValueError("envelope decay must be nonnegative")


def ctf_eval(p: CTFParams, k) -> np.ndarray:
    """-[sqrt(1-a^2) sin(d k^2) + a cos(d k^2)] exp(-e k^2), unit constant."""
    k = np.asarray(k, dtype=float)
    a = p.amplitude_contrast
    arg = p.defocus * k * k
    return -(np.sqrt(1.0 - a * a) * np.sin(arg) + a * np.cos(arg)) \
        * np.exp(-p.envelope * k * k)


UNIT_CTF = CTFParams(defocus=0.0, amplitude_contrast=1.0, envelope=0.0)
# ctf_eval(UNIT_CTF, k) == -1 for all k; sign-flipped flat response.


def flat_ctf() -> CTFParams:
    """CTF identically -1 (flat modulus); useful for CTF-free experiments."""
    return UNIT_CTF


@dataclass(frozen=True)
class NoiseModel:
    """Real-space unit-scale white noise level."""

    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")

    def sigma_hat2(self, dx: float) -> float:
        return np.pi**2 * self.sigma**2 / dx**2


@dataclass(frozen=True)
class Pose:
    tau: EulerAngles
    delta: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class DistributionSpec:
    """Sampling law for poses and CTF assignment."""

    uniform_tau: bool = True
    vmf_concentration: float = 0.0     # used when uniform_tau is False
    delta_sigma: float = 0.0           # 0 -> point mass at zero displacement
    ctfs: tuple[CTFParams, ...] = (UNIT_CTF,)
    ctf_counts: tuple[int, ...] | None = None

    def __post_init__(self):
        if len(self.ctfs) == 0:
            raise ValueError("at least one CTF entry is required")
        if self.ctf_counts is not None and len(self.ctf_counts) != len(self.ctfs):
            raise ValueError("ctf_counts length mismatch")


def noise_std_per_node(noise: NoiseModel, grid: PolarGrid, dx: float) -> np.ndarray:
    """Complex std per node (total var sigma_hat^2/(w_r dpsi)), shape [R]."""
    var = noise.sigma_hat2(dx) / (grid.radial.weights2d * grid.dpsi)
    return np.sqrt(var)


def synthesize_image(v: VolumeSH, pose: Pose, ctf: CTFParams,
                     noise: NoiseModel, grid: PolarGrid, seed,
                     dx: float = 2.0 / 64) -> PolarImage:
    """Noisy CTF-modulated translated central slice at the polar nodes."""
    tpl = slice_template(v, pose.tau, grid)
    cvals = ctf_eval(ctf, grid.radial.nodes)
    signal = PolarImage(grid=grid, values=tpl.values * cvals[:, None])
    signal = translate_polar(signal, pose.delta)
    if noise.sigma == 0.0:
        return signal
    rng = np.random.default_rng(seed)
    std = noise_std_per_node(noise, grid, dx)
    shape = (grid.R, grid.Q)
    eta = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) \
        * (std[:, None] / np.sqrt(2.0))
    return PolarImage(grid=grid, values=signal.values + eta)


def sample_pose(rng: np.random.Generator, dist: DistributionSpec) -> Pose:
    if dist.uniform_tau or dist.vmf_concentration == 0.0:
        beta = np.arccos(rng.uniform(-1.0, 1.0))
    else:
        # concentration about the pole: density prop exp(kappa cos beta)
        kappa = dist.vmf_concentration
        u = rng.uniform()
        cosb = 1.0 + np.log(u + (1 - u) * np.exp(-2 * kappa)) / kappa
        beta = np.arccos(np.clip(cosb, -1.0, 1.0))
    alpha = rng.uniform(0.0, 2.0 * np.pi)
    gamma = rng.uniform(0.0, 2.0 * np.pi)
    if dist.delta_sigma > 0.0:
        delta = tuple(rng.normal(0.0, dist.delta_sigma, 2))
    else:
        delta = (0.0, 0.0)
    return Pose(tau=EulerAngles(alpha, beta, gamma), delta=delta)


def simulate_dataset(v: VolumeSH, n_images: int, dist: DistributionSpec,
                     noise: NoiseModel, grid: PolarGrid, seed,
                     dx: float = 2.0 / 64):
    """Simulate images with ground-truth poses and CTF assignments.

    Per-image RNG streams are spawned from (seed, index) so serial and
    parallel generation agree bit for bit.
    """
    if n_images < 1:
        raise ValueError("need at least one image")
    if dist.ctf_counts is not None:
        ctf_ids = np.repeat(np.arange(len(dist.ctfs)), dist.ctf_counts)
        if ctf_ids.size < n_images:
            raise ValueError("ctf_counts sum below image count")
        ctf_ids = ctf_ids[:n_images]
    else:
        ctf_ids = np.arange(n_images) % len(dist.ctfs)
    images, poses = [], []
    for j in range(n_images):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), j]))
        pose = sample_pose(rng, dist)
        img = synthesize_image(v, pose, dist.ctfs[ctf_ids[j]], noise, grid,
                               np.random.SeedSequence([int(seed), j, 1]),
                               dx=dx)
        images.append(img)
        poses.append(pose)
    return images, poses, ctf_ids
