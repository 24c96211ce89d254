"""Principal radial modes: discriminability kernels, basis selection,
CTF low-rank factorization, and projection of images/volumes.

The kernel C scores radial combination vectors u by how well the compressed
rings u^T A separate differently posed projections; its top eigenvectors are
the principal modes.  Images are rescaled by sqrt(w_r dpsi) before projection
so white noise stays white in the compressed representation.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ive

from .grids import PolarGrid
from .polar import BesselImage, PolarImage, bessel_to_polar
from .volume import VolumeSH


@dataclass(frozen=True)
class KernelMatrix:
    C: np.ndarray  # [R, R], Hermitian

    def __post_init__(self):
        if not np.allclose(self.C, self.C.conj().T, atol=1e-10):
            raise ValueError("kernel must be Hermitian")


@dataclass(frozen=True)
class PrincipalBasis:
    U: np.ndarray           # [R, H] orthonormal columns
    eigenvalues: np.ndarray  # descending, length H
    source: str             # "empirical" | "estimated"

    @property
    def H(self) -> int:
        return self.U.shape[1]


@dataclass(frozen=True)
class CTFFactorization:
    """Truncated SVD of the [R x N_A] CTF value array."""

    u: np.ndarray      # [R, H']
    s: np.ndarray      # [H'] descending
    v: np.ndarray      # [N_A, H']

    @property
    def rank(self) -> int:
        return self.s.size


def _symmetrize(C: np.ndarray) -> np.ndarray:
    return (C + C.conj().T) / 2.0


def empirical_kernel(images: list[BesselImage]) -> KernelMatrix:
    """Mode-selection kernel estimated from the data themselves."""
    if len(images) < 1:
        raise ValueError("need at least one image")
    grid = images[0].grid
    w = grid.radial.weights2d
    n = len(images)
    stack = np.stack([b.coeffs for b in images])       # [n, R, Q]
    second = np.einsum("jrq,jsq->rs", np.conj(stack), stack) / n
    mean0 = np.mean(stack[:, :, 0], axis=0)            # q = 0 column
    C = np.sqrt(np.outer(w, w)) * (second - np.outer(np.conj(mean0), mean0))
    return KernelMatrix(C=_symmetrize(C))


def translation_factors(k: np.ndarray, kp: np.ndarray | None,
                        sigma_delta: float):
    """E+ (pairwise) and E- (per node) displacement attenuation factors.

    E+(k,k') = exp(-sigma^2 (k^2 + k'^2)/2) exp(k k' sigma^2);
    E-(k) = kt sqrt(pi/2) e^{-kt^2} (I_{-1/2}(kt^2) - I_{+1/2}(kt^2)),
    kt = k sigma/2, evaluated with scaled Bessel functions; identical to
    exp(-sigma^2 k^2/2), which is used below the small-argument cutoff.
    """
    if kp is None:
        kp = k
    s2 = sigma_delta * sigma_delta
    eplus = np.exp(-s2 * (k[:, None] ** 2 + kp[None, :] ** 2) / 2.0) \
        * np.exp(s2 * np.outer(k, kp))
    kt = k * sigma_delta / 2.0
    z = kt * kt
    with np.errstate(invalid="ignore"):
        bessel = kt * np.sqrt(np.pi / 2.0) * (ive(-0.5, z) - ive(0.5, z))
    eminus = np.where(z > 1e-12, bessel, np.exp(-2.0 * z))
    return eplus, eminus


def estimated_kernel(v: VolumeSH, sigma_delta: float,
                     ctfs_on_nodes: np.ndarray) -> KernelMatrix:
    """Kernel predicted from a volume estimate and the CTF population.

    For noiseless images with uniform orientations, Gaussian displacements of
    std sigma_delta, and a single CTF, this is the exact expectation of the
    empirical kernel.  With several CTFs the mean CTF enters the weights, an
    approximation.  ctfs_on_nodes: [n_ctf, R] CTF values at the radial nodes.
    """
    if sigma_delta < 0:
        raise ValueError("displacement std must be nonnegative")
    radial = v.radial
    k = radial.nodes
    mean_ctf = np.mean(np.atleast_2d(ctfs_on_nodes), axis=0)
    sqrtW = np.sqrt(radial.weights2d) * mean_ctf
    eplus, eminus = translation_factors(k, None, sigma_delta)
    gram = v.coeffs @ v.coeffs.conj().T           # sum_lm F(k)F(k')^dagger
    dc = v.coeffs[:, 0]
    C = np.pi * np.outer(sqrtW, sqrtW) * (gram.conj() * eplus
                                          - np.outer(np.conj(dc) * eminus,
                                                     dc * eminus))
    return KernelMatrix(C=_symmetrize(C))


def select_modes(C: KernelMatrix, eps_tol: float,
                 source: str = "empirical") -> PrincipalBasis:
    """Top eigenvectors with eigenvalues >= eps_tol times the largest."""
    H_full = C.C.shape[0]
    M = C.C
    if np.max(np.abs(M.imag)) < 1e-8 * max(np.max(np.abs(M.real)), 1e-300):
        M = M.real
    lam, vec = np.linalg.eigh(M)
    lam, vec = lam[::-1], vec[:, ::-1]
    if lam[0] <= 0.0:
        return PrincipalBasis(U=np.zeros((H_full, 0)),
                              eigenvalues=np.zeros(0), source=source)
    keep = lam >= eps_tol * lam[0]
    H = int(np.max(np.nonzero(keep)[0])) + 1 if np.any(keep) else 0
    U = vec[:, :H]
    # deterministic sign: largest-magnitude entry of each column positive
    for h in range(H):
        i = int(np.argmax(np.abs(U[:, h])))
        if np.real(U[i, h]) < 0:
            U[:, h] = -U[:, h]
    return PrincipalBasis(U=np.ascontiguousarray(np.real_if_close(U)),
                          eigenvalues=lam[:H], source=source)


def ctf_svd(ctf_values: np.ndarray, eps_tol: float) -> CTFFactorization:
    """Smallest-rank truncated SVD meeting the relative Frobenius tolerance."""
    A = np.atleast_2d(np.asarray(ctf_values, dtype=float))
    if A.size == 0:
        raise ValueError("empty CTF array")
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    total = np.sqrt(np.sum(s * s))
    if total == 0.0:
        return CTFFactorization(u=u[:, :1], s=s[:1], v=vt[:1].T)
    rank = s.size
    for h in range(1, s.size + 1):
        # ||A - rank-h approx||_F relative to ||A||_F
        if np.sqrt(np.sum(s[h:] ** 2)) <= eps_tol * total:
            rank = h
            break
    return CTFFactorization(u=u[:, :rank], s=s[:rank], v=vt[:rank].T)


@dataclass(frozen=True)
class PrincipalImage:
    """Rows are compressed rings [u_h^T A](psi), shape [H, Q] (angle domain)."""

    values: np.ndarray

    @property
    def H(self) -> int:
        return self.values.shape[0]


def image_scaling(grid: PolarGrid) -> np.ndarray:
    return np.sqrt(grid.radial.weights2d * grid.dpsi)


def project_image(basis: PrincipalBasis, img: PolarImage | BesselImage
                  ) -> PrincipalImage:
    """Compress rings: row h = sum_r u_h(r) sqrt(w_r dpsi) value(k_r, .)."""
    if isinstance(img, BesselImage):
        img = bessel_to_polar(img)
    grid = img.grid
    if basis.U.shape[0] != grid.R:
        raise ValueError("basis length does not match the radial grid")
    scaled = img.values * image_scaling(grid)[:, None]
    return PrincipalImage(values=basis.U.T @ scaled)


def project_volume(basis: PrincipalBasis, v: VolumeSH) -> np.ndarray:
    """Principal volume shells [H, ncoef]: sqrt(w_r)-scaled radial projection."""
    if basis.U.shape[0] != v.radial.R:
        raise ValueError("basis length does not match the radial grid")
    scaled = v.coeffs * np.sqrt(v.radial.weights2d)[:, None]
    return basis.U.T @ scaled
