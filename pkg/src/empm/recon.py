"""Volume reconstruction from posed images.

Radial shells decouple: every image ring r constrains only shell r, at the
great-circle directions determined by its pose.  Least squares solves the
per-shell normal equations (grouped by distinct CTF so the angular Gram is
shared); quadrature back propagation replaces the solve by CTF-weighted
local averages over spherical caps.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import cg
from scipy.spatial import cKDTree

from .grids import PolarGrid, sphere_grid
from .imaging import CTFParams, Pose, ctf_eval
from .modes import CTFFactorization, PrincipalBasis, project_volume
from .polar import PolarImage, translation_phase
from .sph import legendre_table, lm_arrays, n_coeffs, shell_transform
from .volume import VolumeSH, empty_coeffs, rot_y, rot_z

TIKHONOV_SCALE = 1e-6
CG_MAX_ITERS = 512


@dataclass(frozen=True)
class PosedDataset:
    images: tuple[PolarImage, ...]
    poses: tuple[Pose, ...]
    ctfs: tuple[CTFParams, ...]   # one per image

    def __post_init__(self):
        if not (len(self.images) == len(self.poses) == len(self.ctfs)):
            raise ValueError("images, poses, and ctfs must align")
        if len(self.images) == 0:
            raise ValueError("dataset must be nonempty")

    @property
    def n(self) -> int:
        return len(self.images)

    @property
    def grid(self) -> PolarGrid:
        return self.images[0].grid


@dataclass(frozen=True)
class PrincipalVolumeSet:
    """CTF-factor-modulated compressed volumes, values[h', h, lm]."""

    basis: PrincipalBasis
    fact: CTFFactorization
    L: int
    values: np.ndarray


def _ring_directions(pose: Pose, grid: PolarGrid) -> np.ndarray:
    """Unit directions sampled by each angular node of the image rings."""
    t = pose.tau
    M = rot_z(t.alpha) @ rot_y(t.beta) @ rot_z(-t.gamma)
    psi = grid.psi
    e = np.stack([np.cos(psi), np.sin(psi), np.zeros_like(psi)], axis=-1)
    return e @ M.T


def _undo_translation(img: PolarImage, pose: Pose) -> np.ndarray:
    return img.values * np.conj(translation_phase(img.grid, pose.delta))


def _sh_design(L: int, dirs: np.ndarray) -> np.ndarray:
    """[n_dirs, (L+1)^2] matrix of Y_lm values at unit vectors."""
    th = np.arccos(np.clip(dirs[:, 2], -1.0, 1.0))
    ph = np.arctan2(dirs[:, 1], dirs[:, 0])
    _, ms = lm_arrays(L)
    return legendre_table(L, np.cos(th)) * np.exp(1j * np.outer(ph, ms))


def _ctf_groups(data: PosedDataset) -> list[tuple[CTFParams, list[int]]]:
    groups: dict[CTFParams, list[int]] = {}
    for j, c in enumerate(data.ctfs):
        groups.setdefault(c, []).append(j)
    return list(groups.items())


def _solve_shell(A: np.ndarray, b: np.ndarray, cg_tol: float,
                 max_iters: int, label: str) -> np.ndarray:
    lam = TIKHONOV_SCALE * max(float(np.mean(np.real(np.diag(A)))), 1e-300)
    Areg = A + lam * np.eye(A.shape[0])
    x, info = cg(Areg, b, rtol=cg_tol, maxiter=max_iters)
    if info > 0:
        res = np.linalg.norm(Areg @ x - b) / max(np.linalg.norm(b), 1e-300)
        warnings.warn(f"CG did not converge for {label}: "
                      f"relative residual {res:.2e} after {info} iterations")
    return x


def lsq_reconstruct(data: PosedDataset, l_cap: int | None = None,
                    cg_tol: float = 1e-10,
                    max_iters: int = CG_MAX_ITERS) -> VolumeSH:
    """Per-shell regularized least squares in SH coefficients."""
    grid = data.grid
    radial = grid.radial
    caps = VolumeSH(radial=radial, coeffs=empty_coeffs(radial)).caps
    if l_cap is not None:
        caps = np.minimum(caps, l_cap)
    Lmax = int(caps.max())
    nodes = radial.nodes

    # one angular Gram and data product per distinct CTF
    nc_max = n_coeffs(Lmax)
    grams, prods, ctf_vals = [], [], []
    for ctf, members in _ctf_groups(data):
        G = np.zeros((nc_max, nc_max), dtype=complex)
        B = np.zeros((nc_max, radial.R), dtype=complex)
        for j in members:
            Y = _sh_design(Lmax, _ring_directions(data.poses[j], grid))
            rhs = _undo_translation(data.images[j], data.poses[j])
            G += Y.conj().T @ Y
            B += Y.conj().T @ rhs.T
        grams.append(G)
        prods.append(B)
        ctf_vals.append(ctf_eval(ctf, nodes))

    out = empty_coeffs(radial)
    for r in range(radial.R):
        nc = n_coeffs(int(caps[r]))
        A = np.zeros((nc, nc), dtype=complex)
        b = np.zeros(nc, dtype=complex)
        for G, B, cv in zip(grams, prods, ctf_vals):
            A += (cv[r] ** 2) * G[:nc, :nc]
            b += cv[r] * B[:nc, r]
        out[r, :nc] = _solve_shell(A, b, cg_tol, max_iters, f"shell {r}")
    return VolumeSH(radial=radial, coeffs=out)


def principal_volumes(v: VolumeSH, basis: PrincipalBasis,
                      fact: CTFFactorization) -> PrincipalVolumeSet:
    """Compress a full volume into per-CTF-factor principal shells."""
    vals = np.stack([
        project_volume(basis, VolumeSH(
            radial=v.radial,
            coeffs=(fact.u[:, hp] * fact.s[hp])[:, None] * v.coeffs))
        for hp in range(fact.rank)])
    return PrincipalVolumeSet(basis=basis, fact=fact, L=v.Lmax, values=vals)


def pm_lsq_reconstruct(data: PosedDataset, basis: PrincipalBasis,
                       fact: CTFFactorization, cg_tol: float = 1e-10,
                       max_iters: int = CG_MAX_ITERS) -> PrincipalVolumeSet:
    """Least squares directly for the compressed volumes.

    When H x H' >= R the compressed unknowns over-parametrize the full ones,
    so the full solve is both cheaper and better posed: delegate and project.
    """
    grid = data.grid
    radial = grid.radial
    R = radial.R
    if basis.H * fact.rank >= R:
        return principal_volumes(lsq_reconstruct(data, cg_tol=cg_tol,
                                                 max_iters=max_iters),
                                 basis, fact)
    if fact.v.shape[0] != data.n:
        raise ValueError("CTF factorization rows must match the image count")
    Lmax = int(VolumeSH(radial=radial, coeffs=empty_coeffs(radial)).caps.max())
    nc = n_coeffs(Lmax)
    Hp = fact.rank
    sqw = np.sqrt(radial.weights2d)
    # equations per (j, psi): sum_hp v'_j(hp) G[hp, h](dir) = Yp[h, psi]
    A = np.zeros((Hp, Hp, nc, nc), dtype=complex)
    b = np.zeros((Hp, basis.H, nc), dtype=complex)
    for j in range(data.n):
        Y = _sh_design(Lmax, _ring_directions(data.poses[j], grid))
        rhs = _undo_translation(data.images[j], data.poses[j])
        Yp = basis.U.T @ (sqw[:, None] * rhs)          # [H, Q]
        G = Y.conj().T @ Y
        vj = fact.v[j]
        A += np.einsum("p,n->pn", vj, vj)[:, :, None, None] * G[None, None]
        b += vj[:, None, None] * np.einsum("qc,hq->hc", np.conj(Y), Yp)[None]
    out = np.zeros((Hp, basis.H, nc), dtype=complex)
    Abig = A.transpose(0, 2, 1, 3).reshape(Hp * nc, Hp * nc)
    for h in range(basis.H):
        x = _solve_shell(Abig, b[:, h].reshape(-1), cg_tol, max_iters,
                         f"principal shell {h}")
        out[:, h] = x.reshape(Hp, nc)
    return PrincipalVolumeSet(basis=basis, fact=fact, L=Lmax, values=out)


def qbp_reconstruct(data: PosedDataset, n_star: int = 32,
                    l_cap: int | None = None) -> VolumeSH:
    """Quadrature back propagation: per sphere node, the CTF-weighted
    average sum(CTF_j * value) / sum(CTF_j^2) over a cap of ~n_star samples.
    """
    grid = data.grid
    radial = grid.radial
    caps = VolumeSH(radial=radial, coeffs=empty_coeffs(radial)).caps
    if l_cap is not None:
        caps = np.minimum(caps, l_cap)
    n_eff = int(np.clip(n_star, 8, 256))

    dirs = np.concatenate([_ring_directions(p, grid) for p in data.poses])
    vals = np.stack([_undo_translation(im, p)
                     for im, p in zip(data.images, data.poses)])  # [N, R, Q]
    ctf_nodes = np.stack([ctf_eval(c, radial.nodes) for c in data.ctfs])
    M = dirs.shape[0]
    owner = np.repeat(np.arange(data.n), grid.Q)

    tree = cKDTree(dirs)
    frac = min(n_eff / M, 1.0)
    radius = 2.0 * np.sqrt(frac)
    neighborhoods: dict[int, list] = {}
    fallbacks: dict[int, np.ndarray] = {}
    for L in sorted(set(int(c) for c in caps)):
        nodes = sphere_grid(L).directions().reshape(-1, 3)
        lists = tree.query_ball_point(nodes, radius)
        empty = [i for i, lst in enumerate(lists) if len(lst) == 0]
        if empty:
            warnings.warn(f"{len(empty)} empty caps at degree {L}; "
                          "falling back to nearest sample")
            _, nearest = tree.query(nodes[empty])
            for i, s in zip(empty, np.atleast_1d(nearest)):
                lists[i] = [int(s)]
        neighborhoods[L] = lists

    out = empty_coeffs(radial)
    for r in range(radial.R):
        L = int(caps[r])
        g = sphere_grid(L)
        lists = neighborhoods[L]
        node_vals = np.empty(len(lists), dtype=complex)
        ring = vals[:, r, :].reshape(-1)           # [M] sample values
        cr = ctf_nodes[:, r][owner]                # [M] sample CTFs
        for i, lst in enumerate(lists):
            idx = np.asarray(lst)
            c = cr[idx]
            denom = np.sum(c * c)
            node_vals[i] = np.sum(c * ring[idx]) / denom if denom > 0 else 0.0
        coeffs = shell_transform(g).forward(
            node_vals.reshape(g.n_theta, g.n_phi))
        out[r, : coeffs.size] = coeffs
    return VolumeSH(radial=radial, coeffs=out)
