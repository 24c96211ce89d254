"""Fourier volumes as spherical-harmonic coefficients per radial shell.

A volume is stored as a dense [R, (Lmax+1)^2] coefficient array with a
per-shell degree cap L(k_r) = ceil(k_r) + 2; entries above a shell's cap are
zero.  Rotations act blockwise through Wigner-D matrices; central slices come
out as Bessel coefficients on a polar grid (Fourier slice theorem).
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .grids import PolarGrid, RadialQuadrature, SphereGrid, degree_cap, sphere_grid
from .polar import BesselImage, PolarImage, bessel_to_polar
from .sph import (eval_sh, flat_index, legendre_table, lm_arrays, n_coeffs,
                  shell_transform, wigner_d_stack)


@dataclass(frozen=True)
class EulerAngles:
    """z-y-z Euler triple; (alpha, beta) is the viewing direction."""

    alpha: float
    beta: float
    gamma: float

    def inverse(self) -> "EulerAngles":
        return EulerAngles(-self.gamma, -self.beta, -self.alpha)

    def matrix(self) -> np.ndarray:
        return rot_z(self.alpha) @ rot_y(self.beta) @ rot_z(self.gamma)


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_y(b: float) -> np.ndarray:
    c, s = np.cos(b), np.sin(b)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def shell_caps(radial: RadialQuadrature) -> np.ndarray:
    return np.array([degree_cap(k) for k in radial.nodes], dtype=int)


@dataclass(frozen=True)
class VolumeSH:
    """Spherical-harmonic Fourier volume on a radial quadrature."""

    radial: RadialQuadrature
    coeffs: np.ndarray  # [R, (Lmax+1)^2], zero above each shell's cap

    def __post_init__(self):
        caps = shell_caps(self.radial)
        if self.coeffs.shape != (self.radial.R, n_coeffs(int(caps[-1]))):
            raise ValueError("coefficient array shape mismatch")

    @property
    def caps(self) -> np.ndarray:
        return shell_caps(self.radial)

    @property
    def Lmax(self) -> int:
        return int(self.caps[-1])

    def norm2(self) -> float:
        """Squared ball norm sum_r w3_r sum_lm |c|^2."""
        return float(np.sum(self.radial.weights3d
                            * np.sum(np.abs(self.coeffs) ** 2, axis=1)))


def empty_coeffs(radial: RadialQuadrature) -> np.ndarray:
    return np.zeros((radial.R, n_coeffs(int(shell_caps(radial)[-1]))),
                    dtype=complex)


def enforce_caps(radial: RadialQuadrature, coeffs: np.ndarray) -> np.ndarray:
    ls, _ = lm_arrays(int(shell_caps(radial)[-1]))
    mask = ls[None, :] <= shell_caps(radial)[:, None]
    return np.where(mask, coeffs, 0.0)


def volume_from_function(fhat, radial: RadialQuadrature) -> VolumeSH:
    """Sample a callable F^(kx, ky, kz) on every shell grid and transform."""
    out = empty_coeffs(radial)
    caps = shell_caps(radial)
    for r, k in enumerate(radial.nodes):
        g = sphere_grid(int(caps[r]))
        d = g.directions() * k
        vals = np.asarray(fhat(d[..., 0], d[..., 1], d[..., 2]),
                          dtype=complex)
        c = shell_transform(g).forward(vals)
        out[r, : c.size] = c
    return VolumeSH(radial=radial, coeffs=out)


def effective_degree(v: VolumeSH) -> int:
    """Highest degree with any nonzero coefficient (Lmax if none are zero).

    Slice and template evaluation loop over degree blocks, so volumes whose
    upper blocks are identically zero (e.g. degree-capped reconstructions)
    are much cheaper when evaluated at their true degree.
    """
    nz = np.nonzero(np.any(v.coeffs != 0.0, axis=0))[0]
    if nz.size == 0:
        return 0
    return int(np.floor(np.sqrt(nz[-1])))


def shell_values(v: VolumeSH, r: int) -> np.ndarray:
    """Samples of shell r on its own SphereGrid."""
    g = sphere_grid(int(v.caps[r]))
    return shell_transform(g).inverse(v.coeffs[r, : n_coeffs(g.L)])


def rotate_volume(v: VolumeSH, tau: EulerAngles) -> VolumeSH:
    """Rotate so the new volume G satisfies G(k) = F(R(tau)^-1 k)."""
    L = v.Lmax
    dstack = wigner_d_stack(L, tau.beta)
    out = np.empty_like(v.coeffs)
    for l in range(L + 1):
        m = np.arange(-l, l + 1)
        D = (np.exp(-1j * m[:, None] * tau.alpha) * dstack[l]
             * np.exp(-1j * m[None, :] * tau.gamma))
        block = v.coeffs[:, l * l: (l + 1) ** 2]
        out[:, l * l: (l + 1) ** 2] = block @ D.T
    return VolumeSH(radial=v.radial, coeffs=out)


@lru_cache(maxsize=512)
def _equator_row(L: int) -> np.ndarray:
    """Ptilde_l^m(0) for the flat (l,m) layout (values of Y on the equator)."""
    return legendre_table(L, np.array([0.0]))[0]


@lru_cache(maxsize=4096)
def _slice_matrices(L: int, beta: float) -> list[np.ndarray]:
    """Per-l matrices A_l[m1, m2] = Ptilde_{l,m1}(0) d^l_{m1,m2}(-beta)."""
    eq = _equator_row(L)
    mats = []
    for l, d in enumerate(wigner_d_stack(L, -beta)):
        p = eq[l * l: (l + 1) ** 2]
        mats.append(p[:, None] * d)
    return mats


def slice_bessel(v: VolumeSH, alpha: float, beta: float,
                 grid: PolarGrid) -> np.ndarray:
    """Bessel coefficients [R, Q] of the central slice at direction (a, b).

    Ring r of the slice samples the volume at k_r Rz(a)Ry(b) e(psi); its
    angular order-q coefficient is 2*pi sum_l Ptilde_{l,q}(0)
    [sum_m2 d^l_{q,m2}(-b) e^{i m2 a} F(r; l, m2)], truncated to the grid's
    representable orders.
    """
    _check_radial(v, grid)
    L = effective_degree(v)
    mats = _slice_matrices(L, beta)
    m_all = np.arange(-L, L + 1)
    phases = np.exp(1j * m_all * alpha)
    acc = np.zeros((grid.R, 2 * L + 1), dtype=complex)  # index m1 + L
    for l in range(L + 1):
        sl = slice(L - l, L + l + 1)
        block = v.coeffs[:, l * l: (l + 1) ** 2] * phases[sl][None, :]
        acc[:, sl] += block @ mats[l].T
    out = np.zeros((grid.R, grid.Q), dtype=complex)
    for qi, q in enumerate(grid.q_values):
        if abs(q) <= L:
            out[:, qi] = 2.0 * np.pi * acc[:, q + L]
    return out


def slice_template(v: VolumeSH, tau: EulerAngles, grid: PolarGrid) -> PolarImage:
    """Central-slice template at pose tau on the polar grid."""
    coeffs = slice_bessel(v, tau.alpha, tau.beta, grid)
    if tau.gamma != 0.0:
        coeffs = coeffs * np.exp(-1j * grid.q_values * tau.gamma)[None, :]
    return bessel_to_polar(BesselImage(grid=grid, coeffs=coeffs))


def _check_radial(v: VolumeSH, grid: PolarGrid):
    if not np.array_equal(v.radial.nodes, grid.radial.nodes):
        raise ValueError("volume and polar grid use different radial nodes")


@dataclass(frozen=True)
class TemplateSet:
    """Central-slice templates over a set of viewing directions (gamma = 0)."""

    grid: PolarGrid
    alphas: np.ndarray   # [T]
    betas: np.ndarray    # [T]
    bessel: np.ndarray   # [T, R, Q] slice Bessel coefficients
    gamma: float = 0.0

    @property
    def T(self) -> int:
        return self.alphas.size

    def polar(self, t: int) -> PolarImage:
        return bessel_to_polar(BesselImage(grid=self.grid,
                                           coeffs=self.bessel[t]))


def template_directions(v: VolumeSH, direction_cap: int | None = None
                        ) -> SphereGrid:
    L = v.Lmax if direction_cap is None else min(v.Lmax, int(direction_cap))
    return sphere_grid(L)


def generate_templates(v: VolumeSH, grid: PolarGrid,
                       direction_cap: int | None = None) -> TemplateSet:
    """Templates for every node of the (optionally capped) direction grid.

    Vectorized per polar row: the azimuthal sweep is a zero-padded FFT over
    the order index of the per-shell matrices M_r[m1, m2].
    """
    _check_radial(v, grid)
    g = template_directions(v, direction_cap)
    L = effective_degree(v)
    R, Q = grid.R, grid.Q
    n_alpha = g.n_phi
    alphas_row = g.phi
    qv = grid.q_values
    keep = np.abs(qv) <= L

    all_alpha, all_beta = [], []
    rows = []
    for beta in g.theta:
        mats = _slice_matrices(L, float(beta))
        acc = np.zeros((R, 2 * L + 1, 2 * L + 1), dtype=complex)  # [r, m1, m2]
        for l in range(L + 1):
            sl = slice(L - l, L + l + 1)
            blk = np.einsum("mn,rn->rmn", mats[l],
                            v.coeffs[:, l * l: (l + 1) ** 2])
            acc[:, sl, sl.start: sl.stop] += blk
        # a(r, m1, alpha) = sum_m2 acc e^{i m2 alpha}; alpha = 2 pi j / n_alpha
        spec = np.zeros((R, 2 * L + 1, n_alpha), dtype=complex)
        bins = np.mod(np.arange(-L, L + 1), n_alpha)
        for i, b in enumerate(bins):
            spec[:, :, b] += acc[:, :, i]
        vals = np.fft.ifft(spec, axis=2) * n_alpha  # [r, m1, alpha]
        out = np.zeros((n_alpha, R, Q), dtype=complex)
        for qi, q in enumerate(qv):
            if keep[qi]:
                out[:, :, qi] = 2.0 * np.pi * vals[:, q + L, :].T
        rows.append(out)
        all_alpha.append(alphas_row)
        all_beta.append(np.full(n_alpha, beta))
    return TemplateSet(grid=grid,
                       alphas=np.concatenate(all_alpha),
                       betas=np.concatenate(all_beta),
                       bessel=np.concatenate(rows, axis=0))


def eval_volume_at(v: VolumeSH, r: int, theta, phi) -> np.ndarray:
    """Evaluate shell r at arbitrary directions."""
    L = int(v.caps[r])
    return eval_sh(v.coeffs[r, : n_coeffs(L)], L, theta, phi)
