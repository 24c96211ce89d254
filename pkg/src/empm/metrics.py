"""Volume comparison metrics and real-space helpers.

Rotation-optimal correlation evaluates <R(tau) a, b> for all tau on a grid
in closed form: per degree, the Wigner-d contraction over beta plus a 2D FFT
over (alpha, gamma), followed by coordinate-descent refinement.  Real-space
operations (support mask, centroid) work shell-by-shell through the
spherical-Bessel radial transform, never touching a 3D grid.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import roots_legendre, spherical_jn

from .grids import sphere_grid
from .sph import lm_arrays, n_coeffs, shell_transform, wigner_d_stack
from .volume import EulerAngles, VolumeSH, empty_coeffs, enforce_caps, rotate_volume

ANGLE_TOL = 1e-3


def _inner(a: VolumeSH, b: VolumeSH) -> complex:
    w = a.radial.weights3d[:, None]
    return complex(np.sum(w * np.conj(a.coeffs) * b.coeffs))


def _corr_at(a: VolumeSH, b: VolumeSH, tau: EulerAngles,
             denom: float) -> float:
    return float(np.real(_inner(rotate_volume(a, tau), b))) / denom


def _grid_scores(a: VolumeSH, b: VolumeSH, betas: np.ndarray,
                 n_ang: int) -> np.ndarray:
    """Re<R(tau) a, b> on the (beta, alpha, gamma) grid, shape [nb, n, n]."""
    L = a.Lmax
    w = a.radial.weights3d[:, None]
    # C_l[m1, m2] = sum_r w3 conj(a_{l,m2}) b_{l,m1}
    blocks = [np.einsum("rm,rn->mn", w * b.coeffs[:, l * l:(l + 1) ** 2],
                        np.conj(a.coeffs[:, l * l:(l + 1) ** 2]))
              for l in range(L + 1)]
    m = np.arange(-L, L + 1)
    bins = np.mod(m, n_ang)
    out = np.empty((betas.size, n_ang, n_ang))
    for i, beta in enumerate(betas):
        dst = wigner_d_stack(L, float(beta))
        M = np.zeros((2 * L + 1, 2 * L + 1), dtype=complex)
        for l in range(L + 1):
            sl = slice(L - l, L + l + 1)
            M[sl, sl] += dst[l] * blocks[l]
        spec = np.zeros((n_ang, n_ang), dtype=complex)
        np.add.at(spec, (bins[:, None], bins[None, :]), M)
        out[i] = np.real(np.fft.ifft2(spec)) * n_ang * n_ang
    return out


def optimal_rotation(a: VolumeSH, b: VolumeSH
                     ) -> tuple[EulerAngles, float]:
    """Rotation maximizing the normalized correlation, and its value."""
    if a.radial != b.radial:
        raise ValueError("volumes must share the radial grid")
    denom = float(np.sqrt(a.norm2() * b.norm2()))
    if denom == 0.0:
        return EulerAngles(0.0, 0.0, 0.0), 0.0
    L = a.Lmax
    n_ang = 2 * (L + 1)
    betas = np.linspace(0.0, np.pi, L + 2)
    scores = _grid_scores(a, b, betas, n_ang)
    ib, ia, ig = np.unravel_index(np.argmax(scores), scores.shape)
    dang = 2.0 * np.pi / n_ang
    tau = [ia * dang, float(betas[ib]), ig * dang]
    span = [dang, betas[1] - betas[0], dang]
    for _ in range(3):  # coordinate-descent sweeps
        for c in range(3):
            def f(x, c=c):
                t = tau.copy()
                t[c] = x
                return -_corr_at(a, b, EulerAngles(*t), denom)
            lo, hi = tau[c] - span[c], tau[c] + span[c]
            if c == 1:
                lo, hi = max(lo, 0.0), min(hi, np.pi)
            res = minimize_scalar(f, bounds=(lo, hi), method="bounded",
                                  options={"xatol": ANGLE_TOL})
            if -res.fun > _corr_at(a, b, EulerAngles(*tau), denom):
                tau[c] = float(res.x)
    best = EulerAngles(*tau)
    return best, _corr_at(a, b, best, denom)


def volume_correlation(a: VolumeSH, b: VolumeSH) -> float:
    """Max over rotations of <R(tau) a, b> / (||a|| ||b||)."""
    return optimal_rotation(a, b)[1]


def fsc(a: VolumeSH, b: VolumeSH) -> np.ndarray:
    """Per-shell correlation of pre-aligned volumes; NaN on zero shells."""
    if a.radial != b.radial:
        raise ValueError("volumes must share the radial grid")
    num = np.real(np.sum(np.conj(a.coeffs) * b.coeffs, axis=1))
    na = np.sqrt(np.sum(np.abs(a.coeffs) ** 2, axis=1))
    nb = np.sqrt(np.sum(np.abs(b.coeffs) ** 2, axis=1))
    out = np.full(a.radial.R, np.nan)
    ok = (na > 0) & (nb > 0)
    out[ok] = num[ok] / (na[ok] * nb[ok])
    return out


@dataclass(frozen=True)
class RadialGrid:
    """Gauss-Legendre quadrature on [0, rho_max] for real-space radii."""

    rho: np.ndarray
    weights: np.ndarray


def radial_grid(rho_max: float = 1.0, n: int = 256) -> RadialGrid:
    """Real-space radii quadrature; content lives in the unit ball, and the
    sparse radial frequency quadrature is only accurate for k*rho modest, so
    the default range stops at 1."""
    x, w = roots_legendre(n)
    return RadialGrid(rho=(x + 1.0) * rho_max / 2.0,
                      weights=w * rho_max / 2.0)


def _jl_tables(L: int, x: np.ndarray) -> np.ndarray:
    """spherical j_l for l = 0..L, shape [L+1, *x.shape]."""
    return np.stack([spherical_jn(l, x) for l in range(L + 1)])


def real_space_shells(v: VolumeSH, rg: RadialGrid) -> np.ndarray:
    """Real-space SH coefficients b_lm(rho), shape [n_rho, ncoef].

    b_lm(rho) = (4 pi i^l / (2 pi)^3) sum_r w3_r j_l(k_r rho) c_lm(k_r).
    """
    L = v.Lmax
    J = _jl_tables(L, np.outer(rg.rho, v.radial.nodes))   # [L+1, n_rho, R]
    wc = v.radial.weights3d[:, None] * v.coeffs
    out = np.empty((rg.rho.size, v.coeffs.shape[1]), dtype=complex)
    for l in range(L + 1):
        fac = 4.0 * np.pi * (1j ** l) / (2.0 * np.pi) ** 3
        out[:, l * l:(l + 1) ** 2] = fac * (J[l] @ wc[:, l * l:(l + 1) ** 2])
    return out


def shells_to_volume(b: np.ndarray, rg: RadialGrid, radial) -> VolumeSH:
    """Inverse of real_space_shells:
    c_lm(k) = 4 pi (-i)^l int j_l(k rho) b_lm(rho) rho^2 drho."""
    caps_coeffs = empty_coeffs(radial)
    L = int(round(np.sqrt(caps_coeffs.shape[1]))) - 1
    J = _jl_tables(L, np.outer(radial.nodes, rg.rho))     # [L+1, R, n_rho]
    wr = rg.weights * rg.rho ** 2
    for l in range(L + 1):
        fac = 4.0 * np.pi * ((-1j) ** l)
        caps_coeffs[:, l * l:(l + 1) ** 2] = \
            fac * (J[l] @ (wr[:, None] * b[:, l * l:(l + 1) ** 2]))
    return VolumeSH(radial=radial,
                    coeffs=enforce_caps(radial, caps_coeffs))


def radial_mass(v: VolumeSH, rg: RadialGrid) -> np.ndarray:
    """Cumulative real-space intensity mass within each quadrature radius."""
    b = real_space_shells(v, rg)
    density = rg.rho ** 2 * np.sum(np.abs(b) ** 2, axis=1)
    return np.cumsum(rg.weights * density)


def mask_radius(v: VolumeSH, fraction: float = 0.99,
                rg: RadialGrid | None = None) -> float:
    """Smallest quadrature radius containing the given intensity fraction."""
    rg = rg or radial_grid()
    mass = radial_mass(v, rg)
    if mass[-1] == 0.0:
        return float(rg.rho[-1])
    i = int(np.searchsorted(mass, fraction * mass[-1]))
    return float(rg.rho[min(i, rg.rho.size - 1)])


def apply_ball_mask(v: VolumeSH, radius: float,
                    rg: RadialGrid | None = None) -> VolumeSH:
    """Real-space sharp spherical mask.

    Implemented as v minus the transform of the content OUTSIDE the ball, so
    a ball covering the whole support returns v exactly (the discrete radial
    transform pair is only quadrature-accurate, and the outside content
    vanishes in that case while a direct round trip would not).
    """
    rg = rg or radial_grid()
    b = real_space_shells(v, rg)
    b[rg.rho <= radius] = 0.0
    outside = shells_to_volume(b, rg, v.radial)
    return VolumeSH(radial=v.radial, coeffs=v.coeffs - outside.coeffs)


def masked_volume_correlation(a: VolumeSH, b: VolumeSH,
                              radius: float | None = None) -> float:
    """Rotation-optimal correlation after masking `a` to a real-space ball
    (radius defaults to the 99% intensity-mass radius of `b`)."""
    if radius is None:
        radius = mask_radius(b)
    return volume_correlation(apply_ball_mask(a, radius), b)


def intensity_centroid(v: VolumeSH, rg: RadialGrid | None = None
                       ) -> np.ndarray:
    """Real-space centroid of |f|^2, computed shell-by-shell."""
    rg = rg or radial_grid()
    b = real_space_shells(v, rg)
    g = sphere_grid(v.Lmax)
    st = shell_transform(g)
    w = g.weights
    d = g.directions()
    num = np.zeros(3)
    den = 0.0
    for i in range(rg.rho.size):
        vals = np.abs(st.inverse(b[i])) ** 2
        shell_w = rg.weights[i] * rg.rho[i] ** 2
        num += shell_w * rg.rho[i] * np.einsum("tp,tpc->c", w * vals, d)
        den += shell_w * np.sum(w * vals)
    return num / den if den > 0 else num


def translate_volume(v: VolumeSH, t: np.ndarray) -> VolumeSH:
    """Shift real-space content by -t (multiply shells by e^{+i k.t})."""
    out = empty_coeffs(v.radial)
    for r, k in enumerate(v.radial.nodes):
        L = int(v.caps[r])
        g = sphere_grid(L)
        st = shell_transform(g)
        vals = st.inverse(v.coeffs[r, : n_coeffs(L)])
        phase = np.exp(1j * k * (g.directions() @ t))
        c = st.forward(vals * phase)
        out[r, : c.size] = c
    return VolumeSH(radial=v.radial, coeffs=out)


def center_volume(v: VolumeSH) -> VolumeSH:
    """Move the intensity centroid to the origin."""
    return translate_volume(v, intensity_centroid(v))


def _sh_matrix(L: int, dirs: np.ndarray) -> np.ndarray:
    """[n, (L+1)^2] spherical-harmonic values at unit vectors."""
    from .sph import legendre_table, lm_arrays
    th = np.arccos(np.clip(dirs[:, 2], -1.0, 1.0))
    ph = np.arctan2(dirs[:, 1], dirs[:, 0])
    _, ms = lm_arrays(L)
    return legendre_table(L, np.cos(th)) * np.exp(1j * np.outer(ph, ms))


def volume_to_voxels(v: VolumeSH, n: int,
                     rg: RadialGrid | None = None) -> np.ndarray:
    """Real-space samples on an n^3 grid over [-1, 1]^3, [z, y, x] order."""
    rg = rg or radial_grid()
    b = real_space_shells(v, rg)                    # [n_rho, ncoef]
    centers = -1.0 + (2.0 / n) * (np.arange(n) + 0.5)
    zz, yy, xx = np.meshgrid(centers, centers, centers, indexing="ij")
    pts = np.stack([xx, yy, zz], axis=-1).reshape(-1, 3)
    rho = np.linalg.norm(pts, axis=1)
    inside = rho <= rg.rho[-1]
    out = np.zeros(pts.shape[0])
    if np.any(inside):
        p = pts[inside]
        r = rho[inside]
        safe = np.where(r > 0, r, 1.0)
        dirs = p / safe[:, None]
        dirs[r == 0] = [0.0, 0.0, 1.0]
        L = v.Lmax
        Y = _sh_matrix(L, dirs)
        binterp = np.empty((r.size, b.shape[1]), dtype=complex)
        for c in range(b.shape[1]):
            binterp[:, c] = np.interp(r, rg.rho, b[:, c].real) \
                + 1j * np.interp(r, rg.rho, b[:, c].imag)
        out[inside] = np.real(np.sum(binterp * Y, axis=1))
    return out.reshape(n, n, n)


def voxels_to_volume(data: np.ndarray, radial,
                     rg: RadialGrid | None = None) -> VolumeSH:
    """Inverse of volume_to_voxels at matching resolution: sample the voxel
    grid on radial spheres (trilinear), transform each shell, then apply
    the forward radial transform."""
    from scipy.ndimage import map_coordinates
    from .volume import shell_caps
    rg = rg or radial_grid()
    n = data.shape[0]
    if data.shape != (n, n, n):
        raise ValueError("voxel data must be a cube")
    L = int(shell_caps(radial)[-1])
    g = sphere_grid(L)
    st = shell_transform(g)
    d = g.directions().reshape(-1, 3)
    b = np.empty((rg.rho.size, n_coeffs(L)), dtype=complex)
    for i, rho in enumerate(rg.rho):
        p = d * rho                                   # (x, y, z)
        # voxel centers at -1 + dx (idx + 1/2) -> idx = (x + 1)/dx - 1/2
        idx = (p + 1.0) * (n / 2.0) - 0.5
        coords = np.stack([idx[:, 2], idx[:, 1], idx[:, 0]])  # [z, y, x]
        vals = map_coordinates(data, coords, order=1, mode="nearest")
        b[i] = st.forward(vals.reshape(g.n_theta, g.n_phi))
    return shells_to_volume(b, rg, radial)
