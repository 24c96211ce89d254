"""Spherical harmonics: tables, shell transforms, Wigner-d matrices.

Conventions: orthonormal complex spherical harmonics with the Condon-Shortley
phase, Y_l^m(theta, phi) = Ptilde_l^m(cos theta) e^{i m phi}, where Ptilde is
the fully normalized associated Legendre function.  Coefficients are stored in
a flat triangular layout with index l*l + l + m for l = 0..L, m = -l..l.
"""

import numpy as np
from scipy.special import eval_jacobi, gammaln

from .grids import SphereGrid


def n_coeffs(L: int) -> int:
    return (L + 1) ** 2


def flat_index(l, m):
    return l * l + l + m


def legendre_table(L: int, x: np.ndarray) -> np.ndarray:
    """Normalized associated Legendre values, shape [len(x), (L+1)^2].

    Column l*l+l+m holds Ptilde_l^m(x) (Condon-Shortley included); for m < 0
    the symmetry Ptilde_l^{-m} = (-1)^m Ptilde_l^m is applied.
    """
    x = np.asarray(x, dtype=float)
    s = np.sqrt(np.maximum(0.0, 1.0 - x * x))
    npt = x.size
    out = np.zeros((npt, n_coeffs(L)))
    pmm = np.full(npt, np.sqrt(1.0 / (4.0 * np.pi)))
    for m in range(L + 1):
        if m > 0:
            pmm = -np.sqrt((2.0 * m + 1.0) / (2.0 * m)) * s * pmm
        out[:, flat_index(m, m)] = pmm
        if m < L:
            prev2, prev1 = np.zeros(npt), pmm
            p = np.sqrt(2.0 * m + 3.0) * x * pmm
            out[:, flat_index(m + 1, m)] = p
            prev2, prev1 = pmm, p
            for l in range(m + 2, L + 1):
                a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
                b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
                p = a * (x * prev1 - b * prev2)
                out[:, flat_index(l, m)] = p
                prev2, prev1 = prev1, p
        if m > 0:
            sign = (-1.0) ** m
            for l in range(m, L + 1):
                out[:, flat_index(l, -m)] = sign * out[:, flat_index(l, m)]
    return out


def eval_sh(coeffs: np.ndarray, L: int, theta: np.ndarray,
            phi: np.ndarray, chunk: int = 16384) -> np.ndarray:
    """Evaluate sum_{l,m} c_{lm} Y_l^m at arbitrary directions.

    coeffs: [..., (L+1)^2]; theta/phi: flat arrays of equal length.
    Returns [..., len(theta)] complex.
    """
    theta = np.asarray(theta, float).ravel()
    phi = np.asarray(phi, float).ravel()
    lead = coeffs.shape[:-1]
    out = np.empty(lead + (theta.size,), dtype=complex)
    ls, ms = lm_arrays(L)
    for i0 in range(0, theta.size, chunk):
        sl = slice(i0, min(i0 + chunk, theta.size))
        tab = legendre_table(L, np.cos(theta[sl]))
        basis = tab * np.exp(1j * np.outer(phi[sl], ms))
        out[..., sl] = coeffs @ basis.T
    return out


def lm_arrays(L: int) -> tuple[np.ndarray, np.ndarray]:
    """(l, m) value per flat coefficient index."""
    ls = np.concatenate([np.full(2 * l + 1, l) for l in range(L + 1)])
    ms = np.concatenate([np.arange(-l, l + 1) for l in range(L + 1)])
    return ls, ms


class ShellTransform:
    """Forward/inverse spherical-harmonic transform on one SphereGrid.

    Separable: FFT over the azimuth, dense normalized-Legendre contraction
    over the polar nodes per order m.
    """

    def __init__(self, grid: SphereGrid):
        self.grid = grid
        L = grid.L
        self.L = L
        if grid.n_theta < L + 1:
            raise ValueError("grid under-resolves the requested degree")
        self.ptab = legendre_table(L, np.cos(grid.theta))   # [n_theta, ncoef]
        self.wphi = 2.0 * np.pi / grid.n_phi
        # FFT bin of each order m (n_phi >= 2L+2 so all |m| <= L distinct)
        self.ls, self.ms = lm_arrays(L)
        self.mbins = np.mod(self.ms, grid.n_phi)
        self._bin_cols = [np.flatnonzero(self.mbins == b)
                          for b in range(grid.n_phi)]

    def forward(self, values: np.ndarray) -> np.ndarray:
        """[..., n_theta, n_phi] shell samples -> [..., (L+1)^2] coefficients."""
        g = np.fft.fft(values, axis=-1) * self.wphi        # sum e^{-im phi}
        gm = g[..., :, self.mbins]                         # [..., n_theta, ncoef]
        wt = self.grid.wtheta[:, None]
        return np.sum(gm * (wt * self.ptab), axis=-2)

    def inverse(self, coeffs: np.ndarray) -> np.ndarray:
        """[..., (L+1)^2] coefficients -> [..., n_theta, n_phi] samples."""
        lead = coeffs.shape[:-1]
        nth, nph = self.grid.n_theta, self.grid.n_phi
        gm = coeffs[..., None, :] * self.ptab              # [..., n_theta, ncoef]
        spec = np.zeros(lead + (nth, nph), dtype=complex)
        for b, cols in enumerate(self._bin_cols):
            if cols.size:
                spec[..., b] = np.sum(gm[..., cols], axis=-1)
        return np.fft.ifft(spec, axis=-1) * nph


_SHELL_CACHE: dict[int, ShellTransform] = {}


def shell_transform(grid: SphereGrid) -> ShellTransform:
    got = _SHELL_CACHE.get(grid.L)
    if got is None:
        got = ShellTransform(grid)
        _SHELL_CACHE[grid.L] = got
    return got


def wigner_d(l: int, beta: float) -> np.ndarray:
    """Wigner small-d matrix d^l_{m1,m2}(beta) = <l m1|e^{-i beta Jy}|l m2>.

    Indexed [m1 + l, m2 + l].  Stable Jacobi-polynomial evaluation.
    """
    m = np.arange(-l, l + 1)
    m1 = m[:, None]
    m2 = m[None, :]
    mu = np.abs(m1 - m2)
    nu = np.abs(m1 + m2)
    s = l - (mu + nu) // 2
    xi = np.where(m2 >= m1, 1.0, (-1.0) ** (m2 - m1))
    logfac = 0.5 * (gammaln(s + 1.0) + gammaln(s + mu + nu + 1.0)
                    - gammaln(s + mu + 1.0) - gammaln(s + nu + 1.0))
    half = 0.5 * beta
    sinh, cosh = np.sin(half), np.cos(half)
    # guard log(0): handled via powers, not logs
    jac = eval_jacobi(s.astype(float), mu.astype(float), nu.astype(float),
                      np.cos(beta))
    return xi * np.exp(logfac) * (sinh ** mu) * (cosh ** nu) * jac


def wigner_d_stack(L: int, beta: float) -> list[np.ndarray]:
    """d^l for l = 0..L at one angle."""
    return [wigner_d(l, beta) for l in range(L + 1)]
