"""Polar-Fourier image layer.

Pixel images live on [-1,1]^2; their Fourier transforms are evaluated on the
polar quadrature nodes by a (direct-sum) nonuniform DFT.  Per-ring angular
Fourier series ("Bessel coefficients") give O(1) in-plane rotation; frequency
translation is a pointwise phase.
"""

from dataclasses import dataclass

import numpy as np

from .grids import PolarGrid


@dataclass(frozen=True)
class PixelImage:
    """N x N real samples on [-1,1]^2; pixel centers at -1 + dx(n + 1/2)."""

    values: np.ndarray

    def __post_init__(self):
        v = self.values
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("pixel image must be square")
        if not np.all(np.isfinite(v)):
            raise ValueError("pixel image must be finite")

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def dx(self) -> float:
        return 2.0 / self.N

    def centers(self) -> np.ndarray:
        return -1.0 + self.dx * (np.arange(self.N) + 0.5)


@dataclass(frozen=True)
class PolarImage:
    """Fourier transform values on polar nodes, shape [R, Q]."""

    grid: PolarGrid
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (self.grid.R, self.grid.Q):
            raise ValueError("polar values must have shape [R, Q]")


@dataclass(frozen=True)
class BesselImage:
    """Angular Fourier coefficients per ring, FFT order, shape [R, Q]."""

    grid: PolarGrid
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.shape != (self.grid.R, self.grid.Q):
            raise ValueError("bessel coeffs must have shape [R, Q]")


def image_to_polar(img: PixelImage, grid: PolarGrid) -> PolarImage:
    """Nonuniform DFT of a pixel image onto the polar nodes.

    A^(k) = dx^2 sum_n A_n exp(-i k . x_n), exact direct sum (factored along
    the two axes, so cost is nodes x N^2 via two thin matmuls).
    """
    if grid.K > img.N * np.pi / 2.0:
        raise ValueError("bandlimit exceeds the pixel Nyquist frequency")
    x = img.centers()
    k1, k2 = grid.node_xy()
    e1 = np.exp(-1j * k1.reshape(-1, 1) * x[None, :])   # [M, N]
    e2 = np.exp(-1j * k2.reshape(-1, 1) * x[None, :])
    vals = np.einsum("mi,ij,mj->m", e1, img.values, e2, optimize=True)
    vals = (img.dx ** 2) * vals.reshape(grid.R, grid.Q)
    return PolarImage(grid=grid, values=vals)


def polar_to_pixel(p: PolarImage, N: int) -> PixelImage:
    """Inverse transform onto an N x N pixel grid (band-limited synthesis).

    A(x) = (2pi)^-2 sum_nodes w_r dpsi A^(k) exp(+i k . x).
    """
    img_tmp = PixelImage(values=np.zeros((N, N)))
    x = img_tmp.centers()
    k1, k2 = p.grid.node_xy()
    w = p.grid.radial.weights2d[:, None] * p.grid.dpsi
    vals = (w * p.values).reshape(-1)
    e1 = np.exp(1j * x[:, None] * k1.reshape(-1)[None, :])  # [N, M]
    e2 = np.exp(1j * x[:, None] * k2.reshape(-1)[None, :])
    out = np.einsum("im,m,jm->ij", e1, vals, e2, optimize=True)
    return PixelImage(values=np.real(out) / (2.0 * np.pi) ** 2)


def polar_to_bessel(p: PolarImage) -> BesselImage:
    """Per-ring angular Fourier series, b(r,q) = dpsi sum_q' p e^{-iq psi}."""
    return BesselImage(grid=p.grid,
                       coeffs=np.fft.fft(p.values, axis=1) * p.grid.dpsi)


def bessel_to_polar(b: BesselImage) -> PolarImage:
    return PolarImage(grid=b.grid,
                      values=np.fft.ifft(b.coeffs, axis=1) / b.grid.dpsi)


def rotate_bessel(b: BesselImage, gamma: float) -> BesselImage:
    """In-plane rotation by gamma: coefficient q picks up e^{-i q gamma}."""
    phase = np.exp(-1j * b.grid.q_values * gamma)
    return BesselImage(grid=b.grid, coeffs=b.coeffs * phase[None, :])


def translation_phase(grid: PolarGrid, delta) -> np.ndarray:
    """exp(-i delta . k) at every node, shape [R, Q]."""
    k1, k2 = grid.node_xy()
    return np.exp(-1j * (delta[0] * k1 + delta[1] * k2))


def translate_polar(p: PolarImage, delta) -> PolarImage:
    """Translate by delta (image content moves by +delta in real space)."""
    return PolarImage(grid=p.grid, values=p.values * translation_phase(p.grid, delta))


def inner_product(a: PolarImage, b: PolarImage) -> complex:
    """Band-limited frequency-domain inner product sum a^ b w_r dpsi."""
    if a.grid is not b.grid and a.grid != b.grid:
        raise ValueError("inner_product requires a shared grid")
    w = a.grid.radial.weights2d
    return complex(np.sum(np.conj(a.values) * b.values * w[:, None]) * a.grid.dpsi)


def norm(a: PolarImage) -> float:
    return float(np.sqrt(max(inner_product(a, a).real, 0.0)))
