"""Quadrature grids: radial rules on (0, K), polar image grids, sphere shells.

The frequency domain is the ball of radius K (the bandlimit).  Volumes are
integrated radially with weight k^2 dk (Gauss-Jacobi), images with weight
k dk (moment-matched weights on the same nodes).  Each radial shell carries a
spherical quadrature grid sized to resolve its own harmonic degree cap.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy.special import roots_jacobi, roots_legendre


@dataclass(frozen=True)
class RadialQuadrature:
    """Radial nodes on (0, K) with both k^2 dk and k dk weights."""

    K: float
    R: int
    nodes: np.ndarray      # strictly increasing, in (0, K)
    weights3d: np.ndarray  # integrate f(k) k^2 dk
    weights2d: np.ndarray  # integrate f(k) k dk

    def __eq__(self, other):
        if not isinstance(other, RadialQuadrature):
            return NotImplemented
        return (self.K == other.K and self.R == other.R
                and np.array_equal(self.nodes, other.nodes))

    def __hash__(self):
        return hash((self.K, self.R))


def build_radial_quadrature(K: float, R: int) -> RadialQuadrature:
    """Gauss-Jacobi rule for weight k^2 on (0, K), plus k dk weights.

    The 2D weights reuse the same nodes and solve the moment system
    sum_r p(k_r) w_r = int_0^K p(k) k dk for all polynomials p of degree < R
    (written in a shifted-Legendre basis for conditioning).
    """
    if K <= 0 or R < 1:
        raise ValueError("bandlimit K and node count R must be positive")
    # Jacobi weight (1-x)^0 (1+x)^2 on [-1,1]; map k = K(x+1)/2 so that
    # k^2 dk = (K/2)^3 (1+x)^2 dx.
    x, wj = roots_jacobi(R, 0.0, 2.0)
    nodes = K * (x + 1.0) / 2.0
    weights3d = (K / 2.0) ** 3 * wj

    # Moment matching for k dk in the basis P_i(2k/K - 1), i = 0..R-1.
    # Moments computed exactly with a Gauss-Legendre rule of ample degree.
    ng = R + 2
    xg, wg = roots_legendre(ng)
    kg = K * (xg + 1.0) / 2.0
    # Vandermonde-like matrices of Legendre values at quadrature/model nodes.
    V_nodes = npleg.legvander(2.0 * nodes / K - 1.0, R - 1)   # [R, R]
    V_g = npleg.legvander(xg, R - 1)                          # [ng, R]
    moments = V_g.T @ (wg * kg * (K / 2.0))                   # int P_i(k~) k dk
    weights2d = np.linalg.solve(V_nodes.T, moments)

    if not (np.all(np.diff(nodes) > 0) and nodes[0] > 0 and nodes[-1] < K):
        raise ValueError("radial nodes out of range")
    return RadialQuadrature(K=float(K), R=int(R), nodes=nodes,
                            weights3d=weights3d, weights2d=weights2d)


@dataclass(frozen=True)
class PolarGrid:
    """Polar frequency grid: radial rule x Q equispaced angles."""

    radial: RadialQuadrature
    Q: int

    def __post_init__(self):
        if self.Q % 2 != 0:
            raise ValueError("Q must be even")
        if self.Q < 2 * int(np.ceil(self.radial.K)) + 2:
            raise ValueError("Q too small for the bandlimit")

    @property
    def K(self) -> float:
        return self.radial.K

    @property
    def R(self) -> int:
        return self.radial.R

    @property
    def dpsi(self) -> float:
        return 2.0 * np.pi / self.Q

    @property
    def psi(self) -> np.ndarray:
        return np.arange(self.Q) * self.dpsi

    @property
    def q_values(self) -> np.ndarray:
        """Signed angular orders in FFT storage order, q in [-Q/2, Q/2-1]."""
        q = np.arange(self.Q)
        return np.where(q < self.Q // 2, q, q - self.Q)

    def node_xy(self) -> tuple[np.ndarray, np.ndarray]:
        """Cartesian (k1, k2) coordinates of all nodes, shape [R, Q] each."""
        k = self.radial.nodes[:, None]
        return k * np.cos(self.psi)[None, :], k * np.sin(self.psi)[None, :]


def default_polar_grid(K: float, R: int | None = None,
                       Q: int | None = None) -> PolarGrid:
    """Default sizing: R = ceil(K), Q = 2(ceil(K)+1)."""
    cK = int(np.ceil(K))
    if R is None:
        R = cK
    if Q is None:
        Q = 2 * (cK + 1)
    return PolarGrid(radial=build_radial_quadrature(K, R), Q=Q)


def degree_cap(k: float) -> int:
    """Per-shell spherical-harmonic degree cap L(k) = ceil(k) + 2."""
    return int(np.ceil(k)) + 2


@dataclass(frozen=True)
class SphereGrid:
    """Spherical quadrature for one shell: Gauss-Legendre x uniform azimuth."""

    L: int
    theta: np.ndarray    # polar nodes, length L+1
    wtheta: np.ndarray   # Gauss-Legendre weights in cos(theta)
    phi: np.ndarray      # uniform azimuth, length 2(L+1)

    @property
    def n_theta(self) -> int:
        return self.theta.size

    @property
    def n_phi(self) -> int:
        return self.phi.size

    @property
    def n_nodes(self) -> int:
        return self.n_theta * self.n_phi

    @property
    def weights(self) -> np.ndarray:
        """Surface weights per node, shape [n_theta, n_phi]; sum = 4*pi."""
        wphi = 2.0 * np.pi / self.n_phi
        return np.broadcast_to((self.wtheta * wphi)[:, None],
                               (self.n_theta, self.n_phi))

    def directions(self) -> np.ndarray:
        """Unit vectors of all nodes, shape [n_theta, n_phi, 3]."""
        st, ct = np.sin(self.theta), np.cos(self.theta)
        cp, sp = np.cos(self.phi), np.sin(self.phi)
        out = np.empty((self.n_theta, self.n_phi, 3))
        out[..., 0] = st[:, None] * cp[None, :]
        out[..., 1] = st[:, None] * sp[None, :]
        out[..., 2] = ct[:, None] * np.ones_like(sp)[None, :]
        return out


_SPHERE_CACHE: dict[int, SphereGrid] = {}


def sphere_grid(L: int) -> SphereGrid:
    """Quadrature grid exact for spherical harmonics up to degree L."""
    if L < 0:
        raise ValueError("degree cap must be nonnegative")
    got = _SPHERE_CACHE.get(L)
    if got is not None:
        return got
    x, w = roots_legendre(L + 1)
    theta = np.arccos(x[::-1])         # increasing theta
    wtheta = w[::-1].copy()
    phi = np.arange(2 * (L + 1)) * (2.0 * np.pi / (2 * (L + 1)))
    g = SphereGrid(L=L, theta=theta, wtheta=wtheta, phi=phi)
    _SPHERE_CACHE[L] = g
    return g
