"""Image-template alignment in the principal basis.

Templates are compressed once per CTF factor; the per-image CTF modulation is
then a small linear combination of those factors.  The in-plane rotation
search is a circular cross-correlation over the angular index, done with
FFTs; displacements are searched over a fixed disk discretization applied to
the image before projection.
"""

from dataclasses import dataclass
from math import ceil

import numpy as np

from .grids import PolarGrid
from .imaging import Pose
from .modes import CTFFactorization, PrincipalBasis, image_scaling
from .polar import (BesselImage, PolarImage, bessel_to_polar,
                    translation_phase)
from .volume import EulerAngles, TemplateSet


@dataclass(frozen=True)
class DisplacementSet:
    """Discrete displacement candidates; row 0 is always (0, 0)."""

    radius: float
    points: np.ndarray  # [n, 2]

    def __post_init__(self):
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise ValueError("points must be [n, 2]")
        if not np.allclose(self.points[0], 0.0):
            raise ValueError("first point must be the origin")
        if np.any(np.hypot(self.points[:, 0], self.points[:, 1])
                  > self.radius + 1e-12):
            raise ValueError("points exceed the stated radius")

    @property
    def n(self) -> int:
        return self.points.shape[0]


def displacement_set(delta_bound: float) -> DisplacementSet:
    """Origin plus concentric rings at radii {1/3, 2/3, 1} x bound with
    {6, 12, 18} points (37 candidates); just the origin when the bound is 0.
    """
    if delta_bound < 0:
        raise ValueError("displacement bound must be nonnegative")
    pts = [(0.0, 0.0)]
    if delta_bound > 0:
        for frac, n in ((1.0 / 3.0, 6), (2.0 / 3.0, 12), (1.0, 18)):
            r = delta_bound * frac
            ang = 2.0 * np.pi * np.arange(n) / n
            pts.extend(zip(r * np.cos(ang), r * np.sin(ang)))
    return DisplacementSet(radius=float(delta_bound),
                           points=np.array(pts, dtype=float))


@dataclass(frozen=True)
class ProjectedTemplates:
    """Compressed templates per CTF factor: core[t, h', h, psi]."""

    grid: PolarGrid
    basis: PrincipalBasis
    fact: CTFFactorization
    alphas: np.ndarray
    betas: np.ndarray
    core: np.ndarray

    @property
    def T(self) -> int:
        return self.alphas.size


def project_templates(ts: TemplateSet, basis: PrincipalBasis,
                      fact: CTFFactorization) -> ProjectedTemplates:
    if basis.U.shape[0] != ts.grid.R or fact.u.shape[0] != ts.grid.R:
        raise ValueError("basis/CTF factors do not match the radial grid")
    vals = np.fft.ifft(ts.bessel, axis=2) / ts.grid.dpsi   # [T, R, Q] polar
    mod = (fact.u * fact.s).T * image_scaling(ts.grid)     # [H', R]
    core = np.einsum("rh,pr,trq->tphq", basis.U, mod, vals, optimize=True)
    return ProjectedTemplates(grid=ts.grid, basis=basis, fact=fact,
                              alphas=ts.alphas, betas=ts.betas, core=core)


@dataclass(frozen=True)
class CorrelationTable:
    """Best normalized correlation per (template, image) with its argmax."""

    Z: np.ndarray        # [T, N] real in [-1, 1]
    gamma: np.ndarray    # [T, N] in-plane rotation at the max
    delta: np.ndarray    # [T, N, 2] displacement at the max
    alphas: np.ndarray   # [T]
    betas: np.ndarray    # [T]

    @property
    def T(self) -> int:
        return self.Z.shape[0]

    @property
    def N(self) -> int:
        return self.Z.shape[1]


def correlate(images: list[PolarImage | BesselImage],
              tpl: ProjectedTemplates,
              disp: DisplacementSet) -> CorrelationTable:
    """Max over in-plane rotations and displacements of the normalized inner
    product between CTF-modulated compressed templates and each image."""
    if tpl.fact.v.shape[0] != len(images):
        raise ValueError("CTF factorization rows must match the image count")
    grid = tpl.grid
    T, Q, D = tpl.T, grid.Q, disp.n
    scalU = image_scaling(grid)[:, None] * tpl.basis.U     # [R, H]
    # undo candidate displacement d on the image: multiply by e^{+i d.k}
    undo = np.stack([np.conj(translation_phase(grid, d))
                     for d in disp.points])                # [D, R, Q]
    CFG = np.conj(np.fft.fft(tpl.core, axis=-1))           # [T, H', H, Q]
    gram = np.einsum("tphq,tnhq->tpn", np.conj(tpl.core), tpl.core,
                     optimize=True).real                   # [T, H', H']
    v = tpl.fact.v.real
    tnorm2 = np.maximum(np.einsum("jp,tpn,jn->tj", v, gram, v), 0.0)

    Z = np.empty((T, len(images)))
    gamma = np.empty((T, len(images)))
    delta = np.empty((T, len(images), 2))
    for j, im in enumerate(images):
        if im.grid != grid:
            raise ValueError("image grid does not match the templates")
        pv = im.values if isinstance(im, PolarImage) \
            else bessel_to_polar(im).values
        Yd = np.einsum("rh,drq->dhq", scalU, undo * pv[None], optimize=True)
        FY = np.fft.fft(Yd, axis=-1)
        ynorm2 = np.sum(np.abs(Yd) ** 2, axis=(1, 2))      # [D]
        FGj = np.einsum("tphq,p->thq", CFG, v[j], optimize=True)
        cross = np.einsum("thq,dhq->tdq", FGj, FY, optimize=True)
        c = np.fft.ifft(cross, axis=-1).real               # [T, D, Q] over g
        denom = np.sqrt(np.maximum(np.outer(tnorm2[:, j], ynorm2), 1e-300))
        zz = c / denom[:, :, None]
        flat = zz.reshape(T, -1)
        idx = np.argmax(flat, axis=1)
        Z[:, j] = flat[np.arange(T), idx]
        d_star, g_star = np.divmod(idx, Q)
        gamma[:, j] = g_star * grid.dpsi
        delta[:, j] = disp.points[d_star]
    return CorrelationTable(Z=Z, gamma=gamma, delta=delta,
                            alphas=tpl.alphas, betas=tpl.betas)


def _dense_ranks_desc(v: np.ndarray) -> np.ndarray:
    """Ranks 1..n by decreasing value, ties broken by lower index."""
    order = np.lexsort((np.arange(v.size), -v))
    r = np.empty(v.size, dtype=int)
    r[order] = np.arange(1, v.size + 1)
    return r


def template_ranks(Z: np.ndarray) -> np.ndarray:
    """Per image (column), rank of every template; each column is 1..T."""
    return np.stack([_dense_ranks_desc(Z[:, j]) for j in range(Z.shape[1])],
                    axis=1)


def image_ranks(Z: np.ndarray) -> np.ndarray:
    """Per template (row), rank of every image; each row is 1..N."""
    return np.stack([_dense_ranks_desc(Z[t]) for t in range(Z.shape[0])],
                    axis=0)


def _clip_delta(d: np.ndarray, delta_max: float | None) -> tuple[float, float]:
    if delta_max is not None:
        mag = float(np.hypot(d[0], d[1]))
        if mag > delta_max:
            d = d * (delta_max / mag)
    return (float(d[0]), float(d[1]))


def _pose_from_entry(table: CorrelationTable, t: int, j: int,
                     delta_max: float | None) -> Pose:
    tau = EulerAngles(float(table.alphas[t]), float(table.betas[t]),
                      float(table.gamma[t, j]))
    return Pose(tau=tau, delta=_clip_delta(table.delta[t, j], delta_max))


def ml_align(table: CorrelationTable, percentile: float, seed,
             delta_max: float | None = None) -> list[Pose]:
    """Per image, a uniform pick among the top-percentile templates."""
    if not (0.0 < percentile <= 100.0):
        raise ValueError("percentile must lie in (0, 100]")
    n_top = max(1, ceil(percentile * table.T / 100.0))
    poses = []
    for j in range(table.N):
        order = np.lexsort((np.arange(table.T), -table.Z[:, j]))[:n_top]
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), j]))
        t = int(order[rng.integers(n_top)])
        poses.append(_pose_from_entry(table, t, j, delta_max))
    return poses


def me_align(table: CorrelationTable, seed,
             delta_max: float | None = None) -> list[Pose]:
    """Greedy bijection: cycle a seed-permuted template order, giving each
    slot the unassigned image that correlates best with it."""
    T, N = table.T, table.N
    perm = np.random.default_rng(int(seed)).permutation(T)
    slots = perm[np.arange(N) % T]
    unassigned = np.ones(N, dtype=bool)
    poses: list[Pose | None] = [None] * N
    for t in slots:
        masked = np.where(unassigned, table.Z[t], -np.inf)
        j = int(np.argmax(masked))
        unassigned[j] = False
        poses[j] = _pose_from_entry(table, int(t), j, delta_max)
    return poses
