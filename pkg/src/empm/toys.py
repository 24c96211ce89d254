"""Model problems on the ring: alignment of complex points to a closed
curve (hidden angle per point) and multi-reference alignment of ring
functions (hidden rotation per observation).

These exercise the Bayesian-inference, argmax alternating, max-entropy
alternating, and combined strategies at a scale where exhaustive oracles
are cheap.
"""

import csv
import io
import warnings
from dataclasses import dataclass

import numpy as np

POSTERIOR_NODES = 256
ERROR_QUAD_NODES = 1024
DENSE_NODES = 4096
CONVERGENCE_TOL = 1e-6


@dataclass(frozen=True)
class RingFunction:
    """Band-limited closed curve G(psi) = sum_q c_q e^{i q psi}."""

    coeffs: np.ndarray   # [2 q_max + 1], orders -q_max..q_max

    def __post_init__(self):
        c = np.asarray(self.coeffs)
        if c.ndim != 1 or c.size % 2 != 1:
            raise ValueError("coefficients must be an odd-length vector")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")

    @property
    def q_max(self) -> int:
        return (self.coeffs.size - 1) // 2

    @property
    def orders(self) -> np.ndarray:
        return np.arange(-self.q_max, self.q_max + 1)

    def __call__(self, psi) -> np.ndarray:
        psi = np.asarray(psi, dtype=float)
        vals = np.exp(1j * np.multiply.outer(psi, self.orders)) @ self.coeffs
        return complex(vals) if psi.ndim == 0 else vals


def ring_values(g: RingFunction, psi: np.ndarray) -> np.ndarray:
    return np.exp(1j * np.outer(np.asarray(psi, float), g.orders)) @ g.coeffs


@dataclass(frozen=True)
class MSADataset:
    points: np.ndarray       # [N] complex observations
    psis: np.ndarray         # [N] hidden angles (ground truth)
    sigma: float
    beta: float

    def __post_init__(self):
        if self.sigma < 0 or self.beta < 0:
            raise ValueError("sigma and beta must be nonnegative")


def _random_ring(rng: np.random.Generator, q_max: int) -> RingFunction:
    n = 2 * q_max + 1
    c = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2.0)
    return RingFunction(coeffs=c)


def _tilted_angles(rng: np.random.Generator, n: int, beta: float
                   ) -> np.ndarray:
    """Inverse-CDF sampling from exp(beta cos psi) / (2 pi I0(beta))."""
    grid = np.linspace(0.0, 2.0 * np.pi, DENSE_NODES + 1)
    dens = np.exp(beta * np.cos(grid))
    cdf = np.concatenate([[0.0], np.cumsum(
        (dens[1:] + dens[:-1]) / 2.0 * np.diff(grid))])
    cdf /= cdf[-1]
    return np.interp(rng.uniform(size=n), cdf, grid)


def msa_simulate(q_max: int, n_points: int, sigma: float, beta: float,
                 lam: float, seed) -> tuple[RingFunction, RingFunction,
                                            MSADataset]:
    """Ground-truth curve, blended initial curve, and noisy point data."""
    if n_points < 1:
        raise ValueError("need at least one point")
    rng = np.random.default_rng(seed)
    g_true = _random_ring(rng, q_max)
    g_rand = _random_ring(rng, q_max)
    g_init = RingFunction(coeffs=lam * g_true.coeffs
                          + (1.0 - lam) * g_rand.coeffs)
    psis = _tilted_angles(rng, n_points, beta)
    eps = sigma * (rng.standard_normal(n_points)
                   + 1j * rng.standard_normal(n_points))
    pts = ring_values(g_true, psis) + eps
    return g_true, g_init, MSADataset(points=pts, psis=psis, sigma=sigma,
                                      beta=beta)


def _point_curve_dist2(points: np.ndarray, g: RingFunction) -> np.ndarray:
    """Squared distance from each point to the curve locus.

    Dense sampling to bracket the minimum, then a few Newton steps on the
    derivative of the squared distance (available in closed form for a
    band-limited curve).
    """
    phi = np.linspace(0.0, 2.0 * np.pi, DENSE_NODES, endpoint=False)
    curve = ring_values(g, phi)
    # |a - b|^2 = |a|^2 + |b|^2 - 2 Re(a conj(b))
    d2 = (np.abs(points)[:, None] ** 2 + np.abs(curve)[None, :] ** 2
          - 2.0 * np.real(np.outer(points, np.conj(curve))))
    best = d2.min(axis=1)
    # the curve can self-approach, so refine every local minimum per point
    local = (d2 <= np.roll(d2, 1, axis=1)) & (d2 <= np.roll(d2, -1, axis=1))
    rows, ks = np.nonzero(local)
    q = g.orders
    c1 = 1j * q * g.coeffs          # G'
    c2 = -(q * q) * g.coeffs        # G''
    x = phi[ks]
    p = points[rows]
    h = 2.0 * np.pi / DENSE_NODES
    for _ in range(6):
        E = np.exp(1j * np.outer(x, q))
        G = E @ g.coeffs
        Gp = E @ c1
        Gpp = E @ c2
        diff = G - p
        f1 = 2.0 * np.real(np.conj(diff) * Gp)
        f2 = 2.0 * (np.abs(Gp) ** 2 + np.real(np.conj(diff) * Gpp))
        step = np.where(f2 > 0, f1 / np.where(f2 > 0, f2, 1.0), 0.0)
        x = x - np.clip(step, -h, h)
    refined = np.abs(ring_values(g, x) - p) ** 2
    out = best.copy()
    np.minimum.at(out, rows, refined)
    return np.maximum(out, 0.0)


def msa_error(g_est: RingFunction, g_true: RingFunction) -> float:
    """Larger of the two one-sided integrated squared curve distances."""
    psi = np.linspace(0.0, 2.0 * np.pi, ERROR_QUAD_NODES, endpoint=False)
    dpsi = 2.0 * np.pi / ERROR_QUAD_NODES
    a = float(np.sum(_point_curve_dist2(ring_values(g_est, psi), g_true))
              * dpsi)
    b = float(np.sum(_point_curve_dist2(ring_values(g_true, psi), g_est))
              * dpsi)
    return max(a, b)


def _psi_nodes() -> np.ndarray:
    return np.linspace(0.0, 2.0 * np.pi, POSTERIOR_NODES, endpoint=False)


def msa_posterior(g_cur: RingFunction, points: np.ndarray,
                  sigma_est: float) -> np.ndarray:
    """Per-point posterior over the angle grid, rows sum to one."""
    if sigma_est <= 0:
        raise ValueError("sigma_est must be positive")
    psi = _psi_nodes()
    curve = ring_values(g_cur, psi)
    d2 = (np.abs(points)[:, None] ** 2 + np.abs(curve)[None, :] ** 2
          - 2.0 * np.real(np.outer(points, np.conj(curve))))
    logw = -d2 / (2.0 * sigma_est * sigma_est)
    logw -= logw.max(axis=1, keepdims=True)
    w = np.exp(logw)
    tot = w.sum(axis=1, keepdims=True)
    bad = ~np.isfinite(tot[:, 0]) | (tot[:, 0] == 0.0)
    if np.any(bad):
        warnings.warn(f"{int(bad.sum())} degenerate posteriors; "
                      "falling back to uniform")
        w[bad] = 1.0
        tot = w.sum(axis=1, keepdims=True)
    return w / tot


def _fit_ring(q_max: int, node_mass: np.ndarray,
              node_targets: np.ndarray) -> RingFunction:
    """Weighted band-limited least squares on the angle grid.

    node_mass[n] is the total posterior mass at node n; node_targets[n] the
    mass-weighted sum of the data assigned there.
    """
    psi = _psi_nodes()
    orders = np.arange(-q_max, q_max + 1)
    F = np.exp(1j * np.outer(psi, orders))
    A = F.conj().T @ (node_mass[:, None] * F)
    b = F.conj().T @ node_targets
    c, *_ = np.linalg.lstsq(A, b, rcond=None)
    return RingFunction(coeffs=c)


def msa_bi_step(g_cur: RingFunction, data: MSADataset,
                sigma_est: float) -> RingFunction:
    """One Bayesian step: posterior-weighted band-limited refit."""
    W = msa_posterior(g_cur, data.points, sigma_est)
    return _fit_ring(g_cur.q_max, W.sum(axis=0), W.T @ data.points)


def _one_hot(rows: int, cols: np.ndarray) -> np.ndarray:
    W = np.zeros((rows, POSTERIOR_NODES))
    W[np.arange(rows), cols] = 1.0
    return W


def msa_ml_step(g_cur: RingFunction, data: MSADataset) -> RingFunction:
    """Hard nearest-angle assignment followed by the same refit."""
    psi = _psi_nodes()
    curve = ring_values(g_cur, psi)
    d2 = (np.abs(data.points)[:, None] ** 2 + np.abs(curve)[None, :] ** 2
          - 2.0 * np.real(np.outer(data.points, np.conj(curve))))
    W = _one_hot(data.points.size, np.argmin(d2, axis=1))
    return _fit_ring(g_cur.q_max, W.sum(axis=0), W.T @ data.points)


def msa_me_step(g_cur: RingFunction, data: MSADataset,
                seed) -> RingFunction:
    """Max-entropy assignment: cycle a seed-permuted uniform angle list,
    each slot taking the unassigned point nearest to the curve there."""
    n = data.points.size
    psi = _psi_nodes()
    curve = ring_values(g_cur, psi)
    perm = np.random.default_rng(int(seed)).permutation(POSTERIOR_NODES)
    slots = perm[np.arange(n) % POSTERIOR_NODES]
    d2 = (np.abs(data.points)[:, None] ** 2 + np.abs(curve)[None, :] ** 2
          - 2.0 * np.real(np.outer(data.points, np.conj(curve))))
    unassigned = np.ones(n, dtype=bool)
    cols = np.empty(n, dtype=int)
    for s in slots:
        masked = np.where(unassigned, d2[:, s], np.inf)
        j = int(np.argmin(masked))
        unassigned[j] = False
        cols[j] = s
    W = _one_hot(n, cols)
    return _fit_ring(g_cur.q_max, W.sum(axis=0), W.T @ data.points)


STRATEGIES = ("BI", "ML-AM", "ME-AM", "EMPM")


def msa_strategy_run(strategy: str, g_init: RingFunction, data: MSADataset,
                     sigma_est: float, g_true: RingFunction,
                     max_iters: int = 128, seed=0
                     ) -> tuple[RingFunction, list[float]]:
    """Iterate one strategy until the error stalls (|dE| < 1e-6) or the
    iteration cap; returns the estimate and the per-iteration error trace.

    The combined strategy alternates hard-argmax and max-entropy
    half-steps and reports the higher of the two alternating errors.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    g = g_init
    trace: list[float] = []
    for it in range(max_iters):
        if strategy == "BI":
            g = msa_bi_step(g, data, sigma_est)
            e = msa_error(g, g_true)
        elif strategy == "ML-AM":
            g = msa_ml_step(g, data)
            e = msa_error(g, g_true)
        elif strategy == "ME-AM":
            g = msa_me_step(g, data, seed=(int(seed) << 10) + it)
            e = msa_error(g, g_true)
        else:
            g = msa_ml_step(g, data)
            e_ml = msa_error(g, g_true)
            g = msa_me_step(g, data, seed=(int(seed) << 10) + it)
            e = max(e_ml, msa_error(g, g_true))
        if trace and abs(e - trace[-1]) < CONVERGENCE_TOL:
            trace.append(e)
            break
        trace.append(e)
    return g, trace


# ---------------------------------------------------------------------------
# Ring-function alignment with hidden rotations (modes pick up phases).

@dataclass(frozen=True)
class MRADataset:
    observations: np.ndarray   # [N, 2 q_max + 1] rotated noisy mode vectors
    gammas: np.ndarray         # [N] hidden rotations (ground truth)
    sigma: float

    @property
    def q_max(self) -> int:
        return (self.observations.shape[1] - 1) // 2


def _rotate_modes(coeffs: np.ndarray, gamma, orders: np.ndarray
                  ) -> np.ndarray:
    """Rotation by gamma multiplies mode q by e^{-i q gamma}."""
    gamma = np.atleast_1d(np.asarray(gamma, float))
    return coeffs * np.exp(-1j * np.outer(gamma, orders))


def mra_simulate(q_max: int, n_obs: int, sigma: float, seed
                 ) -> tuple[RingFunction, MRADataset]:
    """Hidden-rotation data; the curve is normalized to unit mode norm so
    sigma is a noise-to-signal ratio."""
    rng = np.random.default_rng(seed)
    raw = _random_ring(rng, q_max)
    g_true = RingFunction(coeffs=raw.coeffs / np.linalg.norm(raw.coeffs))
    gammas = rng.uniform(0.0, 2.0 * np.pi, n_obs)
    obs = _rotate_modes(g_true.coeffs, gammas, g_true.orders)
    eps = sigma * (rng.standard_normal(obs.shape)
                   + 1j * rng.standard_normal(obs.shape))
    return g_true, MRADataset(observations=obs + eps, gammas=gammas,
                              sigma=sigma)


def mra_bi_step(g_cur: RingFunction, data: MRADataset,
                sigma_est: float) -> RingFunction:
    """Posterior over the rotation grid, then the weighted back-rotated
    average (the per-mode least-squares solution)."""
    if sigma_est <= 0:
        raise ValueError("sigma_est must be positive")
    gam = _psi_nodes()
    orders = g_cur.orders
    rots = np.exp(-1j * np.outer(gam, orders))        # [G, M] rotate by gam
    rotated = rots[None] * g_cur.coeffs[None, None]   # [1, G, M]
    d2 = np.sum(np.abs(data.observations[:, None, :] - rotated) ** 2,
                axis=2)                               # [N, G]
    logw = -d2 / (2.0 * sigma_est * sigma_est)
    logw -= logw.max(axis=1, keepdims=True)
    w = np.exp(logw)
    tot = w.sum(axis=1, keepdims=True)
    bad = ~np.isfinite(tot[:, 0]) | (tot[:, 0] == 0.0)
    if np.any(bad):
        warnings.warn(f"{int(bad.sum())} degenerate posteriors; "
                      "falling back to uniform")
        w[bad] = 1.0
        tot = w.sum(axis=1, keepdims=True)
    w = w / tot
    # undo each candidate rotation on the observation and average
    back = np.conj(rots)[None] * data.observations[:, None, :]
    c = np.einsum("ng,ngm->m", w, back) / data.observations.shape[0]
    return RingFunction(coeffs=c)


def mra_alignment_error(g_est: RingFunction, g_true: RingFunction) -> float:
    """Squared mode-space distance minimized over a global rotation."""
    orders = g_true.orders
    gam = np.linspace(0.0, 2.0 * np.pi, DENSE_NODES, endpoint=False)
    rots = g_est.coeffs[None, :] * np.exp(-1j * np.outer(gam, orders))
    d2 = np.sum(np.abs(rots - g_true.coeffs[None, :]) ** 2, axis=1)
    k = int(np.argmin(d2))
    f0, fm, fp = d2[k], d2[(k - 1) % gam.size], d2[(k + 1) % gam.size]
    denom = fm - 2.0 * f0 + fp
    h = 2.0 * np.pi / gam.size
    if denom > 0:
        g_star = gam[k] + h * (fm - fp) / (2.0 * denom)
        val = float(np.sum(np.abs(
            g_est.coeffs * np.exp(-1j * orders * g_star)
            - g_true.coeffs) ** 2))
        return min(float(f0), val)
    return float(f0)


def mra_experiment(sigma_true_grid, sigma_est_grid, trials: int, seed,
                   q_max: int = 8, n_obs: int = 2048,
                   max_iters: int = 64) -> list[dict]:
    """Noise-mismatch sweep: per cell, Bayesian refinement from a random
    start; error normalized so 1.0 is the distance from the truth to the
    constant function with the same mean."""
    if len(sigma_true_grid) == 0 or len(sigma_est_grid) == 0:
        raise ValueError("grids must be nonempty")
    rows = []
    for st in sigma_true_grid:
        for se in sigma_est_grid:
            for t in range(trials):
                cell_seed = np.random.SeedSequence(
                    [int(seed), int(1e6 * st), int(1e6 * se), t])
                g_true, data = mra_simulate(q_max, n_obs, float(st),
                                            cell_seed)
                rng = np.random.default_rng(cell_seed.spawn(1)[0])
                g = _random_ring(rng, q_max)
                denom = float(np.sum(np.abs(g_true.coeffs) ** 2)
                              - np.abs(g_true.coeffs[q_max]) ** 2)
                prev = None
                for _ in range(max_iters):
                    g = mra_bi_step(g, data, float(se))
                    err = mra_alignment_error(g, g_true) / denom
                    if prev is not None and abs(err - prev) \
                            < CONVERGENCE_TOL:
                        break
                    prev = err
                rows.append({"sigma_true": float(st),
                             "sigma_est_or_lambda_or_beta": float(se),
                             "strategy": "BI", "trial": t,
                             "error": err})
    return rows


def msa_experiment(sigma_grid, lambda_grid, strategies, trials: int, seed,
                   q_max: int = 8, n_points: int = 512, beta: float = 0.0,
                   max_iters: int = 32) -> list[dict]:
    """Initialization-blend sweep: per (sigma, lambda) cell and strategy,
    run from the blended start; matched noise estimate (sigma_est = sigma,
    floored for the Bayesian posterior)."""
    if len(sigma_grid) == 0 or len(lambda_grid) == 0:
        raise ValueError("grids must be nonempty")
    for s in strategies:
        if s not in STRATEGIES:
            raise ValueError(f"unknown strategy {s!r}")
    rows = []
    for st in sigma_grid:
        for lam in lambda_grid:
            for t in range(trials):
                cell_seed = np.random.SeedSequence(
                    [int(seed), int(1e6 * st), int(1e6 * lam), t])
                g_true, g_init, data = msa_simulate(
                    q_max, n_points, float(st), beta, float(lam), cell_seed)
                sigma_est = max(float(st), 1e-6)
                for strat in strategies:
                    _, trace = msa_strategy_run(
                        strat, g_init, data, sigma_est, g_true,
                        max_iters=max_iters,
                        seed=cell_seed.generate_state(1)[0] >> 1)
                    rows.append({"sigma_true": float(st),
                                 "sigma_est_or_lambda_or_beta": float(lam),
                                 "strategy": strat, "trial": t,
                                 "error": trace[-1]})
    return rows


CSV_HEADER = ["sigma_true", "sigma_est_or_lambda_or_beta", "strategy",
              "trial", "error"]


def sweep_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_HEADER)
    writer.writeheader()
    for r in rows:
        writer.writerow(r)
    return buf.getvalue()
