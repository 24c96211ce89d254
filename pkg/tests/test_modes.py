import numpy as np
import pytest

from empm.grids import build_radial_quadrature, default_polar_grid
from empm.imaging import (DistributionSpec, NoiseModel, ctf_eval, flat_ctf,
                          simulate_dataset)
from empm.modes import (CTFFactorization, KernelMatrix, ctf_svd,
                        empirical_kernel, estimated_kernel, image_scaling,
                        project_image, project_volume, select_modes,
                        translation_factors)
from empm.polar import polar_to_bessel
from empm.volume import VolumeSH, empty_coeffs
from tests.test_volume import random_volume


@pytest.fixture(scope="module")
def radial8():
    return build_radial_quadrature(8.0, 8)


@pytest.fixture(scope="module")
def grid8():
    return default_polar_grid(8.0)


class TestEmpiricalKernel:
    def test_pair_difference_identity(self, radial8, grid8):
        # u^T C u must equal pi times the mean squared angular-L2 distance
        # between compressed rings over all image pairs and all grid
        # rotations of each, computed by brute force with cyclic rolls.
        v = random_volume(radial8, seed=10, l_cap=5)
        imgs, _, _ = simulate_dataset(v, 16, DistributionSpec(),
                                      NoiseModel(0.2), grid8, seed=4)
        C = empirical_kernel([polar_to_bessel(im) for im in imgs]).C
        rng = np.random.default_rng(0)
        w = grid8.radial.weights2d
        Q = grid8.Q
        for _ in range(5):
            u = rng.standard_normal(grid8.R)
            u /= np.linalg.norm(u)
            f = np.stack([(u * np.sqrt(w)) @ im.values for im in imgs])
            rolled = np.stack([np.roll(f, g, axis=1) for g in range(Q)])
            flat = rolled.reshape(-1, Q)                     # [(Q*N), Q]
            mean_sq = np.mean(np.sum(np.abs(flat) ** 2, axis=1)) * grid8.dpsi
            fbar = np.mean(flat, axis=0)
            pair_mean = 2.0 * (mean_sq
                               - np.sum(np.abs(fbar) ** 2) * grid8.dpsi)
            quad = float(np.real(u @ C @ u))
            assert quad == pytest.approx(np.pi * pair_mean, rel=1e-10)

    def test_hermitian_psd(self, radial8, grid8):
        v = random_volume(radial8, seed=11, l_cap=4)
        imgs, _, _ = simulate_dataset(v, 8, DistributionSpec(),
                                      NoiseModel(0.1), grid8, seed=5)
        C = empirical_kernel([polar_to_bessel(im) for im in imgs]).C
        assert np.allclose(C, C.conj().T)
        lam = np.linalg.eigvalsh(C)
        assert lam.min() > -1e-10 * lam.max()

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            empirical_kernel([])


class TestTranslationFactors:
    def test_zero_sigma_is_unity(self, radial8):
        ep, em = translation_factors(radial8.nodes, None, 0.0)
        assert np.allclose(ep, 1.0, atol=1e-14)
        assert np.allclose(em, 1.0, atol=1e-14)

    def test_eminus_closed_form(self, radial8):
        # the half-integer Bessel combination reduces to a pure Gaussian
        s = 0.3
        _, em = translation_factors(radial8.nodes, None, s)
        want = np.exp(-s * s * radial8.nodes**2 / 2.0)
        assert np.allclose(em, want, rtol=1e-12)

    def test_eplus_gaussian_in_radial_gap(self, radial8):
        # E+(k,k') = exp(-s^2 (k-k')^2 / 2); unity on the diagonal
        s = 0.07
        k = radial8.nodes
        ep, _ = translation_factors(k, None, s)
        want = np.exp(-s * s * (k[:, None] - k[None, :]) ** 2 / 2.0)
        assert np.allclose(ep, want, rtol=1e-12)
        assert np.allclose(np.diag(ep), 1.0, atol=1e-14)


class TestEstimatedKernel:
    @pytest.mark.parametrize("sigma_delta", [0.0, 0.05])
    def test_matches_empirical_expectation(self, radial8, grid8, sigma_delta):
        # Monte Carlo: the data kernel of many noiseless uniform-pose images
        # converges to the volume-predicted kernel.
        v = random_volume(radial8, seed=12, l_cap=4)
        dist = DistributionSpec(delta_sigma=sigma_delta)
        imgs, _, _ = simulate_dataset(v, 4000, dist, NoiseModel(0.0),
                                      grid8, seed=6)
        C_emp = empirical_kernel([polar_to_bessel(im) for im in imgs]).C
        ctf_rows = ctf_eval(flat_ctf(), radial8.nodes)[None, :]
        C_est = estimated_kernel(v, sigma_delta, ctf_rows).C
        rel = np.linalg.norm(C_emp - C_est) / np.linalg.norm(C_est)
        assert rel < 0.05
        rng = np.random.default_rng(1)
        for _ in range(3):
            u = rng.standard_normal(grid8.R)
            u /= np.linalg.norm(u)
            a = float(np.real(u @ C_emp @ u))
            b = float(np.real(u @ C_est @ u))
            assert a == pytest.approx(b, rel=0.05)

    def test_negative_sigma_rejected(self, radial8):
        v = random_volume(radial8, seed=13, l_cap=2)
        with pytest.raises(ValueError):
            estimated_kernel(v, -0.1, np.ones((1, radial8.R)))


class TestSelectModes:
    def test_eigensolver_oracle(self):
        rng = np.random.default_rng(2)
        lam = np.array([4.0, 2.0, 1.0, 1e-6, 0.0, 0.0])
        V, _ = np.linalg.qr(rng.standard_normal((6, 6)))
        C = KernelMatrix(C=(V * lam) @ V.T)
        basis = select_modes(C, eps_tol=1e-3)
        assert basis.H == 3
        assert np.allclose(basis.eigenvalues, lam[:3], rtol=1e-10)
        assert np.allclose(basis.U.T @ basis.U, np.eye(3), atol=1e-12)
        assert np.allclose(C.C @ basis.U, basis.U * lam[:3], atol=1e-10)

    def test_threshold_keeps_all(self):
        C = KernelMatrix(C=np.diag([3.0, 2.0, 1.0]))
        assert select_modes(C, eps_tol=0.2).H == 3
        assert select_modes(C, eps_tol=0.5).H == 2

    def test_deterministic_sign(self):
        C = KernelMatrix(C=np.diag([2.0, 1.0]))
        U = select_modes(C, eps_tol=0.1).U
        assert U[0, 0] > 0 and U[1, 1] > 0

    def test_nonpositive_kernel_empty(self):
        basis = select_modes(KernelMatrix(C=-np.eye(4)), eps_tol=0.1)
        assert basis.H == 0


class TestCtfSvd:
    def test_identical_columns_rank_one(self, radial8):
        col = ctf_eval(flat_ctf(), radial8.nodes)
        A = np.tile(col[:, None], (1, 12))
        f = ctf_svd(A, eps_tol=1e-10)
        assert f.rank == 1
        approx = (f.u * f.s) @ f.v.T
        assert np.allclose(approx, A, atol=1e-12)

    def test_two_defocus_groups_rank_two(self, radial8):
        from empm.imaging import CTFParams
        c1 = ctf_eval(CTFParams(defocus=1.0), radial8.nodes)
        c2 = ctf_eval(CTFParams(defocus=2.5), radial8.nodes)
        A = np.stack([c1, c2, c1, c2, c1], axis=1)
        assert ctf_svd(A, eps_tol=1e-10).rank == 2

    def test_many_micrographs_low_rank(self, radial8):
        from empm.imaging import CTFParams
        # slowly varying family (small defocus spread) compresses well
        rng = np.random.default_rng(3)
        cols = [ctf_eval(CTFParams(defocus=d), radial8.nodes)
                for d in rng.uniform(0.01, 0.03, 30)]
        A = np.stack(cols, axis=1)
        f = ctf_svd(A, eps_tol=0.1)
        assert 1 <= f.rank <= 4
        approx = (f.u * f.s) @ f.v.T
        err = np.linalg.norm(approx - A) / np.linalg.norm(A)
        assert err <= 0.1

    def test_smallest_rank_property(self, radial8):
        from empm.imaging import CTFParams
        cols = [ctf_eval(CTFParams(defocus=d), radial8.nodes)
                for d in (1.0, 1.5, 2.0, 2.5)]
        A = np.stack(cols, axis=1)
        f = ctf_svd(A, eps_tol=0.05)
        if f.rank > 1:
            # one rank lower must violate the tolerance
            _, s, _ = np.linalg.svd(A)
            tail = np.sqrt(np.sum(s[f.rank - 1:] ** 2))
            assert tail > 0.05 * np.linalg.norm(A)


class TestProjection:
    def full_basis(self, R):
        return select_modes(KernelMatrix(C=np.eye(R)), eps_tol=0.5)

    def test_noise_whitening(self, radial8, grid8):
        # compressed noise has node-independent variance sigma_hat^2 per
        # component and uncorrelated rows
        zero = VolumeSH(radial=radial8, coeffs=empty_coeffs(radial8))
        noise = NoiseModel(0.4)
        dx = 2.0 / 64
        imgs, _, _ = simulate_dataset(zero, 3000, DistributionSpec(), noise,
                                      grid8, seed=7, dx=dx)
        basis = self.full_basis(grid8.R)
        ys = np.stack([project_image(basis, im).values for im in imgs])
        var = np.mean(np.abs(ys) ** 2, axis=(0, 2))       # per row h
        want = noise.sigma_hat2(dx)
        assert np.all(np.abs(var - want) <= 0.05 * want)
        cross = np.mean(ys[:, 0, :] * np.conj(ys[:, 3, :]))
        assert np.abs(cross) / want < 3.0 / np.sqrt(ys.shape[0] * grid8.Q)

    def test_norm_preserved_by_full_basis(self, radial8, grid8):
        v = random_volume(radial8, seed=14, l_cap=4)
        imgs, _, _ = simulate_dataset(v, 3, DistributionSpec(),
                                      NoiseModel(0.1), grid8, seed=8)
        basis = self.full_basis(grid8.R)
        for im in imgs:
            y = project_image(basis, im).values
            x = im.values * image_scaling(grid8)[:, None]
            assert np.linalg.norm(y) == pytest.approx(np.linalg.norm(x),
                                                      rel=1e-12)

    def test_bessel_and_polar_inputs_agree(self, radial8, grid8):
        v = random_volume(radial8, seed=15, l_cap=4)
        imgs, _, _ = simulate_dataset(v, 1, DistributionSpec(),
                                      NoiseModel(0.0), grid8, seed=9)
        basis = self.full_basis(grid8.R)
        a = project_image(basis, imgs[0]).values
        b = project_image(basis, polar_to_bessel(imgs[0])).values
        assert np.allclose(a, b, atol=1e-10)

    def test_project_volume_shape_and_scaling(self, radial8):
        v = random_volume(radial8, seed=16, l_cap=3)
        basis = self.full_basis(radial8.R)
        pv = project_volume(basis, v)
        assert pv.shape == (radial8.R, v.coeffs.shape[1])
        want = basis.U.T @ (v.coeffs * np.sqrt(radial8.weights2d)[:, None])
        assert np.allclose(pv, want)

    def test_grid_mismatch_rejected(self, radial8, grid8):
        small = select_modes(KernelMatrix(C=np.eye(4)), eps_tol=0.5)
        v = random_volume(radial8, seed=17, l_cap=2)
        imgs, _, _ = simulate_dataset(v, 1, DistributionSpec(),
                                      NoiseModel(0.0), grid8, seed=10)
        with pytest.raises(ValueError):
            project_image(small, imgs[0])
        with pytest.raises(ValueError):
            project_volume(small, v)
