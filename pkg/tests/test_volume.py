import numpy as np
import pytest

from empm.grids import (PolarGrid, build_radial_quadrature, default_polar_grid,
                        sphere_grid)
from empm.polar import (PixelImage, image_to_polar, polar_to_bessel,
                        rotate_bessel)
from empm.sph import n_coeffs
from empm.volume import (EulerAngles, TemplateSet, VolumeSH, empty_coeffs,
                         enforce_caps, eval_volume_at, generate_templates,
                         rotate_volume, shell_values, slice_template,
                         volume_from_function)


def random_volume(radial, seed=0, l_cap=None):
    rng = np.random.default_rng(seed)
    from empm.grids import degree_cap
    from empm.sph import lm_arrays
    coeffs = empty_coeffs(radial)
    c = rng.standard_normal(coeffs.shape) + 1j * rng.standard_normal(coeffs.shape)
    coeffs[:] = c
    if l_cap is not None:
        ls, _ = lm_arrays(int(np.ceil(radial.nodes[-1]) + 2))
        coeffs[:, ls > l_cap] = 0.0
    coeffs = enforce_caps(radial, coeffs)
    return VolumeSH(radial=radial, coeffs=coeffs)


@pytest.fixture(scope="module")
def radial8():
    return build_radial_quadrature(8.0, 8)


@pytest.fixture(scope="module")
def grid8():
    return default_polar_grid(8.0)


class TestRotateVolume:
    def test_identity(self, radial8):
        v = random_volume(radial8)
        r = rotate_volume(v, EulerAngles(0.0, 0.0, 0.0))
        assert np.allclose(r.coeffs, v.coeffs, atol=1e-13)

    def test_norm_preserved(self, radial8):
        v = random_volume(radial8)
        r = rotate_volume(v, EulerAngles(0.3, 1.1, -0.7))
        a = np.sum(np.abs(v.coeffs) ** 2, axis=1)
        b = np.sum(np.abs(r.coeffs) ** 2, axis=1)
        assert np.allclose(a, b, rtol=1e-10)

    def test_inverse(self, radial8):
        v = random_volume(radial8)
        tau = EulerAngles(0.4, 0.9, 1.3)
        back = rotate_volume(rotate_volume(v, tau), tau.inverse())
        assert np.max(np.abs(back.coeffs - v.coeffs)) < 1e-10

    def test_resampling_oracle(self, radial8):
        # rotated coefficients must equal the original volume evaluated at
        # the pulled-back directions R(tau)^-1 khat
        v = random_volume(radial8, seed=3, l_cap=6)
        tau = EulerAngles(np.pi / 5, np.pi / 3, np.pi / 7)
        g = rotate_volume(v, tau)
        Rinv = tau.matrix().T
        for r in [0, 4, 7]:
            gr = sphere_grid(int(v.caps[r]))
            d = gr.directions().reshape(-1, 3)
            dd = d @ Rinv.T
            th = np.arccos(np.clip(dd[:, 2], -1, 1))
            ph = np.arctan2(dd[:, 1], dd[:, 0])
            want = eval_volume_at(v, r, th, ph)
            got = shell_values(g, r).reshape(-1)
            assert np.max(np.abs(got - want)) < 1e-8


class TestSliceTemplate:
    def test_spherical_volume_is_isotropic(self, radial8, grid8):
        coeffs = empty_coeffs(radial8)
        coeffs[:, 0] = 1.0 + np.arange(radial8.R)
        v = VolumeSH(radial=radial8, coeffs=coeffs)
        a = slice_template(v, EulerAngles(0.0, 0.0, 0.0), grid8)
        b = slice_template(v, EulerAngles(1.0, 0.7, 0.2), grid8)
        assert np.allclose(a.values, b.values, atol=1e-10)
        # ring values constant = coeff * Y00
        want = (1.0 + np.arange(radial8.R)) / np.sqrt(4 * np.pi)
        assert np.allclose(a.values.real, want[:, None], atol=1e-10)

    def test_inplane_rotation_consistency(self, radial8, grid8):
        v = random_volume(radial8, seed=5)
        gam = 0.83
        a = slice_template(v, EulerAngles(0.6, 1.1, gam), grid8)
        b0 = polar_to_bessel(slice_template(v, EulerAngles(0.6, 1.1, 0.0), grid8))
        b = rotate_bessel(b0, gam)
        from empm.polar import bessel_to_polar
        assert np.max(np.abs(a.values - bessel_to_polar(b).values)) < 1e-10

    def test_pointwise_oracle(self, radial8, grid8):
        # ring values = volume shells evaluated at Rz(a)Ry(b)Rz(-g) e(psi)
        v = random_volume(radial8, seed=6, l_cap=5)  # below Q/2, no truncation
        tau = EulerAngles(0.9, 0.5, 1.7)
        tpl = slice_template(v, tau, grid8)
        M = tau.matrix() @ np.diag([1, 1, 1])
        from empm.volume import rot_y, rot_z
        M = rot_z(tau.alpha) @ rot_y(tau.beta) @ rot_z(-tau.gamma)
        psi = grid8.psi
        e = np.stack([np.cos(psi), np.sin(psi), np.zeros_like(psi)], axis=-1)
        dirs = e @ M.T
        th = np.arccos(np.clip(dirs[:, 2], -1, 1))
        ph = np.arctan2(dirs[:, 1], dirs[:, 0])
        for r in [0, 3, 7]:
            want = eval_volume_at(v, r, th, ph)
            assert np.max(np.abs(tpl.values[r] - want)) < 1e-9

    def test_slice_theorem(self):
        # template equals the 2D transform of the real-space projection
        # along the viewing axis (3-Gaussian-blob volume, modest K)
        K = 12.0
        radial = build_radial_quadrature(K, 12)
        grid = default_polar_grid(K)
        blobs = [((0.15, 0.05, -0.1), 0.18), ((-0.2, 0.1, 0.15), 0.22),
                 ((0.0, -0.18, 0.0), 0.15)]

        def fhat(kx, ky, kz):
            out = np.zeros(np.broadcast(kx, ky, kz).shape, dtype=complex)
            for (cx, cy, cz), s in blobs:
                amp = (2 * np.pi * s * s) ** 1.5
                k2 = kx**2 + ky**2 + kz**2
                out += amp * np.exp(-(s * s) * k2 / 2.0) \
                    * np.exp(-1j * (kx * cx + ky * cy + kz * cz))
            return out

        v = volume_from_function(fhat, radial)
        tau = EulerAngles(0.7, 1.0, 0.0)
        tpl = slice_template(v, tau, grid)

        # real-space projection along the viewing axis on a pixel grid
        N = 96
        img = PixelImage(values=np.zeros((N, N)))
        y = img.centers()
        M = tau.matrix()
        u1, u2, n = M[:, 0], M[:, 1], M[:, 2]
        t = np.linspace(-1.5, 1.5, 301)
        dt = t[1] - t[0]
        proj = np.zeros((N, N))
        for (c, s) in blobs:
            c = np.array(c)
            pts1 = y[:, None, None] * u1[None, None, :]
            pts2 = y[None, :, None] * u2[None, None, :]
            base = pts1 + pts2 - c[None, None, :]
            for ti in t:
                p = base + ti * n[None, None, :]
                proj += np.exp(-np.sum(p * p, axis=-1) / (2 * s * s)) * dt
        p2d = image_to_polar(PixelImage(values=proj), grid)
        a, b = tpl.values.ravel(), p2d.values.ravel()
        corr = np.abs(np.vdot(a, b)) / (np.linalg.norm(a) * np.linalg.norm(b))
        assert corr >= 0.99


class TestGenerateTemplates:
    def test_counts_and_match(self, radial8, grid8):
        v = random_volume(radial8, seed=7)
        ts = generate_templates(v, grid8)
        g = sphere_grid(v.Lmax)
        assert ts.T == g.n_nodes
        # every template equals the one-off slice at its direction
        rng = np.random.default_rng(0)
        for t in rng.choice(ts.T, 5, replace=False):
            tpl = slice_template(
                v, EulerAngles(float(ts.alphas[t]), float(ts.betas[t]), 0.0),
                grid8)
            got = ts.polar(int(t)).values
            assert np.max(np.abs(got - tpl.values)) < 1e-9

    def test_direction_cap(self, radial8, grid8):
        v = random_volume(radial8, seed=8)
        ts = generate_templates(v, grid8, direction_cap=4)
        assert ts.T == sphere_grid(4).n_nodes

    def test_isotropic_volume(self, radial8, grid8):
        coeffs = empty_coeffs(radial8)
        coeffs[:, 0] = 2.0
        v = VolumeSH(radial=radial8, coeffs=coeffs)
        ts = generate_templates(v, grid8, direction_cap=3)
        assert np.max(np.abs(ts.bessel - ts.bessel[0][None])) < 1e-10

    def test_default_template_count_regression(self):
        # frozen regression: K=48 default construction
        radial = build_radial_quadrature(48.0, 48)
        from empm.grids import degree_cap
        L = degree_cap(radial.nodes[-1])
        assert L == 50
        assert sphere_grid(L).n_nodes == 51 * 102
